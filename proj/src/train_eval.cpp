#include "recon/train_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <thread>

#include "recon/metrics.hpp"
#include "recon/rng.hpp"

namespace recon::train {

std::vector<double> LossWeights(std::size_t T, bool printed)
{
  Require(T >= 1, ErrorCode::InvalidArgument, "need at least one iteration");
  if (T == 1) { return {1.0}; }
  std::vector<double> w(T);
  double const den = static_cast<double>(T - 1);
  for (std::size_t tau = 1; tau <= T; ++tau) {
    double const e = (static_cast<double>(tau) - static_cast<double>(T)) / den;
    w[tau - 1] = std::pow(10.0, printed ? -e : e);
  }
  return w;
}

Var L1Loss(Var xHat, CTensor const &ref)
{
  RequireSameShape(xHat.shape(), ref.shape(), "l1 loss");
  Var r = xHat.tape()->constant(Magnitude(ref));
  return ad::Mean(ad::Abs(ad::Sub(ad::CAbs(xHat), r)));
}

double L1Loss(CTensor const &xHat, CTensor const &ref)
{
  Tape t(false);
  return L1Loss(t.constant(xHat), ref).real()[0];
}

Var SsimLoss(Var xHat, CTensor const &ref)
{
  RequireSameShape(xHat.shape(), ref.shape(), "ssim loss");
  Tape &t = *xHat.tape();
  std::size_t const win = 7;
  RTensor const rm = Magnitude(ref);
  double const L = *std::max_element(rm.vec().begin(), rm.vec().end());
  double const c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  double const cov = 49.0 / 48.0;

  Var x = ad::CAbs(xHat);
  Var y = t.constant(rm);
  Var mx = ad::BoxMeanValid(x, win);
  Var my = ad::BoxMeanValid(y, win);
  Var vx = ad::Scale(ad::Sub(ad::BoxMeanValid(ad::Mul(x, x), win), ad::Mul(mx, mx)), cov);
  Var vy = ad::Scale(ad::Sub(ad::BoxMeanValid(ad::Mul(y, y), win), ad::Mul(my, my)), cov);
  Var vxy = ad::Scale(ad::Sub(ad::BoxMeanValid(ad::Mul(x, y), win), ad::Mul(mx, my)), cov);
  Var num = ad::Mul(ad::AddScalar(ad::Scale(ad::Mul(mx, my), 2.0), c1), ad::AddScalar(ad::Scale(vxy, 2.0), c2));
  Var den = ad::Mul(ad::AddScalar(ad::Add(ad::Mul(mx, mx), ad::Mul(my, my)), c1), ad::AddScalar(ad::Add(vx, vy), c2));
  return ad::AddScalar(ad::Scale(ad::Mean(ad::Div(num, den)), -1.0), 1.0);
}

char const *LossKindName(LossKind k)
{
  switch (k) {
  case LossKind::L1: return "l1";
  case LossKind::Ssim: return "ssim";
  case LossKind::Auto: return "auto";
  }
  return "auto";
}

LossKind ParseLossKind(std::string const &s)
{
  if (s == "l1") { return LossKind::L1; }
  if (s == "ssim") { return LossKind::Ssim; }
  if (s == "auto") { return LossKind::Auto; }
  Fail(ErrorCode::InvalidArgument, "unknown loss '" + s + "'");
}

Var CirimLoss(nets::ForwardOutput const &out, CTensor const &ref, LossKind loss, bool printedWeights)
{
  Require(loss != LossKind::Auto, ErrorCode::InvalidArgument, "loss kind must be resolved before use");
  Require(!out.estimates.empty(), ErrorCode::Contract, "no estimates to score");
  std::size_t const T = out.estimates.front().size();
  auto const w = LossWeights(T, printedWeights);
  Var total;
  for (auto const &cascade : out.estimates) {
    Require(cascade.size() == T, ErrorCode::Contract, "every cascade must report the same number of estimates");
    for (std::size_t tau = 0; tau < T; ++tau) {
      Var l = loss == LossKind::L1 ? L1Loss(cascade[tau], ref) : SsimLoss(cascade[tau], ref);
      l = ad::Scale(l, w[tau]);
      total = total.tape() ? ad::Add(total, l) : l;
    }
  }
  return ad::Scale(total, 1.0 / static_cast<double>(out.estimates.size()));
}

void AdamStep(ParameterStore &params, AdamOptions const &opt)
{
  long const t = ++params.adamSteps;
  double const bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  double const bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  for (auto &e : params.entries()) {
    Require(e.grad.shape() == e.value.shape(), ErrorCode::Contract, "parameter '" + e.name + "' has no gradient");
    if (e.m.shape() != e.value.shape()) {
      e.m = RTensor(e.value.shape());
      e.v = RTensor(e.value.shape());
    }
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      double const g = e.grad[i];
      e.m[i] = opt.beta1 * e.m[i] + (1.0 - opt.beta1) * g;
      e.v[i] = opt.beta2 * e.v[i] + (1.0 - opt.beta2) * g * g;
      e.value[i] -= opt.lr * (e.m[i] / bc1) / (std::sqrt(e.v[i] / bc2) + opt.eps);
    }
  }
}

nets::Problem ProblemOf(DatasetRecord const &r) { return {r.y, r.maps, r.mask}; }

namespace {

struct Scored
{
  double loss;
  double ssim;
};

Scored Score(nets::Model &model, DatasetRecord const &r, LossKind loss, bool printed)
{
  Tape tape(false);
  auto const out = model.forward(tape, ProblemOf(r));
  double const l = CirimLoss(out, r.reference, loss, printed).real()[0];
  return {l, Ssim(Magnitude(out.image.cplx()), Magnitude(r.reference))};
}

} // namespace

TrainResult Train(nets::Model &model, std::vector<DatasetRecord> records, TrainOptions const &opt)
{
  Require(!records.empty(), ErrorCode::InvalidArgument, "training needs at least one record");
  std::stable_sort(records.begin(), records.end(), [](auto const &a, auto const &b) { return a.id < b.id; });
  auto const nVal = static_cast<std::size_t>(std::lround(opt.valFraction * static_cast<double>(records.size())));
  std::size_t const nTrain = records.size() - std::min(nVal, records.size() - 1);
  LossKind loss = opt.loss;
  if (loss == LossKind::Auto) {
    loss = records.front().mask.kind == MaskKind::Equidistant1d ? LossKind::Ssim : LossKind::L1;
  }

  auto validate = [&](std::size_t begin, std::size_t end) {
    Scored s{0.0, 0.0};
    for (std::size_t i = begin; i < end; ++i) {
      auto const r = Score(model, records[i], loss, opt.printedWeights);
      s.loss += r.loss;
      s.ssim += r.ssim;
    }
    double const n = static_cast<double>(end - begin);
    return Scored{s.loss / n, s.ssim / n};
  };
  bool const hasVal = nTrain < records.size();
  auto selection = [&] { return hasVal ? validate(nTrain, records.size()) : validate(0, nTrain); };

  TrainResult res;
  res.best = model.params();
  res.bestLoss = selection().loss;
  if (opt.onImproved) { opt.onImproved(res.best, 0, res.bestLoss); }

  Rng rng(opt.seed);
  std::vector<std::size_t> order(nTrain);
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    for (std::size_t i = 0; i < nTrain; ++i) { order[i] = i; }
    for (std::size_t i = nTrain; i > 1; --i) { std::swap(order[i - 1], order[rng.below(i)]); }

    Scored tr{0.0, 0.0};
    for (std::size_t idx : order) {
      auto const &rec = records[idx];
      model.params().zeroGrad();
      Tape tape;
      auto const out = model.forward(tape, ProblemOf(rec));
      Var l = CirimLoss(out, rec.reference, loss, opt.printedWeights);
      double const lv = l.real()[0];
      Require(std::isfinite(lv), ErrorCode::Diverged,
              "non-finite loss at epoch " + std::to_string(e) + " on record '" + rec.id + "'");
      tape.backward(l);
      AdamStep(model.params(), opt.adam);
      model.clampRecurrent();
      ++res.steps;
      tr.loss += lv;
      tr.ssim += Ssim(Magnitude(out.image.cplx()), Magnitude(rec.reference));
    }
    EpochLog const trainRow{e, "train", tr.loss / nTrain, tr.ssim / nTrain};
    res.log.push_back(trainRow);
    if (opt.onEpoch) { opt.onEpoch(trainRow); }

    Scored const val = selection();
    if (hasVal) {
      res.log.push_back({e, "val", val.loss, val.ssim});
      if (opt.onEpoch) { opt.onEpoch(res.log.back()); }
    }
    if (val.loss < res.bestLoss) {
      res.bestLoss = val.loss;
      res.bestEpoch = static_cast<long>(e);
      res.best = model.params();
      if (opt.onImproved) { opt.onImproved(res.best, e, val.loss); }
    }
  }
  return res;
}

std::string TrainLogCsv(std::vector<EpochLog> const &log)
{
  std::ostringstream os;
  os << "epoch,split,loss,ssim\r\n";
  for (auto const &r : log) {
    os << r.epoch << ',' << r.split << ',' << io::FormatNumber(r.loss, 8) << ',' << io::FormatNumber(r.ssim, 6)
       << "\r\n";
  }
  return os.str();
}

// ---- evaluation --------------------------------------------------------------

Method ZeroFillMethod()
{
  return {"zerofill", [](DatasetRecord const &r) { return ZeroFilled(r.y, r.maps, r.mask); }};
}

Method CsMethod(CsOptions const &opt)
{
  return {"cs", [opt](DatasetRecord const &r) { return CsL1Wavelet(r.y, r.maps, r.mask, opt).image; }};
}

Method ModelMethod(std::string name, nets::Model const &model)
{
  auto shared = std::make_shared<nets::Model const>(model);
  return {std::move(name), [shared](DatasetRecord const &r) {
            nets::Model m = *shared;
            return m.reconstruct(ProblemOf(r));
          }};
}

namespace {

void FillWa(std::vector<io::MetricsRow *> const &rows)
{
  std::vector<NoiseTriple> triples;
  for (auto *r : rows) {
    if (!std::isfinite(r->m.cr) || !std::isfinite(r->m.wmn) || !std::isfinite(r->m.bgn)) { return; }
    triples.push_back({r->m.cr, r->m.wmn, r->m.bgn});
  }
  try {
    auto const wa = WeightedAverage(triples);
    for (std::size_t i = 0; i < rows.size(); ++i) { rows[i]->m.wa = wa[i]; }
  } catch (Error const &) {
    // degenerate cohort (non-positive maxima): WA stays NaN
  }
}

double MeanOf(std::vector<double> const &v)
{
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isnan(x)) { continue; }
    s += x;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(n);
}

} // namespace

std::vector<io::MetricsRow> Evaluate(std::vector<Method> methods, std::vector<DatasetRecord> const &records,
                                     EvalOptions const &opt)
{
  Require(!records.empty(), ErrorCode::InvalidArgument, "evaluation needs at least one record");
  if (std::none_of(methods.begin(), methods.end(), [](auto const &m) { return m.name == "zerofill"; })) {
    methods.insert(methods.begin(), ZeroFillMethod());
  }
  std::size_t const nm = methods.size(), nr = records.size();
  std::vector<io::MetricsRow> rows(nr * nm);
  std::vector<std::exception_ptr> errors(nr);

  auto work = [&](std::size_t ri) {
    try {
      auto const &rec = records[ri];
      for (std::size_t mi = 0; mi < nm; ++mi) {
        auto const t0 = std::chrono::steady_clock::now();
        ComplexImage const img = methods[mi].run(rec);
        auto const t1 = std::chrono::steady_clock::now();
        auto &row = rows[ri * nm + mi];
        row.id = rec.id;
        row.method = methods[mi].name;
        row.dataset = opt.dataset;
        row.acc = rec.mask.requestedAcceleration;
        row.m = ComputeMetrics({&img, &rec.reference, &rec.lesion, &rec.wm, &rec.y, &rec.mask});
        row.wallMs = opt.timing ? std::chrono::duration<double, std::milli>(t1 - t0).count() : 0.0;
      }
    } catch (...) {
      errors[ri] = std::current_exception();
    }
  };
  std::size_t const jobs = std::clamp<std::size_t>(opt.jobs, 1, nr);
  if (jobs == 1) {
    for (std::size_t i = 0; i < nr; ++i) { work(i); }
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) {
      pool.emplace_back([&, j] {
        for (std::size_t i = j; i < nr; i += jobs) { work(i); }
      });
    }
    for (auto &t : pool) { t.join(); }
  }
  for (auto const &e : errors) {
    if (e) { std::rethrow_exception(e); }
  }

  for (std::size_t ri = 0; ri < nr; ++ri) {
    std::vector<io::MetricsRow *> cohort;
    for (std::size_t mi = 0; mi < nm; ++mi) { cohort.push_back(&rows[ri * nm + mi]); }
    FillWa(cohort);
  }

  std::vector<io::MetricsRow> means(nm);
  for (std::size_t mi = 0; mi < nm; ++mi) {
    std::vector<double> ssim, psnr, cr, wmn, bgn, snr, ms, acc;
    for (std::size_t ri = 0; ri < nr; ++ri) {
      auto const &m = rows[ri * nm + mi];
      ssim.push_back(m.m.ssim);
      psnr.push_back(m.m.psnrDb);
      cr.push_back(m.m.cr);
      wmn.push_back(m.m.wmn);
      bgn.push_back(m.m.bgn);
      snr.push_back(m.m.snr);
      ms.push_back(m.wallMs);
      acc.push_back(m.acc);
    }
    auto &r = means[mi];
    r.id = "mean";
    r.method = methods[mi].name;
    r.dataset = opt.dataset;
    r.acc = MeanOf(acc);
    r.m.ssim = MeanOf(ssim);
    r.m.psnrDb = MeanOf(psnr);
    r.m.cr = MeanOf(cr);
    r.m.wmn = MeanOf(wmn);
    r.m.bgn = MeanOf(bgn);
    r.m.snr = MeanOf(snr);
    r.wallMs = MeanOf(ms);
  }
  std::vector<io::MetricsRow *> cohort;
  for (auto &r : means) { cohort.push_back(&r); }
  FillWa(cohort);
  rows.insert(rows.end(), means.begin(), means.end());
  return rows;
}

std::vector<std::string> ListRecords(std::string const &dir)
{
  namespace fs = std::filesystem;
  Require(fs::is_directory(dir), ErrorCode::Io, "'" + dir + "' is not a directory");
  std::vector<std::string> out;
  for (auto const &e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".cks") { out.push_back(e.path().string()); }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<DatasetRecord> LoadRecords(std::string const &dir)
{
  std::vector<DatasetRecord> out;
  for (auto const &p : ListRecords(dir)) {
    io::Container c = io::ReadContainer(p);
    if (c.kind != "record") { continue; }
    out.push_back(io::RecordFromContainer(c));
    if (out.back().id.empty()) { out.back().id = std::filesystem::path(p).stem().string(); }
  }
  Require(!out.empty(), ErrorCode::Io, "no records found in '" + dir + "'");
  return out;
}

} // namespace recon::train
