#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "helpers.hpp"
#include "recon/data_io.hpp"
#include "recon/error.hpp"
#include "recon/sampling.hpp"
#include "recon/train_eval.hpp"

using namespace recon;
using namespace recon::nets;
using namespace recon::train;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

std::vector<DatasetRecord> Cohort(std::size_t n, std::size_t size, std::uint64_t seed, double acc = 4.0)
{
  std::vector<DatasetRecord> out;
  SensitivityMaps const maps = MakeCoils(2, size, size);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t const s = seed * 1000 + i;
    Phantom ph = MakePhantom(RandomizeSpec(DefaultBrainSpec(size, size), s));
    SamplingMask m = Gaussian2dMask(size, size, acc, 0.3, 0.08, s);
    DatasetRecord r = SimulateAcquisition(ph, maps, m, 0.02, s);
    r.id = "r" + std::to_string(100 + i);
    out.push_back(std::move(r));
  }
  return out;
}

ModelConfig Tiny(ModelKind kind)
{
  ModelConfig c = DefaultConfig(kind);
  c.rim.channels = 8;
  c.rim.iterations = 2;
  c.cascade.cascades = kind == ModelKind::Cirim || kind == ModelKind::Varnet ? 2 : 1;
  c.unet = {2, 4};
  return c;
}

} // namespace

TEST_CASE("loss weights")
{
  auto w = LossWeights(8);
  REQUIRE(w.size() == 8);
  CHECK(w.back() / w.front() == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(w.back() == doctest::Approx(1.0));
  for (std::size_t i = 1; i < 8; ++i) { CHECK(w[i] / w[i - 1] == doctest::Approx(std::pow(10.0, 1.0 / 7.0))); }
  CHECK(LossWeights(1) == std::vector<double>{1.0});
  auto p = LossWeights(8, true);
  CHECK(p.front() == doctest::Approx(10.0));
  CHECK(p.back() == doctest::Approx(1.0));
  CHECK_THROWS_AS(LossWeights(0), Error);
}

TEST_CASE("l1 loss on magnitudes")
{
  Rng rng(61);
  CTensor x = RandomComplex({6, 7}, rng);
  CHECK(L1Loss(x, x) == 0.0);
  CTensor shifted = x;
  for (auto &v : shifted.vec()) { v = std::polar(std::abs(v) + 0.1, std::arg(v) + 1.3); } // phase is ignored
  CHECK(L1Loss(shifted, x) == doctest::Approx(0.1));
  Tape t;
  CHECK(L1Loss(t.constant(shifted), x).real()[0] == doctest::Approx(0.1));
  CHECK(L1Loss(RandomComplex({6, 7}, rng), x) >= 0.0);
  CHECK_THROWS_AS(L1Loss(x, CTensor({6, 6})), Error);
}

TEST_CASE("ssim loss")
{
  Rng rng(62);
  CTensor ref = RandomComplex({10, 9}, rng);
  {
    Tape t;
    CHECK(SsimLoss(t.constant(ref), ref).real()[0] == doctest::Approx(0.0).epsilon(1e-12));
    double const v = SsimLoss(t.constant(RandomComplex({10, 9}, rng)), ref).real()[0];
    CHECK(v >= 0.0);
    CHECK(v <= 2.0);
    double const expect = 1.0 - Ssim(Magnitude(t.constant(ref).cplx()), Magnitude(ref));
    CHECK(expect == doctest::Approx(0.0).epsilon(1e-12));
  }
  ParameterStore store;
  store.add("x", RandomReal({2, 10, 9}, rng));
  double const err = GradientError(store, [&](Tape &t) {
    Var p = t.parameter(store, "x");
    return SsimLoss(ad::FromChannels(p), ref);
  });
  CHECK(err < 1e-4);
}

TEST_CASE("cirim loss is the weighted sum averaged over cascades")
{
  Rng rng(63);
  CTensor ref = RandomComplex({8, 8}, rng);
  Tape t;
  ForwardOutput out;
  std::vector<std::vector<CTensor>> raw(2, std::vector<CTensor>(3));
  for (std::size_t k = 0; k < 2; ++k) {
    out.estimates.emplace_back();
    for (std::size_t tau = 0; tau < 3; ++tau) {
      raw[k][tau] = RandomComplex({8, 8}, rng);
      out.estimates[k].push_back(t.constant(raw[k][tau]));
    }
  }
  out.image = out.estimates.back().back();
  auto w = LossWeights(3);
  double expect = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t tau = 0; tau < 3; ++tau) { expect += w[tau] * L1Loss(raw[k][tau], ref) / 2.0; }
  }
  CHECK(CirimLoss(out, ref, LossKind::L1).real()[0] == doctest::Approx(expect));

  ForwardOutput exact;
  exact.estimates = {{t.constant(ref), t.constant(ref)}};
  exact.image = exact.estimates[0][1];
  CHECK(CirimLoss(exact, ref, LossKind::L1).real()[0] == 0.0);
  ForwardOutput none;
  CHECK_THROWS_AS(CirimLoss(none, ref, LossKind::L1), Error);
}

TEST_CASE("adam")
{
  ParameterStore s;
  s.add("p", RTensor({3}, 0.5));
  s.zeroGrad();
  AdamStep(s);
  for (double v : s.entries()[0].value.vec()) { CHECK(v == 0.5); }

  ParameterStore f;
  f.add("p", RTensor({4}, 0.0));
  auto &e = f.entries()[0];
  e.grad = RTensor({4});
  e.grad[0] = 3.0;
  e.grad[1] = -1e-3;
  e.grad[2] = 1e4;
  AdamStep(f, {0.01});
  // first bias-corrected step: -lr * g / (|g| + eps)
  CHECK(e.value[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(e.value[1] == doctest::Approx(0.01).epsilon(1e-4));
  CHECK(e.value[2] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(e.value[3] == 0.0);
  for (double v : e.value.vec()) { CHECK(std::abs(v) <= 0.01 * (1 + 1e-8)); }

  // quadratic bowl 0.5 * sum c_i (p_i - t_i)^2
  ParameterStore b;
  b.add("p", RTensor({3}, 0.0));
  double const target[3] = {1.0, -0.5, 0.25}, curv[3] = {1.0, 4.0, 0.5};
  std::size_t steps = 0;
  auto &q = b.entries()[0];
  for (; steps < 2000; ++steps) {
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) { worst = std::max(worst, std::abs(q.value[i] - target[i])); }
    if (worst < 1e-3) { break; }
    for (int i = 0; i < 3; ++i) { q.grad[i] = curv[i] * (q.value[i] - target[i]); }
    AdamStep(b, {0.01});
  }
  CHECK(steps < 2000);
}

TEST_CASE("zero epochs keep the initial weights")
{
  auto recs = Cohort(3, 16, 1);
  Model m(Tiny(ModelKind::Cirim), 2);
  ParameterStore const before = m.params();
  int improved = 0;
  TrainOptions opt;
  opt.epochs = 0;
  opt.onImproved = [&](ParameterStore const &, std::size_t, double) { ++improved; };
  TrainResult r = Train(m, recs, opt);
  CHECK(r.log.empty());
  CHECK(improved == 1);
  CHECK(r.bestEpoch == -1);
  CHECK(r.steps == 0);
  CHECK(r.best.entries()[0].value == before.entries()[0].value);
  CHECK(TrainLogCsv(r.log) == "epoch,split,loss,ssim\r\n");
  CHECK_THROWS_AS(Train(m, {}, opt), Error);
}

TEST_CASE("training is deterministic and splits off a validation set")
{
  auto recs = Cohort(5, 16, 2);
  TrainOptions opt;
  opt.epochs = 2;
  opt.seed = 9;
  Model a(Tiny(ModelKind::Cirim), 3), b(Tiny(ModelKind::Cirim), 3);
  TrainResult ra = Train(a, recs, opt);
  std::reverse(recs.begin(), recs.end()); // ordering comes from ids
  TrainResult rb = Train(b, recs, opt);
  CHECK(TrainLogCsv(ra.log) == TrainLogCsv(rb.log));
  REQUIRE(ra.log.size() == 4);
  CHECK(ra.log[0].split == "train");
  CHECK(ra.log[1].split == "val");
  CHECK(ra.steps == 8); // 4 training records x 2 epochs
}

TEST_CASE("training loss decreases for every family")
{
  auto recs = Cohort(5, 24, 3);
  for (auto kind : {ModelKind::Cirim, ModelKind::Rim, ModelKind::Varnet}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      Model m(Tiny(kind), seed);
      TrainOptions opt;
      opt.epochs = 6;
      opt.seed = seed;
      opt.valFraction = 0.0;
      TrainResult r = Train(m, recs, opt);
      REQUIRE(r.log.size() == 6);
      CAPTURE(ModelKindName(kind));
      CAPTURE(seed);
      CHECK(r.log[5].loss < r.log[0].loss);
    }
  }
}

TEST_CASE("non-finite data aborts training")
{
  auto recs = Cohort(2, 16, 4);
  for (auto &r : recs) {
    std::size_t i = 0;
    while (r.mask.keep[i] == 0.0) { ++i; }
    r.y.samples[i] = Cx(std::numeric_limits<double>::quiet_NaN(), 0.0);
  }
  Model m(Tiny(ModelKind::Rim), 1);
  TrainOptions opt;
  opt.epochs = 1;
  try {
    Train(m, recs, opt);
    FAIL("expected divergence");
  } catch (Error const &e) {
    CHECK(e.code() == ErrorCode::Diverged);
  }
}

TEST_CASE("evaluation harness")
{
  auto recs = Cohort(3, 32, 5);
  Method identity{"oracle", [](DatasetRecord const &r) { return r.reference; }};
  EvalOptions opt;
  opt.dataset = "desk";
  auto rows = Evaluate({identity, CsMethod()}, recs, opt);
  REQUIRE(rows.size() == 3 * 3 + 3);
  CHECK(rows[0].method == "zerofill");
  CHECK(rows[1].method == "oracle");
  CHECK(rows[2].method == "cs");
  CHECK(rows[0].id == recs[0].id);
  CHECK(rows[3].id == recs[1].id);
  CHECK(rows[9].id == "mean");
  CHECK(rows[1].m.ssim == doctest::Approx(1.0));
  CHECK(std::isinf(rows[1].m.psnrDb));
  for (auto const &r : rows) {
    CHECK(r.wallMs == 0.0);
    CHECK(r.dataset == "desk");
    CHECK(r.acc == doctest::Approx(4.0).epsilon(0.01));
    CHECK(std::isfinite(r.m.wa));
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < 3; ++i) { mean += rows[3 * i + 2].m.ssim / 3.0; }
  CHECK(rows[11].m.ssim == doctest::Approx(mean));

  opt.jobs = 3;
  CHECK(io::MetricsCsv(Evaluate({identity, CsMethod()}, recs, opt)) == io::MetricsCsv(rows));

  auto single = Evaluate({ZeroFillMethod()}, recs, {});
  REQUIRE(single.size() == 4);
  for (auto const &r : single) { CHECK(r.m.wa == doctest::Approx(2.0)); }
}

TEST_CASE("record directories")
{
  fs::path dir = fs::temp_directory_path() / ("recon_eval_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto recs = Cohort(3, 16, 6);
  for (std::size_t i = 0; i < 3; ++i) { io::WriteRecord((dir / (std::to_string(2 - i) + ".cks")).string(), recs[i]); }
  auto files = ListRecords(dir.string());
  REQUIRE(files.size() == 3);
  CHECK(fs::path(files[0]).filename() == "0.cks");
  auto loaded = LoadRecords(dir.string());
  CHECK(loaded[0].id == recs[2].id);
  fs::remove_all(dir);
  CHECK_THROWS_AS(LoadRecords(dir.string()), Error);
}
