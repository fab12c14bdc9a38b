#include "recon/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "recon/rng.hpp"

namespace recon {

namespace {

SamplingMask EmptyMask(std::size_t h, std::size_t w, MaskKind kind, double acceleration, std::uint64_t seed)
{
  Require(h >= 1 && w >= 1, ErrorCode::InvalidArgument, "mask dims must be positive");
  SamplingMask m;
  m.height = h;
  m.width = w;
  m.keep = RTensor({h, w});
  m.kind = kind;
  m.requestedAcceleration = acceleration;
  m.seed = seed;
  return m;
}

double NormalizedRadius(std::size_t h, std::size_t w, std::size_t r, std::size_t c)
{
  double const dy = (static_cast<double>(r) - static_cast<double>(h / 2)) / (static_cast<double>(h) / 2.0);
  double const dx = (static_cast<double>(c) - static_cast<double>(w / 2)) / (static_cast<double>(w) / 2.0);
  return std::sqrt(dy * dy + dx * dx);
}

} // namespace

bool InAcsEllipse(std::size_t h, std::size_t w, double acsFrac, std::size_t r, std::size_t c)
{
  if (acsFrac <= 0.0) { return false; }
  double const rho = NormalizedRadius(h, w, r, c);
  return rho <= acsFrac;
}

SamplingMask Gaussian2dMask(std::size_t h, std::size_t w, double acceleration, double fwhmRel, double acsFrac,
                            std::uint64_t seed)
{
  Require(acceleration > 1.0 && std::isfinite(acceleration), ErrorCode::InvalidArgument,
          "gaussian2d acceleration must be > 1");
  Require(fwhmRel > 0.0 && fwhmRel <= 2.0, ErrorCode::InvalidArgument, "gaussian2d fwhm must be in (0, 2]");
  Require(acsFrac >= 0.0 && acsFrac < 1.0, ErrorCode::InvalidArgument, "gaussian2d acs fraction must be in [0, 1)");
  SamplingMask m = EmptyMask(h, w, MaskKind::Gaussian2d, acceleration, seed);
  m.params = {{"fwhm", fwhmRel}, {"acs_frac", acsFrac}};

  auto const budget = static_cast<std::size_t>(std::llround(static_cast<double>(h * w) / acceleration));
  Require(budget >= 1, ErrorCode::InvalidArgument, "acceleration leaves no samples");

  double const fwhmToSigma = 1.0 / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  double const sy = fwhmRel * static_cast<double>(h) * fwhmToSigma;
  double const sx = fwhmRel * static_cast<double>(w) * fwhmToSigma;

  std::size_t acs = 0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (InAcsEllipse(h, w, acsFrac, r, c)) {
        m.keep(r, c) = 1.0;
        ++acs;
      }
    }
  }
  Require(acs <= budget, ErrorCode::InvalidArgument,
          "acceleration " + std::to_string(acceleration) + " is incompatible with the ACS ellipse (" +
            std::to_string(acs) + " points exceed a budget of " + std::to_string(budget) + ")");

  // Gumbel-top-k over the log-density draws the remaining points without replacement.
  struct Key
  {
    double key;
    std::size_t index;
  };
  std::vector<Key> keys;
  keys.reserve(h * w - acs);
  Rng rng(seed);
  for (std::size_t r = 0; r < h; ++r) {
    double const dy = static_cast<double>(r) - static_cast<double>(h / 2);
    for (std::size_t c = 0; c < w; ++c) {
      double const g = rng.gumbel();
      if (m.keep(r, c) != 0.0) { continue; }
      double const dx = static_cast<double>(c) - static_cast<double>(w / 2);
      double const logp = -0.5 * (dy * dy / (sy * sy) + dx * dx / (sx * sx));
      keys.push_back({logp + g, r * w + c});
    }
  }
  std::size_t const want = budget - acs;
  auto better = [](Key const &a, Key const &b) { return a.key > b.key || (a.key == b.key && a.index < b.index); };
  if (want > 0) {
    std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(want - 1), keys.end(), better);
    for (std::size_t i = 0; i < want; ++i) { m.keep[keys[i].index] = 1.0; }
  }
  return m;
}

SamplingMask Equidistant1dMask(std::size_t h, std::size_t w, double acceleration, double centerFrac,
                               OffsetPolicy offset, std::uint64_t seed)
{
  Require(acceleration >= 2.0 && std::floor(acceleration) == acceleration, ErrorCode::InvalidArgument,
          "equidistant1d acceleration must be an integer >= 2");
  Require(centerFrac >= 0.0 && centerFrac < 1.0, ErrorCode::InvalidArgument,
          "equidistant1d center fraction must be in [0, 1)");
  SamplingMask m = EmptyMask(h, w, MaskKind::Equidistant1d, acceleration, seed);
  auto const step = static_cast<std::size_t>(acceleration);
  std::size_t const start = offset == OffsetPolicy::Random ? static_cast<std::size_t>(Rng(seed).below(step)) : 0;
  auto const band = static_cast<std::size_t>(std::llround(centerFrac * static_cast<double>(w)));
  std::size_t const bandBegin = w / 2 - std::min(w / 2, band / 2);
  m.params = {{"center_frac", centerFrac}, {"center_lines", static_cast<double>(band)},
              {"offset", static_cast<double>(start)}};
  for (std::size_t c = 0; c < w; ++c) {
    bool const inBand = c >= bandBegin && c < bandBegin + band;
    bool const onGrid = c >= start && (c - start) % step == 0;
    if (!inBand && !onGrid) { continue; }
    for (std::size_t r = 0; r < h; ++r) { m.keep(r, c) = 1.0; }
  }
  return m;
}

double PoissonRadius(std::size_t h, std::size_t w, double scale, double growth, std::size_t r, std::size_t c)
{
  return scale * (1.0 + growth * NormalizedRadius(h, w, r, c));
}

namespace {

/// Greedy dart throwing over a fixed candidate order; returns the number of kept points.
std::size_t ThrowDarts(std::size_t h, std::size_t w, double scale, double growth,
                       std::vector<std::size_t> const &order, std::vector<std::uint8_t> const &acs,
                       std::vector<std::uint8_t> &kept)
{
  std::vector<double> radius(h * w);
  double rmax = 0.0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      radius[r * w + c] = PoissonRadius(h, w, scale, growth, r, c);
      rmax = std::max(rmax, radius[r * w + c]);
    }
  }
  std::fill(kept.begin(), kept.end(), std::uint8_t{0});
  std::vector<std::uint8_t> disc(h * w, 0); // accepted non-ACS points
  auto const reach = static_cast<std::ptrdiff_t>(std::ceil(rmax));
  std::size_t count = 0;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (acs[i]) {
      kept[i] = 1;
      ++count;
    }
  }
  auto const H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
  for (std::size_t idx : order) {
    auto const r = static_cast<std::ptrdiff_t>(idx / w), c = static_cast<std::ptrdiff_t>(idx % w);
    double const rp = radius[idx];
    bool ok = true;
    for (std::ptrdiff_t dr = -reach; dr <= reach && ok; ++dr) {
      std::ptrdiff_t const rr = r + dr;
      if (rr < 0 || rr >= H) { continue; }
      for (std::ptrdiff_t dc = -reach; dc <= reach; ++dc) {
        std::ptrdiff_t const cc = c + dc;
        if (cc < 0 || cc >= W) { continue; }
        std::size_t const q = static_cast<std::size_t>(rr * W + cc);
        if (!disc[q]) { continue; }
        double const lim = std::max(rp, radius[q]);
        if (static_cast<double>(dr * dr + dc * dc) < lim * lim) {
          ok = false;
          break;
        }
      }
    }
    if (ok) {
      disc[idx] = 1;
      kept[idx] = 1;
      ++count;
    }
  }
  return count;
}

} // namespace

SamplingMask Poisson2dMask(std::size_t h, std::size_t w, double acceleration, double acsFrac, std::uint64_t seed,
                           PoissonOptions const &opt)
{
  Require(acceleration > 1.0 && std::isfinite(acceleration), ErrorCode::InvalidArgument,
          "poisson2d acceleration must be > 1");
  Require(acsFrac >= 0.0 && acsFrac < 1.0, ErrorCode::InvalidArgument, "poisson2d acs fraction must be in [0, 1)");
  Require(opt.growth >= 0.0 && opt.tolerance > 0.0, ErrorCode::InvalidArgument, "invalid poisson2d options");
  SamplingMask m = EmptyMask(h, w, MaskKind::Poisson2d, acceleration, seed);

  std::vector<std::uint8_t> acs(h * w, 0);
  std::vector<std::size_t> order;
  order.reserve(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (InAcsEllipse(h, w, acsFrac, r, c)) {
        acs[r * w + c] = 1;
      } else {
        order.push_back(r * w + c);
      }
    }
  }
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
  }

  std::vector<std::uint8_t> kept(h * w, 0);
  double const total = static_cast<double>(h * w);
  auto achieved = [&](double scale) {
    std::size_t const n = ThrowDarts(h, w, scale, opt.growth, order, acs, kept);
    return n == 0 ? INFINITY : total / static_cast<double>(n);
  };
  auto within = [&](double r) { return std::abs(r / acceleration - 1.0) <= opt.tolerance; };

  double lo = 0.0, hi = 1.0;
  double rHi = achieved(hi);
  int steps = 0;
  while (rHi < acceleration && !within(rHi)) {
    Require(++steps <= opt.maxBisection, ErrorCode::Calibration, "poisson2d could not bracket the radius scale");
    lo = hi;
    hi *= 2.0;
    rHi = achieved(hi);
  }
  double scale = hi;
  double rCur = rHi;
  while (!within(rCur)) {
    Require(++steps <= opt.maxBisection, ErrorCode::Calibration,
            "poisson2d calibration did not reach the requested acceleration within " +
              std::to_string(opt.maxBisection) + " steps");
    scale = 0.5 * (lo + hi);
    rCur = achieved(scale);
    if (rCur < acceleration) {
      lo = scale;
    } else {
      hi = scale;
    }
  }
  // `kept` holds the darts thrown at the last evaluated scale, which is `scale`.
  for (std::size_t i = 0; i < h * w; ++i) { m.keep[i] = kept[i] ? 1.0 : 0.0; }
  m.params = {{"acs_frac", acsFrac}, {"radius_scale", scale}, {"growth", opt.growth}};
  return m;
}

std::string MaskReport::CsvHeader()
{
  return "kind,height,width,requested_acc,achieved_acc,seed,acs_rows,acs_cols,row_density,col_density";
}

namespace {

std::string Num(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string Joined(std::vector<double> const &v)
{
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) { s += ";"; }
    s += Num(v[i]);
  }
  return s;
}

} // namespace

std::string MaskReport::csvRow() const
{
  return kind + "," + std::to_string(height) + "," + std::to_string(width) + "," + Num(requested) + "," +
         Num(achieved) + "," + std::to_string(seed) + "," + std::to_string(acsRows) + "," + std::to_string(acsCols) +
         "," + Joined(rowDensity) + "," + Joined(colDensity);
}

MaskReport MakeMaskReport(SamplingMask const &p)
{
  MaskReport rep;
  rep.kind = MaskKindName(p.kind);
  rep.height = p.height;
  rep.width = p.width;
  rep.requested = p.requestedAcceleration;
  rep.achieved = p.achievedAcceleration();
  rep.seed = p.seed;
  rep.rowDensity.assign(p.height, 0.0);
  rep.colDensity.assign(p.width, 0.0);
  for (std::size_t r = 0; r < p.height; ++r) {
    for (std::size_t c = 0; c < p.width; ++c) {
      double const v = p.keep(r, c) != 0.0 ? 1.0 : 0.0;
      rep.rowDensity[r] += v / static_cast<double>(p.width);
      rep.colDensity[c] += v / static_cast<double>(p.height);
    }
  }
  // Contiguous kept runs through DC along the center column and the center row.
  auto fullRow = [&](std::size_t r) { return p.keep(r, p.width / 2) != 0.0; };
  auto fullCol = [&](std::size_t c) { return p.keep(p.height / 2, c) != 0.0; };
  auto run = [](std::size_t center, std::size_t n, auto pred) {
    if (!pred(center)) { return std::size_t{0}; }
    std::size_t lo = center, hi = center;
    while (lo > 0 && pred(lo - 1)) { --lo; }
    while (hi + 1 < n && pred(hi + 1)) { ++hi; }
    return hi - lo + 1;
  };
  rep.acsRows = run(p.height / 2, p.height, fullRow);
  rep.acsCols = run(p.width / 2, p.width, fullCol);
  return rep;
}

} // namespace recon
