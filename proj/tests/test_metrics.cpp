#include "doctest.h"

#include <cmath>
#include <string>

#include "helpers.hpp"
#include "noise_table.hpp"
#include "recon/error.hpp"
#include "recon/metrics.hpp"
#include "recon/phantom.hpp"

using namespace recon;
using namespace testutil;

namespace {

double NaiveSsim(RTensor const &x, RTensor const &y)
{
  std::size_t const h = x.dim(0), w = x.dim(1), k = 7;
  double L = 0.0;
  for (double v : y.vec()) { L = std::max(L, v); }
  double const c1 = std::pow(0.01 * L, 2), c2 = std::pow(0.03 * L, 2), n = 49.0;
  double total = 0.0;
  for (std::size_t r = 0; r + k <= h; ++r) {
    for (std::size_t c = 0; c + k <= w; ++c) {
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          mx += x(r + i, c + j) / n;
          my += y(r + i, c + j) / n;
        }
      }
      double vx = 0, vy = 0, vxy = 0;
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          double const a = x(r + i, c + j) - mx, b = y(r + i, c + j) - my;
          vx += a * a / (n - 1);
          vy += b * b / (n - 1);
          vxy += a * b / (n - 1);
        }
      }
      total += (2 * mx * my + c1) * (2 * vxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return total / static_cast<double>((h - k + 1) * (w - k + 1));
}

RTensor Uniform(Shape s, Rng &rng, double lo, double hi)
{
  RTensor t(std::move(s));
  for (auto &v : t.vec()) { v = lo + (hi - lo) * rng.uniform(); }
  return t;
}

} // namespace

TEST_CASE("ssim matches a sliding-window oracle")
{
  Rng rng(41);
  RTensor a = Uniform({16, 19}, rng, 0.0, 1.0);
  RTensor b = Uniform({16, 19}, rng, 0.0, 0.8);
  CHECK(std::abs(Ssim(a, b) - NaiveSsim(a, b)) < 1e-8);
  CHECK(std::abs(Ssim(b, a) - NaiveSsim(b, a)) < 1e-8);
  CHECK(Ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  RTensor board({16, 16}), inv({16, 16});
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < 16; ++c) {
      board(r, c) = static_cast<double>((r + c) % 2);
      inv(r, c) = 1.0 - board(r, c);
    }
  }
  double const s = Ssim(inv, board);
  CHECK(s < 0.5);
  CHECK(s >= -1.0);
  CHECK_THROWS_AS(Ssim(a, RTensor({16, 18})), Error);
}

TEST_CASE("psnr")
{
  RTensor ref({10, 10}, 0.5), test({10, 10}, 0.5);
  ref[0] = 1.0;
  test[0] = 1.0;
  for (std::size_t i = 1; i < 100; ++i) { test[i] += (i % 2 ? 0.1 : -0.1); } // MSE 0.0099
  double const mse = 0.0099;
  CHECK(Psnr(test, ref) == doctest::Approx(10.0 * std::log10(1.0 / mse)));
  for (auto &v : test.vec()) { v = 0.5; }
  test[0] = 1.0;
  test[1] = 1.5; // single deviation of 1 over 100 pixels: MSE 0.01
  CHECK(Psnr(test, ref) == doctest::Approx(20.0));
  CHECK(std::isinf(Psnr(ref, ref)));

  RTensor a = test, b = ref;
  for (auto &v : a.vec()) { v *= 3.0; }
  for (auto &v : b.vec()) { v *= 3.0; }
  CHECK(Psnr(a, b) == doctest::Approx(Psnr(test, ref)));
}

TEST_CASE("percentile interpolates linearly")
{
  CHECK(Percentile({3, 1, 2, 4}, 50.0) == doctest::Approx(2.5));
  CHECK(Percentile({1, 2, 3, 4, 5}, 100.0) == 5.0);
  CHECK(Percentile({1, 2, 3, 4, 5}, 0.0) == 1.0);
  CHECK(Percentile({0, 10}, 99.0) == doctest::Approx(9.9));
}

TEST_CASE("otsu separates modes and matches exhaustive search")
{
  RTensor two({100});
  for (std::size_t i = 0; i < 100; ++i) { two[i] = i < 90 ? 0.1 : 0.9; }
  Otsu t = OtsuThreshold(two);
  CHECK(t.threshold > 0.1);
  CHECK(t.threshold < 0.9);
  CHECK_FALSE(t.foreground(0.1));
  CHECK(t.foreground(0.9));

  RTensor delta({10});
  for (std::size_t i = 0; i < 10; ++i) { delta[i] = i % 2; }
  t = OtsuThreshold(delta);
  CHECK(t.threshold > 0.0);
  CHECK(t.threshold < 1.0);
  CHECK_THROWS_AS(OtsuThreshold(RTensor({5}, 0.3)), Error);

  Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    RTensor v({400});
    for (std::size_t i = 0; i < 400; ++i) {
      v[i] = i % 3 == 0 ? 0.7 + 0.1 * rng.normal() : 0.2 + 0.05 * rng.normal();
    }
    t = OtsuThreshold(v);
    // brute force over all bin boundaries, classes built from the raw values
    double lo = v[0], hi = v[0];
    for (double x : v.vec()) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    double const width = (hi - lo) / 256.0;
    double best = -1.0;
    std::size_t bestK = 0;
    for (std::size_t k = 0; k + 1 < 256; ++k) {
      double n0 = 0, s0 = 0, n1 = 0, s1 = 0;
      for (double x : v.vec()) {
        bool const low = std::min<std::size_t>(static_cast<std::size_t>((x - lo) / width), 255) <= k;
        (low ? n0 : n1) += 1;
        (low ? s0 : s1) += x;
      }
      if (n0 == 0 || n1 == 0) { continue; }
      double const between = n0 * n1 / (400.0 * 400.0) * std::pow(s0 / n0 - s1 / n1, 2);
      if (between > best + 1e-15) {
        best = between;
        bestK = k;
      }
    }
    CHECK(t.bin == bestK);
  }
}

TEST_CASE("dilation with a disk")
{
  RTensor m({9, 9});
  m(4, 4) = 1.0;
  RTensor d = DilateDisk(m, 2.0);
  double n = 0;
  for (double v : d.vec()) { n += v; }
  CHECK(n == 13.0); // lattice points with r^2 <= 4
  CHECK(d(4, 6) == 1.0);
  CHECK(d(5, 6) == 0.0);
}

TEST_CASE("contrast resolution")
{
  RTensor img({20, 20}, 0.0), les({20, 20}), wm({20, 20});
  for (std::size_t r = 2; r < 18; ++r) {
    for (std::size_t c = 2; c < 18; ++c) {
      wm(r, c) = 1.0;
      img(r, c) = 0.4;
    }
  }
  for (std::size_t r = 8; r < 11; ++r) {
    for (std::size_t c = 8; c < 11; ++c) {
      les(r, c) = 1.0;
      wm(r, c) = 0.0;
      img(r, c) = 0.6;
    }
  }
  CHECK(ContrastResolution(img, les, wm) == doctest::Approx(0.2));
  RTensor scaled = img;
  for (auto &v : scaled.vec()) { v *= 7.0; }
  CHECK(ContrastResolution(scaled, les, wm) == doctest::Approx(0.2));
  RTensor flat({20, 20}, 0.5);
  CHECK(ContrastResolution(flat, les, wm) == doctest::Approx(0.0));
  CHECK_THROWS_AS(ContrastResolution(img, les, RTensor({20, 20})), Error);
}

TEST_CASE("white matter noise")
{
  Phantom ph = MakePhantom(DefaultBrainSpec());
  RTensor const clean = Magnitude(ph.image);
  RTensor flat({16, 16}, 0.3), all({16, 16}, 1.0);
  CHECK(WmNoise(flat, all) == 0.0);
  CHECK_THROWS_AS(WmNoise(flat, RTensor({16, 16})), Error);

  double prev = -1.0;
  for (double sigma : {0.01, 0.02, 0.04}) {
    Rng rng(43);
    RTensor noisy = clean;
    for (auto &v : noisy.vec()) { v += sigma * rng.normal(); }
    double const wmn = WmNoise(noisy, ph.wm);
    CHECK(wmn > prev);
    prev = wmn;
    RTensor scaled = noisy;
    for (auto &v : scaled.vec()) { v *= 2.5; }
    CHECK(WmNoise(scaled, ph.wm) == doctest::Approx(wmn).epsilon(1e-9));
  }
}

TEST_CASE("background noise")
{
  RTensor img({40, 40}, 0.0);
  for (std::size_t r = 10; r < 30; ++r) {
    for (std::size_t c = 10; c < 30; ++c) { img(r, c) = 1.0; }
  }
  CHECK(BgNoise(img) == 0.0);

  Rng rng(44);
  RTensor noisy = img;
  double const a = 0.1;
  for (auto &v : noisy.vec()) {
    if (v == 0.0) { v = a * rng.uniform(); }
  }
  CHECK(BgNoise(noisy) == doctest::Approx(0.99 * a).epsilon(0.02));

  RTensor ghost = img;
  for (std::size_t r = 10; r < 30; ++r) {
    for (std::size_t c = 0; c < 8; ++c) { ghost(r, c) = 0.2; } // shifted copy leaking into background
  }
  CHECK(BgNoise(ghost) > BgNoise(img));
  CHECK_THROWS_AS(BgNoise(RTensor({8, 8}, 1.0)), Error);
}

TEST_CASE("weighted average reproduces the reference column")
{
  std::vector<NoiseTriple> rows;
  for (auto const &r : kNoiseTable) { rows.push_back({r.cr, r.wmn, r.bgn}); }
  CohortMaxima m = MaximaOf(rows);
  CHECK(m.cr == 0.240);
  CHECK(m.wmn == 0.924);
  CHECK(m.bgn == 0.626);
  std::vector<double> wa = WeightedAverage(rows);
  REQUIRE(wa.size() == std::size(kNoiseTable));
  for (std::size_t i = 0; i < wa.size(); ++i) {
    CAPTURE(std::string(kNoiseTable[i].method) + " " + kNoiseTable[i].trained);
    CHECK(std::abs(wa[i] - kNoiseTable[i].wa) <= 0.015);
  }
  CHECK(wa[32] == doctest::Approx(0.64).epsilon(0.02));  // PICS
  CHECK(wa[6] == doctest::Approx(0.55).epsilon(0.02));   // CIRIM, FLAIR
  CHECK(wa[0] == doctest::Approx(1.08).epsilon(0.01));   // CascadeNet, T1
  CHECK(wa[33] == doctest::Approx(1.39).epsilon(0.01));  // zero-filled

  CHECK(WeightedAverage({{0.3, 0.2, 0.1}})[0] == doctest::Approx(2.0));
  CHECK_THROWS_AS(WeightedAverage({{0.0, 0.2, 0.1}}), Error);
  CHECK_THROWS_AS(WeightedAverage({}), Error);
}

TEST_CASE("snr")
{
  RTensor mag({20, 20}, 0.0);
  for (std::size_t r = 5; r < 15; ++r) {
    for (std::size_t c = 5; c < 15; ++c) { mag(r, c) = 1.0; }
  }
  MultiCoilKSpace y{CTensor({2, 20, 20}, Cx(0.0, 0.1))};
  SamplingMask full = FullMask(20, 20);
  CHECK(Snr(mag, y, full) == doctest::Approx(10.0));

  RTensor mag2 = mag;
  for (auto &v : mag2.vec()) { v *= 4.0; }
  MultiCoilKSpace y2 = y;
  for (auto &v : y2.samples.vec()) { v *= 4.0; }
  CHECK(Snr(mag2, y2, full) == doctest::Approx(10.0));

  // corners never sampled: undefined
  SamplingMask center = full;
  center.keep.fill(0.0);
  center.keep(10, 10) = 1.0;
  CHECK(std::isnan(Snr(mag, y, center)));
}

TEST_CASE("snr decreases with acquisition noise on the phantom")
{
  Phantom ph = MakePhantom(DefaultBrainSpec());
  auto maps = MakeCoils(4, 64, 64);
  SamplingMask full = FullMask(64, 64);
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.01, 0.02, 0.05}) {
    DatasetRecord r = SimulateAcquisition(ph, maps, full, sigma, 5);
    double const snr = Snr(Magnitude(r.reference), r.y, r.mask);
    CHECK(snr < prev);
    prev = snr;
  }
}

TEST_CASE("metrics report")
{
  Phantom ph = MakePhantom(DefaultBrainSpec());
  auto maps = MakeCoils(4, 64, 64);
  DatasetRecord r = SimulateAcquisition(ph, maps, FullMask(64, 64), 0.01, 6);
  MetricsInput in{&r.reference, &r.reference, &r.lesion, &r.wm, &r.y, &r.mask};
  MetricsReport m = ComputeMetrics(in);
  CHECK(m.ssim == doctest::Approx(1.0));
  CHECK(std::isinf(m.psnrDb));
  CHECK(m.cr > 0.0);
  CHECK(std::isnan(m.wa));
  RTensor none;
  in.lesion = &none;
  CHECK(std::isnan(ComputeMetrics(in).cr));
}
