#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "recon/error.hpp"
#include "recon/metrics.hpp"
#include "recon/phantom.hpp"
#include "recon/sampling.hpp"

using namespace recon;
using namespace testutil;

namespace {

double Sum(RTensor const &t)
{
  double s = 0.0;
  for (double v : t.vec()) { s += v; }
  return s;
}

} // namespace

TEST_CASE("empty and single-ellipse phantoms")
{
  PhantomSpec empty;
  empty.height = 16;
  empty.width = 20;
  Phantom p = MakePhantom(empty);
  CHECK(p.image.shape() == Shape{16, 20});
  CHECK(Norm(p.image) == 0.0);
  CHECK(Sum(p.lesion) == 0.0);
  CHECK(Sum(p.wm) == 0.0);

  PhantomSpec one = empty;
  one.ellipses = {{0.1, -0.1, 0.5, 0.3, 20.0, 1.0}};
  p = MakePhantom(one);
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < 20; ++c) {
      double const u = (2.0 * c + 1.0) / 20.0 - 1.0, v = (2.0 * r + 1.0) / 16.0 - 1.0;
      CHECK(std::abs(p.image(r, c)) == (one.ellipses[0].contains(u, v) ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("lesion on white matter gives the expected contrast")
{
  PhantomSpec s;
  s.ellipses = {{0.0, 0.0, 0.8, 0.8, 0.0, 0.4}};
  s.wmHost = 0;
  s.lesions = {{0.1, 0.1, 0.12, 0.1, 0.0, 0.2}};
  s.phase = {0.5, 0.2, -0.1, 0.0, 0.0, 0.0};
  Phantom p = MakePhantom(s);
  RTensor mag = Magnitude(p.image);
  CHECK(Sum(p.lesion) > 0.0);
  for (std::size_t i = 0; i < mag.size(); ++i) {
    if (p.lesion[i] != 0.0) {
      CHECK(mag[i] == doctest::Approx(0.6));
      CHECK(p.wm[i] == 0.0);
    }
  }
  CHECK(ContrastResolution(mag, p.lesion, p.wm) == doctest::Approx(0.2));

  Phantom def = MakePhantom(DefaultBrainSpec());
  RTensor dm = Magnitude(def.image);
  CHECK(ContrastResolution(dm, def.lesion, def.wm) > 0.15);
}

TEST_CASE("spec validation")
{
  PhantomSpec s;
  s.ellipses = {{0.9, 0.0, 0.5, 0.3, 0.0, 0.5}};
  CHECK_THROWS_AS(MakePhantom(s), Error);
  s.ellipses = {{0.0, 0.0, 0.5, 0.3, 0.0, 1.5}};
  CHECK_THROWS_AS(MakePhantom(s), Error);
  s.ellipses = {{0.0, 0.0, 0.5, 0.3, 0.0, 0.5}};
  s.wmHost = 3;
  CHECK_THROWS_AS(MakePhantom(s), Error);
}

TEST_CASE("randomized specs are deterministic and keep lesions inside the host")
{
  PhantomSpec base = DefaultBrainSpec();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    PhantomSpec a = RandomizeSpec(base, seed), b = RandomizeSpec(base, seed);
    CHECK(SpecToJson(a) == SpecToJson(b));
    CHECK(a.lesions.size() >= 1);
    CHECK(a.lesions.size() <= 3);
    Phantom p = MakePhantom(a);
    CHECK(Sum(p.lesion) > 0.0);
    CHECK(Sum(p.wm) > 0.0);
    double peak = 0.0;
    for (auto v : p.image.vec()) { peak = std::max(peak, std::abs(v)); }
    CHECK(peak <= 1.0);
  }
  CHECK(SpecToJson(RandomizeSpec(base, 1)) != SpecToJson(RandomizeSpec(base, 2)));
}

TEST_CASE("spec json round trip")
{
  PhantomSpec s = RandomizeSpec(DefaultBrainSpec(48, 40), 9);
  std::string const j = SpecToJson(s);
  PhantomSpec back = SpecFromJson(j);
  CHECK(SpecToJson(back) == j);
  CHECK(MakePhantom(back).image == MakePhantom(s).image);
  CHECK_THROWS_AS(SpecFromJson("{\"height\": 8"), Error);
}

TEST_CASE("coil maps")
{
  SensitivityMaps one = MakeCoils(1, 12, 10);
  for (auto v : one.maps.vec()) { CHECK(v == Cx(1.0, 0.0)); }

  for (std::size_t n : {2ul, 4ul, 8ul}) {
    SensitivityMaps s = MakeCoils(n, 64, 48);
    CHECK(s.coils() == n);
    CHECK(NormalizationError(s) < 1e-6);
    // |dS/du| <= |S| (phase ramp + 2 max|d log g|) for Gaussian profiles normalized pixelwise
    double const width = 0.8, ring = 1.2, ramp = 0.5;
    double const bound = (ramp + 2.0 * (1.0 + ring) / (width * width)) * 2.0 / 48.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r + 1 < 64; ++r) {
        for (std::size_t c = 0; c + 1 < 48; ++c) {
          worst = std::max(worst, std::abs(s.maps(i, r, c + 1) - s.maps(i, r, c)));
          worst = std::max(worst, std::abs(s.maps(i, r + 1, c) - s.maps(i, r, c)));
        }
      }
    }
    CAPTURE(n);
    CHECK(worst < bound);
  }
  CHECK_THROWS_AS(MakeCoils(0, 8, 8), Error);
}

TEST_CASE("simulated acquisition")
{
  Phantom ph = MakePhantom(RandomizeSpec(DefaultBrainSpec(), 4));
  SensitivityMaps maps = MakeCoils(4, 64, 64);

  DatasetRecord clean = SimulateAcquisition(ph, maps, FullMask(64, 64), 0.0, 1);
  double peak = 0.0;
  for (auto v : clean.reference.vec()) { peak = std::max(peak, std::abs(v)); }
  CHECK(peak == doctest::Approx(1.0).epsilon(1e-15));
  CTensor back = AdjointOp(clean.y, clean.maps, clean.mask);
  double worst = 0.0;
  for (std::size_t i = 0; i < back.size(); ++i) { worst = std::max(worst, std::abs(back[i] - clean.reference[i])); }
  CHECK(worst < 1e-10);

  SamplingMask m = Gaussian2dMask(64, 64, 4.0, 0.3, 0.08, 3);
  DatasetRecord a = SimulateAcquisition(ph, maps, m, 0.02, 7), b = SimulateAcquisition(ph, maps, m, 0.02, 7);
  CHECK(a.y.samples == b.y.samples);
  CHECK(a.reference == b.reference);
  DatasetRecord c = SimulateAcquisition(ph, maps, m, 0.02, 8);
  CHECK_FALSE(a.y.samples == c.y.samples);
  for (std::size_t i = 0; i < a.y.samples.size(); ++i) {
    if (m.keep[i % 4096] == 0.0) { CHECK(a.y.samples[i] == Cx(0.0, 0.0)); }
  }
  CHECK(a.sigma == 0.02);
  CHECK(a.seed == 7);
  CHECK_NOTHROW(a.validate());

  SensitivityMaps wrong = MakeCoils(4, 32, 32);
  CHECK_THROWS_AS(SimulateAcquisition(ph, wrong, m, 0.02, 7), Error);
}
