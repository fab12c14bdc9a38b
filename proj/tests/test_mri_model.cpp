#include <doctest.h>

#include <numbers>

#include "helpers.hpp"
#include "recon/fft.hpp"
#include "recon/mri_model.hpp"

using namespace recon;
using namespace testutil;

namespace {

// naive centered orthonormal DFT
CTensor NaiveFft2c(CTensor const &x, int sign)
{
  std::size_t const h = x.dim(0), w = x.dim(1);
  CTensor out({h, w});
  double const norm = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (std::size_t kr = 0; kr < h; ++kr) {
    for (std::size_t kc = 0; kc < w; ++kc) {
      Cx acc = 0.0;
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          double const fr = (static_cast<double>(kr) - static_cast<double>(h / 2)) *
                            (static_cast<double>(r) - static_cast<double>(h / 2)) / static_cast<double>(h);
          double const fc = (static_cast<double>(kc) - static_cast<double>(w / 2)) *
                            (static_cast<double>(c) - static_cast<double>(w / 2)) / static_cast<double>(w);
          acc += x(r, c) * std::polar(1.0, sign * 2.0 * std::numbers::pi * (fr + fc));
        }
      }
      out(kr, kc) = acc * norm;
    }
  }
  return out;
}

double MaxDiff(CTensor const &a, CTensor const &b)
{
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) { m = std::max(m, std::abs(a[i] - b[i])); }
  return m;
}

} // namespace

TEST_CASE("fft2c matches the centered DFT definition on odd and even sizes")
{
  Rng rng(3);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {5, 7}, {6, 9}, {1, 4}}) {
    CTensor x = RandomComplex({h, w}, rng);
    CHECK(MaxDiff(Fft2c(x), NaiveFft2c(x, -1)) < 1e-12);
    CHECK(MaxDiff(Ifft2c(x), NaiveFft2c(x, +1)) < 1e-12);
  }
}

TEST_CASE("fft2c is unitary and centered")
{
  Rng rng(4);
  CTensor x = RandomComplex({3, 12, 10}, rng);
  CHECK(std::abs(Norm(Fft2c(x)) - Norm(x)) < 1e-10);
  CHECK(MaxDiff(Ifft2c(Fft2c(x)), x) < 1e-12);

  CTensor one({8, 6}, Cx(1.0, 0.0));
  CTensor k = Fft2c(one);
  CHECK(std::abs(k(4, 3) - Cx(std::sqrt(48.0), 0.0)) < 1e-12);
  CHECK(Norm(k) == doctest::Approx(std::sqrt(48.0)));
}

TEST_CASE("forward and adjoint operators satisfy <Ax,y> = <x,A*y>")
{
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t const h = 4 + rng.below(13), w = 4 + rng.below(13), c = 1 + rng.below(4);
    auto s = RandomMaps(c, h, w, rng);
    auto p = RandomMask(h, w, rng);
    CTensor x = RandomComplex({h, w}, rng);
    MultiCoilKSpace y{RandomComplex({c, h, w}, rng)};
    Cx const lhs = Dot(ForwardOp(x, s, p).samples, y.samples);
    Cx const rhs = Dot(x, AdjointOp(y, s, p));
    CHECK(std::abs(lhs - rhs) / (Norm(x) * Norm(y.samples)) < 1e-12);
  }
}

TEST_CASE("normalized maps and a full mask make A*A the identity")
{
  Rng rng(5);
  auto s = RandomMaps(3, 10, 8, rng);
  CHECK(NormalizationError(s) < 1e-12);
  CTensor x = RandomComplex({10, 8}, rng);
  CHECK(MaxDiff(AdjointOp(ForwardOp(x, s, FullMask(10, 8)), s, FullMask(10, 8)), x) < 1e-12);
}

TEST_CASE("operators reject mismatched shapes")
{
  Rng rng(1);
  auto s = RandomMaps(2, 8, 8, rng);
  CHECK_THROWS_AS(ForwardOp(CTensor({8, 7}), s, FullMask(8, 8)), Error);
  CHECK_THROWS_AS(ForwardOp(CTensor({8, 8}), s, FullMask(8, 4)), Error);
  CHECK_THROWS_AS(AdjointOp(MultiCoilKSpace{CTensor({3, 8, 8})}, s, FullMask(8, 8)), Error);
  try {
    ForwardOp(CTensor({8, 7}), s, FullMask(8, 8));
  } catch (Error const &e) {
    CHECK(e.code() == ErrorCode::Shape);
  }
}

TEST_CASE("noise lands only at sampled positions with std sigma/sqrt(2) per component")
{
  Rng rng(9);
  std::size_t const h = 64, w = 64;
  auto p = RandomMask(h, w, rng, 0.3);
  MultiCoilKSpace zero{CTensor({2, h, w})};
  auto noisy = AddNoise(zero, p, 0.2, 77);
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < h * w; ++i) {
      Cx const v = noisy.samples[c * h * w + i];
      if (p.keep[i] == 0.0) {
        CHECK(v == Cx(0.0, 0.0));
      } else {
        ss += v.real() * v.real() + v.imag() * v.imag();
        n += 2;
      }
    }
  }
  CHECK(std::sqrt(ss / static_cast<double>(n)) == doctest::Approx(0.2 / std::sqrt(2.0)).epsilon(0.05));
  CHECK(AddNoise(zero, p, 0.2, 77).samples == noisy.samples);
  CHECK_FALSE(AddNoise(zero, p, 0.2, 78).samples == noisy.samples);
}

TEST_CASE("loglik gradient equals A*(Ax - y)")
{
  Rng rng(8);
  auto s = RandomMaps(2, 6, 6, rng);
  auto p = RandomMask(6, 6, rng);
  CTensor x = RandomComplex({6, 6}, rng);
  MultiCoilKSpace y{RandomComplex({2, 6, 6}, rng)};
  // directional derivative of 1/2 ||Ax - y||^2 along d is Re<g, d>
  CTensor d = RandomComplex({6, 6}, rng);
  auto f = [&](double t) {
    CTensor xt = x;
    for (std::size_t i = 0; i < xt.size(); ++i) { xt[i] += t * d[i]; }
    CTensor r = ForwardOp(xt, s, p).samples;
    ApplyMask(y.samples, p);
    double acc = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) { acc += std::norm(r[i] - y.samples[i]); }
    return 0.5 * acc;
  };
  double const fd = (f(1e-6) - f(-1e-6)) / 2e-6;
  CHECK(Dot(LoglikGradient(x, y, s, p), d).real() == doctest::Approx(fd).epsilon(1e-6));
  CTensor g2 = LoglikGradient(x, y, s, p, 4.0);
  CHECK(MaxDiff(g2, [&] {
          CTensor g = LoglikGradient(x, y, s, p);
          for (auto &v : g.vec()) { v *= 4.0; }
          return g;
        }()) < 1e-12);
}
