#include "recon/baselines.hpp"

#include <array>
#include <cmath>

#include "recon/rng.hpp"

namespace recon {

ComplexImage ZeroFilled(MultiCoilKSpace const &y, SensitivityMaps const &s, SamplingMask const &p)
{
  return AdjointOp(y, s, p);
}

double SoftThreshold(double v, double t)
{
  double const m = std::abs(v) - t;
  return m > 0.0 ? std::copysign(m, v) : 0.0;
}

namespace {

double const kS3 = std::sqrt(3.0);
double const kNorm = 4.0 * std::sqrt(2.0);
std::array<double, 4> const kLo{(1 + kS3) / kNorm, (3 + kS3) / kNorm, (3 - kS3) / kNorm, (1 - kS3) / kNorm};
std::array<double, 4> const kHi{kLo[3], -kLo[2], kLo[1], -kLo[0]};

// one analysis level on a strided line of length n: [a | d]
void Analyze(double *x, std::size_t n, std::size_t stride, std::vector<double> &tmp)
{
  tmp.assign(n, 0.0);
  std::size_t const half = n / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double a = 0.0, d = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      double const v = x[((2 * i + k) % n) * stride];
      a += kLo[k] * v;
      d += kHi[k] * v;
    }
    tmp[i] = a;
    tmp[half + i] = d;
  }
  for (std::size_t i = 0; i < n; ++i) { x[i * stride] = tmp[i]; }
}

void Synthesize(double *x, std::size_t n, std::size_t stride, std::vector<double> &tmp)
{
  tmp.assign(n, 0.0);
  std::size_t const half = n / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double const a = x[i * stride], d = x[(half + i) * stride];
    for (std::size_t k = 0; k < 4; ++k) { tmp[(2 * i + k) % n] += kLo[k] * a + kHi[k] * d; }
  }
  for (std::size_t i = 0; i < n; ++i) { x[i * stride] = tmp[i]; }
}

void CheckWaveletDims(Shape const &sh, std::size_t levels)
{
  Require(sh.size() == 2, ErrorCode::Shape, "wavelet input must be [H,W]");
  std::size_t const f = std::size_t{1} << levels;
  Require(sh[0] % f == 0 && sh[1] % f == 0 && sh[0] >= 2 * f && sh[1] >= 2 * f, ErrorCode::Shape,
          "wavelet input " + ShapeString(sh) + " not divisible into " + std::to_string(levels) + " levels");
}

} // namespace

RTensor WaveletForward(RTensor const &img, std::size_t levels)
{
  CheckWaveletDims(img.shape(), levels);
  RTensor out = img;
  std::size_t const W = img.dim(1);
  std::vector<double> tmp;
  std::size_t h = img.dim(0), w = img.dim(1);
  for (std::size_t l = 0; l < levels; ++l, h /= 2, w /= 2) {
    for (std::size_t r = 0; r < h; ++r) { Analyze(out.data() + r * W, w, 1, tmp); }
    for (std::size_t c = 0; c < w; ++c) { Analyze(out.data() + c, h, W, tmp); }
  }
  return out;
}

RTensor WaveletInverse(RTensor const &coeffs, std::size_t levels)
{
  CheckWaveletDims(coeffs.shape(), levels);
  RTensor out = coeffs;
  std::size_t const W = coeffs.dim(1);
  std::vector<double> tmp;
  for (std::size_t l = levels; l-- > 0;) {
    std::size_t const h = coeffs.dim(0) >> l, w = coeffs.dim(1) >> l;
    for (std::size_t c = 0; c < w; ++c) { Synthesize(out.data() + c, h, W, tmp); }
    for (std::size_t r = 0; r < h; ++r) { Synthesize(out.data() + r * W, w, 1, tmp); }
  }
  return out;
}

namespace {

struct Padding
{
  std::size_t h, w, H, W, top, left;

  CTensor pad(CTensor const &x) const
  {
    CTensor out({H, W});
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) { out(r + top, c + left) = x(r, c); }
    }
    return out;
  }

  CTensor crop(CTensor const &x) const
  {
    CTensor out({h, w});
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) { out(r, c) = x(r + top, c + left); }
    }
    return out;
  }
};

Padding MakePadding(std::size_t h, std::size_t w, std::size_t levels)
{
  std::size_t const f = std::size_t{1} << levels;
  std::size_t H = std::max((h + f - 1) / f * f, 2 * f);
  std::size_t W = std::max((w + f - 1) / f * f, 2 * f);
  return {h, w, H, W, (H - h) / 2, (W - w) / 2};
}

void SplitParts(CTensor const &x, RTensor &re, RTensor &im)
{
  re = RTensor(x.shape());
  im = RTensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    re[i] = x[i].real();
    im[i] = x[i].imag();
  }
}

double L1(RTensor const &t)
{
  double s = 0.0;
  for (double v : t.vec()) { s += std::abs(v); }
  return s;
}

} // namespace

CsResult CsL1Wavelet(MultiCoilKSpace const &y, SensitivityMaps const &s, SamplingMask const &p, CsOptions const &opt)
{
  Require(opt.alpha >= 0.0 && std::isfinite(opt.alpha), ErrorCode::InvalidArgument, "alpha must be >= 0");
  Require(y.samples.shape() == s.maps.shape(), ErrorCode::Shape, "k-space and maps disagree in shape");
  Padding const pad = MakePadding(s.height(), s.width(), opt.levels);

  CTensor ym = y.samples;
  ApplyMask(ym, p);
  MultiCoilKSpace const yk{ym};

  auto objective = [&](CTensor const &x) {
    CTensor r = ForwardOp(pad.crop(x), s, p).samples;
    double f = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) { f += std::norm(r[i] - ym[i]); }
    RTensor re, im;
    SplitParts(x, re, im);
    return 0.5 * f + opt.alpha * (L1(WaveletForward(re, opt.levels)) + L1(WaveletForward(im, opt.levels)));
  };
  auto prox = [&](CTensor const &v) {
    if (opt.alpha == 0.0) { return v; }
    RTensor re, im;
    SplitParts(v, re, im);
    RTensor wr = WaveletForward(re, opt.levels), wi = WaveletForward(im, opt.levels);
    for (auto &c : wr.vec()) { c = SoftThreshold(c, opt.alpha); }
    for (auto &c : wi.vec()) { c = SoftThreshold(c, opt.alpha); }
    re = WaveletInverse(wr, opt.levels);
    im = WaveletInverse(wi, opt.levels);
    CTensor out(v.shape());
    for (std::size_t i = 0; i < out.size(); ++i) { out[i] = Cx(re[i], im[i]); }
    return out;
  };

  CsResult res;
  CTensor x = pad.pad(AdjointOp(yk, s, p));
  CTensor xPrev = x, v = x;
  double fx = objective(x);
  res.objective.push_back(fx);
  double t = 1.0;

  for (std::size_t it = 0; it < opt.maxIter; ++it) {
    // gradient step on v, unit step since ||A|| <= 1
    CTensor g = pad.pad(LoglikGradient(pad.crop(v), yk, s, p));
    CTensor u = v;
    for (std::size_t i = 0; i < u.size(); ++i) { u[i] -= g[i]; }
    CTensor z = prox(u);
    double const fz = objective(z);

    xPrev = x;
    if (fz <= fx) {
      x = z;
      fx = fz;
    }
    double const tNext = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = x[i] + (t / tNext) * (z[i] - x[i]) + ((t - 1.0) / tNext) * (x[i] - xPrev[i]);
    }
    t = tNext;
    res.objective.push_back(fx);
    res.iterations = it + 1;

    double dn = 0.0, xn = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      dn += std::norm(x[i] - xPrev[i]);
      xn += std::norm(x[i]);
    }
    if (xn > 0.0 && std::sqrt(dn / xn) < opt.tolerance && fz <= fx) { break; }
  }
  res.image = pad.crop(x);
  return res;
}

double OperatorNorm(SensitivityMaps const &s, SamplingMask const &p, std::size_t iters, std::uint64_t seed)
{
  Rng rng(seed);
  CTensor x({s.height(), s.width()});
  for (auto &v : x.vec()) { v = Cx(rng.normal(), rng.normal()); }
  double lambda = 0.0;
  for (std::size_t i = 0; i < iters; ++i) {
    double const n = Norm(x);
    if (n == 0.0) { return 0.0; }
    for (auto &v : x.vec()) { v /= n; }
    x = AdjointOp(ForwardOp(x, s, p), s, p);
    lambda = Norm(x);
  }
  return std::sqrt(lambda);
}

} // namespace recon
