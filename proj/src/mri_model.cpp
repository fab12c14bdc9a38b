#include "recon/mri_model.hpp"

#include <cmath>

#include "recon/fft.hpp"
#include "recon/rng.hpp"

namespace recon {

char const *MaskKindName(MaskKind k)
{
  switch (k) {
  case MaskKind::Gaussian2d: return "gaussian2d";
  case MaskKind::Equidistant1d: return "equidistant1d";
  case MaskKind::Poisson2d: return "poisson2d";
  case MaskKind::Full: return "full";
  }
  return "full";
}

MaskKind ParseMaskKind(std::string const &s)
{
  if (s == "gaussian2d") { return MaskKind::Gaussian2d; }
  if (s == "equidistant1d") { return MaskKind::Equidistant1d; }
  if (s == "poisson2d") { return MaskKind::Poisson2d; }
  if (s == "full") { return MaskKind::Full; }
  Fail(ErrorCode::InvalidArgument, "unknown mask kind '" + s + "'");
}

std::size_t SamplingMask::keptCount() const
{
  std::size_t n = 0;
  for (double v : keep.span()) { n += v != 0.0 ? 1 : 0; }
  return n;
}

double SamplingMask::achievedAcceleration() const
{
  std::size_t const kept = keptCount();
  Require(kept > 0, ErrorCode::Degenerate, "mask keeps no samples");
  return static_cast<double>(height * width) / static_cast<double>(kept);
}

SamplingMask FullMask(std::size_t h, std::size_t w)
{
  SamplingMask m;
  m.height = h;
  m.width = w;
  m.keep = RTensor({h, w}, 1.0);
  m.kind = MaskKind::Full;
  m.requestedAcceleration = 1.0;
  return m;
}

SensitivityMaps UnitMaps(std::size_t h, std::size_t w) { return SensitivityMaps{CTensor({1, h, w}, Cx(1.0, 0.0))}; }

double NormalizationError(SensitivityMaps const &s)
{
  std::size_t const n = s.height() * s.width();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < s.coils(); ++c) { acc += std::norm(s.maps[c * n + i]); }
    worst = std::max(worst, std::abs(acc - 1.0));
  }
  return worst;
}

namespace {

void CheckImage(ComplexImage const &x, SensitivityMaps const &s, char const *what)
{
  Require(x.rank() == 2 && s.maps.rank() == 3 && x.dim(0) == s.height() && x.dim(1) == s.width(), ErrorCode::Shape,
          std::string(what) + ": image " + ShapeString(x.shape()) + " does not match maps " +
            ShapeString(s.maps.shape()));
}

void CheckStack(CTensor const &k, SensitivityMaps const &s, char const *what)
{
  Require(k.shape() == s.maps.shape(), ErrorCode::Shape,
          std::string(what) + ": coil data " + ShapeString(k.shape()) + " does not match maps " +
            ShapeString(s.maps.shape()));
}

void CheckMask(SamplingMask const &p, SensitivityMaps const &s, char const *what)
{
  Require(p.keep.rank() == 2 && p.keep.dim(0) == s.height() && p.keep.dim(1) == s.width(), ErrorCode::Shape,
          std::string(what) + ": mask " + ShapeString(p.keep.shape()) + " does not match maps " +
            ShapeString(s.maps.shape()));
}

} // namespace

CoilStack Expand(ComplexImage const &x, SensitivityMaps const &s)
{
  CheckImage(x, s, "expand");
  std::size_t const n = x.size();
  CoilStack out(s.maps.shape());
  for (std::size_t c = 0; c < s.coils(); ++c) {
    for (std::size_t i = 0; i < n; ++i) { out[c * n + i] = s.maps[c * n + i] * x[i]; }
  }
  return out;
}

ComplexImage Reduce(CoilStack const &stack, SensitivityMaps const &s)
{
  CheckStack(stack, s, "reduce");
  std::size_t const n = s.height() * s.width();
  ComplexImage out({s.height(), s.width()});
  for (std::size_t c = 0; c < s.coils(); ++c) {
    for (std::size_t i = 0; i < n; ++i) { out[i] += std::conj(s.maps[c * n + i]) * stack[c * n + i]; }
  }
  return out;
}

void ApplyMask(CTensor &k, SamplingMask const &p)
{
  std::size_t const n = p.keep.size();
  Require(k.size() % n == 0, ErrorCode::Shape, "mask does not tile the k-space data");
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (p.keep[i % n] == 0.0) { k[i] = 0.0; }
  }
}

MultiCoilKSpace ForwardOp(ComplexImage const &x, SensitivityMaps const &s, SamplingMask const &p)
{
  CheckImage(x, s, "forward_op");
  CheckMask(p, s, "forward_op");
  CTensor k = Fft2c(Expand(x, s));
  ApplyMask(k, p);
  return MultiCoilKSpace{std::move(k)};
}

ComplexImage AdjointOp(MultiCoilKSpace const &y, SensitivityMaps const &s, SamplingMask const &p)
{
  CheckStack(y.samples, s, "adjoint_op");
  CheckMask(p, s, "adjoint_op");
  CTensor k = y.samples;
  ApplyMask(k, p);
  return Reduce(Ifft2c(k), s);
}

MultiCoilKSpace AddNoise(MultiCoilKSpace const &y, SamplingMask const &p, double sigma, std::uint64_t seed)
{
  Require(sigma >= 0.0 && std::isfinite(sigma), ErrorCode::InvalidArgument, "noise sigma must be >= 0");
  Require(y.samples.rank() == 3 && y.height() == p.height && y.width() == p.width, ErrorCode::Shape,
          "add_noise: mask does not match k-space");
  MultiCoilKSpace out = y;
  if (sigma == 0.0) { return out; }
  Rng rng(seed);
  double const sd = sigma / std::sqrt(2.0);
  std::size_t const n = p.keep.size();
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    if (p.keep[i % n] == 0.0) { continue; }
    double const re = rng.normal();
    double const im = rng.normal();
    out.samples[i] += Cx(sd * re, sd * im);
  }
  return out;
}

ComplexImage LoglikGradient(ComplexImage const &x, MultiCoilKSpace const &y, SensitivityMaps const &s,
                            SamplingMask const &p, double scale)
{
  MultiCoilKSpace r = ForwardOp(x, s, p);
  CheckStack(y.samples, s, "loglik_gradient");
  for (std::size_t i = 0; i < r.samples.size(); ++i) { r.samples[i] -= y.samples[i]; }
  ComplexImage g = AdjointOp(r, s, p);
  if (scale != 1.0) {
    for (auto &v : g.vec()) { v *= scale; }
  }
  return g;
}

} // namespace recon
