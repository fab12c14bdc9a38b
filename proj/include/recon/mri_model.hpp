#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "recon/tensor.hpp"

namespace recon {

/// Image-space data x, shape [H,W].
using ComplexImage = CTensor;
/// Per-coil images or k-space, shape [C,H,W].
using CoilStack = CTensor;

struct SensitivityMaps
{
  CTensor maps; // [C,H,W]

  std::size_t coils() const { return maps.dim(0); }
  std::size_t height() const { return maps.dim(1); }
  std::size_t width() const { return maps.dim(2); }
};

struct MultiCoilKSpace
{
  CTensor samples; // [C,H,W]

  std::size_t coils() const { return samples.dim(0); }
  std::size_t height() const { return samples.dim(1); }
  std::size_t width() const { return samples.dim(2); }
};

enum class MaskKind { Gaussian2d, Equidistant1d, Poisson2d, Full };

char const *MaskKindName(MaskKind k);
MaskKind ParseMaskKind(std::string const &s);

struct SamplingMask
{
  std::size_t height = 0;
  std::size_t width = 0;
  RTensor keep; // [H,W] with entries 0 or 1
  MaskKind kind = MaskKind::Full;
  double requestedAcceleration = 1.0;
  std::uint64_t seed = 0;
  /// Generator settings echoed into serialized masks (fwhm, acs_frac, radius_scale, ...).
  std::map<std::string, double> params;

  std::size_t keptCount() const;
  double achievedAcceleration() const;
};

SamplingMask FullMask(std::size_t h, std::size_t w);
/// Unit single-coil maps.
SensitivityMaps UnitMaps(std::size_t h, std::size_t w);
/// Max over pixels of |sum_i |S_i|^2 - 1|.
double NormalizationError(SensitivityMaps const &s);

/// coil i = S_i * x
CoilStack Expand(ComplexImage const &x, SensitivityMaps const &s);
/// sum_i conj(S_i) * x_i
ComplexImage Reduce(CoilStack const &stack, SensitivityMaps const &s);
/// A = P o F o expand
MultiCoilKSpace ForwardOp(ComplexImage const &x, SensitivityMaps const &s, SamplingMask const &p);
/// A* = reduce o F^-1 o P^T
ComplexImage AdjointOp(MultiCoilKSpace const &y, SensitivityMaps const &s, SamplingMask const &p);
/// Masks every coil plane in place.
void ApplyMask(CTensor &k, SamplingMask const &p);
/// Adds complex Gaussian noise (std sigma/sqrt(2) per component) at sampled positions.
MultiCoilKSpace AddNoise(MultiCoilKSpace const &y, SamplingMask const &p, double sigma, std::uint64_t seed);

/// Gradient of 1/2 sum_i ||A(x) - y_i||^2 scaled by `scale` (the 1/sigma^2 factor).
ComplexImage LoglikGradient(ComplexImage const &x, MultiCoilKSpace const &y, SensitivityMaps const &s,
                            SamplingMask const &p, double scale = 1.0);

} // namespace recon
