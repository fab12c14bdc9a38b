#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "recon/mri_model.hpp"

namespace recon {

/// Ellipse in normalized coordinates: u, v in [-1, 1], v pointing down the rows.
struct Ellipse
{
  double cx = 0.0;
  double cy = 0.0;
  double a = 0.5; // semi-axis along u before rotation
  double b = 0.5;
  double angleDeg = 0.0;
  double intensity = 1.0; // for lesions: the added delta

  bool contains(double u, double v) const;
};

struct PhantomSpec
{
  std::size_t height = 64;
  std::size_t width = 64;
  /// Painted in order; a later ellipse overwrites earlier ones where they overlap.
  std::vector<Ellipse> ellipses;
  /// Index of the ellipse whose visible region forms the white matter mask (-1: none).
  int wmHost = -1;
  /// Added on top of the painted ellipses; where lesions overlap the largest delta applies.
  std::vector<Ellipse> lesions;
  /// phase = c0 + c1 u + c2 v + c3 u^2 + c4 u v + c5 v^2 (radians)
  std::array<double, 6> phase{};
  std::uint64_t seed = 0;

  void validate() const;
};

/// FLAIR-like brain: scalp, cortex, white matter host, ventricles, two lesions.
PhantomSpec DefaultBrainSpec(std::size_t h = 64, std::size_t w = 64);
/// Per-record variation of a base spec: small geometric and intensity jitter, 1-3 fresh lesions
/// inside the white matter host, new phase coefficients.
PhantomSpec RandomizeSpec(PhantomSpec const &base, std::uint64_t seed);

std::string SpecToJson(PhantomSpec const &spec);
PhantomSpec SpecFromJson(std::string const &text);

struct Phantom
{
  ComplexImage image;
  RTensor lesion; // 0/1
  RTensor wm;     // 0/1
};

Phantom MakePhantom(PhantomSpec const &spec);

/// Gaussian-profile coils on a ring around the field of view with a linear phase ramp each,
/// normalized so that sum_i |S_i|^2 = 1. `profileWidth` is the Gaussian std in normalized units.
SensitivityMaps MakeCoils(std::size_t nCoils, std::size_t h, std::size_t w, double profileWidth = 0.8);

struct DatasetRecord
{
  std::string id;
  ComplexImage reference; // max magnitude 1
  SensitivityMaps maps;
  SamplingMask mask;
  MultiCoilKSpace y;
  RTensor lesion;
  RTensor wm;
  std::uint64_t seed = 0;
  double sigma = 0.0;

  void validate() const;
};

/// y = P F(expand(x / max|x|)) + noise at sampled positions.
DatasetRecord SimulateAcquisition(Phantom const &phantom, SensitivityMaps const &maps, SamplingMask const &mask,
                                  double sigma, std::uint64_t seed);

} // namespace recon
