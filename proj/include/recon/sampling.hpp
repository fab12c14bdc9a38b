#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recon/mri_model.hpp"

namespace recon {

/// True when (r, c) lies in the centered ellipse with half-axes acsFrac*dim/2.
bool InAcsEllipse(std::size_t h, std::size_t w, double acsFrac, std::size_t r, std::size_t c);

/// 2D variable-density mask: Gaussian density with per-axis sigma = fwhm*dim/(2 sqrt(2 ln 2)),
/// fully kept central ellipse, and exactly round(h*w/acceleration) kept samples.
SamplingMask Gaussian2dMask(std::size_t h, std::size_t w, double acceleration, double fwhmRel, double acsFrac,
                            std::uint64_t seed);

enum class OffsetPolicy { Fixed, Random };

/// Full phase-encode columns every `acceleration` steps plus a fully kept central band of
/// round(centerFrac*w) columns.
SamplingMask Equidistant1dMask(std::size_t h, std::size_t w, double acceleration, double centerFrac,
                               OffsetPolicy offset, std::uint64_t seed);

struct PoissonOptions
{
  /// Local exclusion radius is scale * (1 + growth * rho), rho the normalized distance from DC.
  double growth = 2.0;
  double tolerance = 0.05;
  int maxBisection = 50;
};

double PoissonRadius(std::size_t h, std::size_t w, double scale, double growth, std::size_t r, std::size_t c);

/// Variable-density Poisson-disc mask with the radius scale calibrated until the achieved
/// acceleration is within tolerance of the request.
SamplingMask Poisson2dMask(std::size_t h, std::size_t w, double acceleration, double acsFrac, std::uint64_t seed,
                           PoissonOptions const &opt = {});

struct MaskReport
{
  std::string kind;
  std::size_t height = 0;
  std::size_t width = 0;
  double requested = 1.0;
  double achieved = 1.0;
  std::uint64_t seed = 0;
  /// Lengths of the contiguous kept runs through DC along each axis.
  std::size_t acsRows = 0;
  std::size_t acsCols = 0;
  std::vector<double> rowDensity;
  std::vector<double> colDensity;

  static std::string CsvHeader();
  std::string csvRow() const;
};

MaskReport MakeMaskReport(SamplingMask const &p);

} // namespace recon
