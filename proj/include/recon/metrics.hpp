#pragma once

#include <limits>
#include <vector>

#include "recon/mri_model.hpp"

namespace recon {

RTensor Magnitude(CTensor const &x);

/// Mean SSIM over all valid 7x7 windows, K1=0.01, K2=0.03, data range max(ref).
double Ssim(RTensor const &test, RTensor const &ref);
/// 10 log10(max(ref)^2 / MSE); +infinity when the images are identical.
double Psnr(RTensor const &test, RTensor const &ref);

/// Linear-interpolated percentile (q in [0,100]).
double Percentile(std::vector<double> values, double q);

struct Otsu
{
  double threshold;  // upper edge of the last background bin
  double lo, width;  // histogram origin and bin width
  std::size_t bin;   // last background bin

  bool foreground(double v) const;
};

/// Between-class-variance maximizing split of a 256-bin histogram over [min, max].
Otsu OtsuThreshold(RTensor const &values);
/// 1 where the magnitude lies above the Otsu threshold.
RTensor OtsuMask(RTensor const &mag);

/// Binary dilation with a Euclidean disk.
RTensor DilateDisk(RTensor const &mask, double radius);

double ContrastResolution(RTensor const &mag, RTensor const &lesion, RTensor const &wm, double dilation = 4.0);
double WmNoise(RTensor const &mag, RTensor const &wm);
double BgNoise(RTensor const &mag);

struct NoiseTriple
{
  double cr, wmn, bgn;
};

struct CohortMaxima
{
  double cr, wmn, bgn;
};

CohortMaxima MaximaOf(std::vector<NoiseTriple> const &rows);
/// (1 - cr/max_cr) + wmn/max_wmn + bgn/max_bgn per row, maxima over the cohort.
std::vector<double> WeightedAverage(std::vector<NoiseTriple> const &rows);
std::vector<double> WeightedAverage(std::vector<NoiseTriple> const &rows, CohortMaxima const &maxima);

/// Mean foreground magnitude over the median magnitude of the sampled k-space entries in the
/// four corner squares (side cornerFrac*min(h,w)), per coil, averaged over coils.
/// NaN when no corner entry is sampled.
double Snr(RTensor const &mag, MultiCoilKSpace const &y, SamplingMask const &p, double cornerFrac = 0.05);

struct MetricsReport
{
  double ssim = 0.0;
  double psnrDb = 0.0;
  double cr = 0.0;
  double wmn = 0.0;
  double bgn = 0.0;
  double wa = std::numeric_limits<double>::quiet_NaN();
  double snr = 0.0;
};

struct MetricsInput
{
  ComplexImage const *recon;
  ComplexImage const *reference;
  RTensor const *lesion; // may be empty: CR reported as NaN
  RTensor const *wm;
  MultiCoilKSpace const *y;
  SamplingMask const *mask;
};

MetricsReport ComputeMetrics(MetricsInput const &in);

} // namespace recon
