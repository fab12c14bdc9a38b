#pragma once

#include <cstdint>
#include <vector>

#include "recon/mri_model.hpp"

namespace recon {

/// A*(y): the aliased floor every other method is compared against.
ComplexImage ZeroFilled(MultiCoilKSpace const &y, SensitivityMaps const &s, SamplingMask const &p);

double SoftThreshold(double v, double t);

/// Periodized orthogonal Daubechies wavelet with two vanishing moments (4 taps).
/// Both image dimensions must be divisible by 2^levels.
RTensor WaveletForward(RTensor const &img, std::size_t levels);
RTensor WaveletInverse(RTensor const &coeffs, std::size_t levels);

struct CsOptions
{
  double alpha = 0.005;
  std::size_t maxIter = 60;
  double tolerance = 1e-6;
  std::size_t levels = 3;
};

struct CsResult
{
  ComplexImage image;
  std::vector<double> objective; // F(x_k), one entry per iteration, starting with x_0
  std::size_t iterations = 0;
};

/// min_x 1/2 ||A x - y||^2 + alpha (||W Re x||_1 + ||W Im x||_1) by monotone FISTA with unit step.
CsResult CsL1Wavelet(MultiCoilKSpace const &y, SensitivityMaps const &s, SamplingMask const &p,
                     CsOptions const &opt = {});

/// Power-iteration estimate of ||A||_2.
double OperatorNorm(SensitivityMaps const &s, SamplingMask const &p, std::size_t iters = 100,
                    std::uint64_t seed = 1);

} // namespace recon
