#pragma once

#include "recon/tensor.hpp"

namespace recon {

/// Centered, orthonormal 2D DFT over the last two axes. Rank-2 input is one
/// image; rank-3 input is a stack transformed slice by slice. The DC sample
/// sits at index (h/2, w/2) on both sides of the transform.
CTensor Fft2c(CTensor const &x);
/// Inverse (and adjoint) of Fft2c.
CTensor Ifft2c(CTensor const &y);

} // namespace recon
