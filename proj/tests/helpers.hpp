#pragma once

#include <cmath>
#include <functional>

#include "recon/autodiff.hpp"
#include "recon/mri_model.hpp"
#include "recon/rng.hpp"

namespace testutil {

using namespace recon;

inline RTensor RandomReal(Shape s, Rng &rng, double scale = 1.0)
{
  RTensor t(std::move(s));
  for (auto &v : t.vec()) { v = scale * rng.normal(); }
  return t;
}

inline CTensor RandomComplex(Shape s, Rng &rng, double scale = 1.0)
{
  CTensor t(std::move(s));
  for (auto &v : t.vec()) { v = scale * Cx(rng.normal(), rng.normal()); }
  return t;
}

/// Random maps normalized pixelwise.
inline SensitivityMaps RandomMaps(std::size_t c, std::size_t h, std::size_t w, Rng &rng)
{
  SensitivityMaps s{RandomComplex({c, h, w}, rng)};
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t k = 0; k < w; ++k) {
      double n = 0.0;
      for (std::size_t i = 0; i < c; ++i) { n += std::norm(s.maps(i, r, k)); }
      for (std::size_t i = 0; i < c; ++i) { s.maps(i, r, k) /= std::sqrt(n); }
    }
  }
  return s;
}

inline SamplingMask RandomMask(std::size_t h, std::size_t w, Rng &rng, double keep = 0.5)
{
  SamplingMask p = FullMask(h, w);
  for (auto &v : p.keep.vec()) { v = rng.uniform() < keep ? 1.0 : 0.0; }
  p.kind = MaskKind::Gaussian2d;
  return p;
}

struct GradCheck
{
  double error = 0.0;       // worst ||g - g_fd|| / max(||g||, ||g_fd||) over store entries
  std::size_t skipped = 0;  // entries whose stencil straddles a ReLU/abs kink
  std::size_t checked = 0;
};

/// Central differences of step h against the tape gradient. An entry whose difference quotient
/// changes between steps h and h/2 by more than 1e-3 relative is not differentiable on the
/// stencil (a kink lies inside it) and is skipped.
inline GradCheck CheckGradient(ad::ParameterStore &store, std::function<ad::Var(ad::Tape &)> const &loss,
                               double h = 1e-5)
{
  store.zeroGrad();
  {
    ad::Tape t;
    ad::Var l = loss(t);
    t.backward(l);
  }
  auto eval = [&] {
    ad::Tape t(false);
    return loss(t).real()[0];
  };
  GradCheck res;
  for (auto &e : store.entries()) {
    double dn = 0.0, an = 0.0, fn = 0.0;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      double const keep = e.value[i];
      auto quotient = [&](double step) {
        e.value[i] = keep + step;
        double const fp = eval();
        e.value[i] = keep - step;
        double const fm = eval();
        e.value[i] = keep;
        return (fp - fm) / (2.0 * step);
      };
      double const fd = quotient(h);
      double const fd2 = quotient(0.5 * h);
      if (std::abs(fd - fd2) > 1e-3 * std::abs(fd) + 1e-9) {
        ++res.skipped;
        continue;
      }
      ++res.checked;
      dn += (fd - e.grad[i]) * (fd - e.grad[i]);
      an += e.grad[i] * e.grad[i];
      fn += fd * fd;
    }
    double const scale = std::sqrt(std::max(an, fn));
    if (scale > 1e-12) { res.error = std::max(res.error, std::sqrt(dn) / scale); }
  }
  return res;
}

inline double GradientError(ad::ParameterStore &store, std::function<ad::Var(ad::Tape &)> const &loss,
                            double h = 1e-5)
{
  return CheckGradient(store, loss, h).error;
}

} // namespace testutil
