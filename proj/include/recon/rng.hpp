#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace recon {

/// Seeded generator with platform-independent output. std::mt19937_64's raw
/// stream is fixed by the standard; the distributions below are our own because
/// the standard library's are implementation-defined.
class Rng
{
public:
  explicit Rng(std::uint64_t seed)
    : engine_(seed)
  {
  }

  std::uint64_t bits() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform in (0, 1).
  double uniformOpen()
  {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n)
  {
    std::uint64_t const limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    std::uint64_t v;
    do { v = engine_(); } while (v >= limit);
    return v % n;
  }

  double normal()
  {
    if (hasSpare_) {
      hasSpare_ = false;
      return spare_;
    }
    double const u1 = uniformOpen();
    double const u2 = uniform();
    double const r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    hasSpare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  double gumbel() { return -std::log(-std::log(uniformOpen())); }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool hasSpare_ = false;
};

} // namespace recon
