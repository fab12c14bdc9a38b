#include "recon/fft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include <fftw3.h>

namespace recon {

namespace {

// FFTW's planner is not thread-safe; executing a finished plan on new arrays is.
class PlanCache
{
public:
  static PlanCache &Instance()
  {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int h, int w, int sign)
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_tuple(h, w, sign);
    if (auto it = plans_.find(key); it != plans_.end()) { return it->second; }
    std::vector<fftw_complex> scratch(static_cast<std::size_t>(h) * w);
    // UNALIGNED keeps the executed codelets independent of buffer alignment,
    // so repeated runs produce identical bits.
    fftw_plan p = fftw_plan_dft_2d(h, w, scratch.data(), scratch.data(), sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    Require(p != nullptr, ErrorCode::Internal, "FFTW failed to build a plan");
    plans_.emplace(key, p);
    return p;
  }

  ~PlanCache()
  {
    for (auto &kv : plans_) { fftw_destroy_plan(kv.second); }
  }

private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

CTensor Transform(CTensor const &x, int sign)
{
  Require(x.rank() == 2 || x.rank() == 3, ErrorCode::Shape, "fft2c expects a 2D image or a stack of 2D images, got " + ShapeString(x.shape()));
  std::size_t const h = x.dim(x.rank() - 2);
  std::size_t const w = x.dim(x.rank() - 1);
  Require(h >= 1 && w >= 1, ErrorCode::Shape, "fft2c needs non-empty spatial dims");
  std::size_t const slices = x.rank() == 3 ? x.dim(0) : 1;
  std::size_t const n = h * w;
  fftw_plan plan = PlanCache::Instance().get(static_cast<int>(h), static_cast<int>(w), sign);

  // y = fftshift(F(ifftshift(x))), with both shifts done as index lookups.
  std::size_t const sh_r = h / 2, sh_c = w / 2;
  double const scale = 1.0 / std::sqrt(static_cast<double>(n));

  CTensor out(x.shape());
  std::vector<Cx> buf(n);
  for (std::size_t s = 0; s < slices; ++s) {
    Cx const *src = x.data() + s * n;
    for (std::size_t r = 0; r < h; ++r) {
      std::size_t const rr = (r + sh_r) % h;
      for (std::size_t c = 0; c < w; ++c) {
        buf[r * w + c] = src[rr * w + (c + sh_c) % w];
      }
    }
    auto *io = reinterpret_cast<fftw_complex *>(buf.data());
    fftw_execute_dft(plan, io, io);
    Cx *dst = out.data() + s * n;
    for (std::size_t r = 0; r < h; ++r) {
      std::size_t const rr = (r + h - sh_r) % h;
      for (std::size_t c = 0; c < w; ++c) {
        dst[r * w + c] = buf[rr * w + (c + w - sh_c) % w] * scale;
      }
    }
  }
  return out;
}

} // namespace

CTensor Fft2c(CTensor const &x) { return Transform(x, FFTW_FORWARD); }
CTensor Ifft2c(CTensor const &y) { return Transform(y, FFTW_BACKWARD); }

} // namespace recon
