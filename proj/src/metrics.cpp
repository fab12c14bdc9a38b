#include "recon/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace recon {

namespace {

double const kNaN = std::numeric_limits<double>::quiet_NaN();
std::size_t const kBins = 256;

void Check2d(RTensor const &a, char const *what)
{
  Require(a.rank() == 2, ErrorCode::Shape, std::string(what) + " must be [H,W], got " + ShapeString(a.shape()));
}

double MaxOf(RTensor const &a)
{
  return a.size() == 0 ? 0.0 : *std::max_element(a.vec().begin(), a.vec().end());
}

} // namespace

RTensor Magnitude(CTensor const &x)
{
  RTensor m(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) { m[i] = std::abs(x[i]); }
  return m;
}

double Ssim(RTensor const &test, RTensor const &ref)
{
  RequireSameShape(test.shape(), ref.shape(), "ssim");
  Check2d(ref, "ssim input");
  std::size_t const win = 7, h = ref.dim(0), w = ref.dim(1);
  Require(h >= win && w >= win, ErrorCode::Shape, "ssim needs images of at least 7x7");
  double const L = MaxOf(ref);
  double const c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  double const np = static_cast<double>(win * win), cov = np / (np - 1.0);

  // integral images of x, y, x^2, y^2, xy
  std::size_t const W = w + 1;
  std::vector<double> ix((h + 1) * W), iy(ix.size()), ixx(ix.size()), iyy(ix.size()), ixy(ix.size());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double const x = test(r, c), y = ref(r, c);
      std::size_t const o = (r + 1) * W + c + 1, a = r * W + c + 1, b = (r + 1) * W + c, d = r * W + c;
      ix[o] = x + ix[a] + ix[b] - ix[d];
      iy[o] = y + iy[a] + iy[b] - iy[d];
      ixx[o] = x * x + ixx[a] + ixx[b] - ixx[d];
      iyy[o] = y * y + iyy[a] + iyy[b] - iyy[d];
      ixy[o] = x * y + ixy[a] + ixy[b] - ixy[d];
    }
  }
  auto box = [&](std::vector<double> const &t, std::size_t r, std::size_t c) {
    return (t[(r + win) * W + c + win] - t[r * W + c + win] - t[(r + win) * W + c] + t[r * W + c]) / np;
  };
  double acc = 0.0;
  for (std::size_t r = 0; r + win <= h; ++r) {
    for (std::size_t c = 0; c + win <= w; ++c) {
      double const mx = box(ix, r, c), my = box(iy, r, c);
      double const vx = cov * (box(ixx, r, c) - mx * mx);
      double const vy = cov * (box(iyy, r, c) - my * my);
      double const vxy = cov * (box(ixy, r, c) - mx * my);
      acc += ((2 * mx * my + c1) * (2 * vxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return acc / static_cast<double>((h - win + 1) * (w - win + 1));
}

double Psnr(RTensor const &test, RTensor const &ref)
{
  RequireSameShape(test.shape(), ref.shape(), "psnr");
  Require(ref.size() > 0, ErrorCode::Shape, "psnr of empty images");
  double mse = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) { mse += (test[i] - ref[i]) * (test[i] - ref[i]); }
  mse /= static_cast<double>(ref.size());
  if (mse == 0.0) { return std::numeric_limits<double>::infinity(); }
  double const peak = MaxOf(ref);
  return 10.0 * std::log10(peak * peak / mse);
}

double Percentile(std::vector<double> values, double q)
{
  Require(!values.empty(), ErrorCode::Degenerate, "percentile of an empty set");
  Require(q >= 0.0 && q <= 100.0, ErrorCode::InvalidArgument, "percentile must lie in [0,100]");
  std::sort(values.begin(), values.end());
  double const pos = q / 100.0 * static_cast<double>(values.size() - 1);
  auto const i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= values.size()) { return values.back(); }
  double const f = pos - static_cast<double>(i);
  return values[i] + f * (values[i + 1] - values[i]);
}

bool Otsu::foreground(double v) const
{
  auto b = static_cast<std::size_t>(std::max(0.0, std::floor((v - lo) / width)));
  return std::min(b, kBins - 1) > bin;
}

Otsu OtsuThreshold(RTensor const &values)
{
  Require(values.size() > 0, ErrorCode::Degenerate, "otsu threshold of an empty set");
  auto [mn, mx] = std::minmax_element(values.vec().begin(), values.vec().end());
  double const lo = *mn, hi = *mx;
  Require(hi > lo, ErrorCode::Degenerate, "otsu threshold of a constant input");
  double const width = (hi - lo) / static_cast<double>(kBins);

  std::vector<double> count(kBins, 0.0), sum(kBins, 0.0);
  for (double v : values.vec()) {
    auto b = std::min(static_cast<std::size_t>(std::floor((v - lo) / width)), kBins - 1);
    count[b] += 1.0;
    sum[b] += v;
  }
  double const n = static_cast<double>(values.size());
  double total = 0.0;
  for (double s : sum) { total += s; }

  double best = -1.0, n0 = 0.0, s0 = 0.0;
  std::size_t bestBin = 0;
  for (std::size_t k = 0; k + 1 < kBins; ++k) {
    n0 += count[k];
    s0 += sum[k];
    double const n1 = n - n0;
    if (n0 == 0.0 || n1 == 0.0) { continue; }
    double const m0 = s0 / n0, m1 = (total - s0) / n1;
    double const between = (n0 / n) * (n1 / n) * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      bestBin = k;
    }
  }
  return {lo + static_cast<double>(bestBin + 1) * width, lo, width, bestBin};
}

RTensor OtsuMask(RTensor const &mag)
{
  Otsu const t = OtsuThreshold(mag);
  RTensor m(mag.shape());
  for (std::size_t i = 0; i < mag.size(); ++i) { m[i] = t.foreground(mag[i]) ? 1.0 : 0.0; }
  return m;
}

RTensor DilateDisk(RTensor const &mask, double radius)
{
  Check2d(mask, "mask");
  std::size_t const h = mask.dim(0), w = mask.dim(1);
  auto const R = static_cast<long>(std::floor(radius));
  RTensor out(mask.shape());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (mask(r, c) == 0.0) { continue; }
      for (long dr = -R; dr <= R; ++dr) {
        for (long dc = -R; dc <= R; ++dc) {
          if (static_cast<double>(dr * dr + dc * dc) > radius * radius) { continue; }
          long const rr = static_cast<long>(r) + dr, cc = static_cast<long>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) { continue; }
          out(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) = 1.0;
        }
      }
    }
  }
  return out;
}

double ContrastResolution(RTensor const &mag, RTensor const &lesion, RTensor const &wm, double dilation)
{
  RequireSameShape(mag.shape(), lesion.shape(), "contrast resolution lesion mask");
  RequireSameShape(mag.shape(), wm.shape(), "contrast resolution WM mask");
  RTensor const grown = DilateDisk(lesion, dilation);
  double sl = 0.0, nl = 0.0, sw = 0.0, nw = 0.0;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    if (lesion[i] != 0.0) {
      sl += mag[i];
      nl += 1.0;
    } else if (grown[i] != 0.0 && wm[i] != 0.0) {
      sw += mag[i];
      nw += 1.0;
    }
  }
  Require(nl > 0.0, ErrorCode::Degenerate, "lesion mask is empty");
  Require(nw > 0.0, ErrorCode::Degenerate, "no white matter surrounds the lesion");
  double const a = sl / nl, b = sw / nw;
  Require(a + b != 0.0, ErrorCode::Degenerate, "lesion and surrounding signal are both zero");
  return (a - b) / (a + b);
}

double WmNoise(RTensor const &mag, RTensor const &wm)
{
  Check2d(mag, "image");
  RequireSameShape(mag.shape(), wm.shape(), "white matter mask");
  double s = 0.0, n = 0.0;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    if (wm[i] != 0.0) {
      s += mag[i];
      n += 1.0;
    }
  }
  Require(n > 0.0, ErrorCode::Degenerate, "white matter mask is empty");
  double const mean = s / n;
  Require(mean > 0.0, ErrorCode::Degenerate, "mean white matter intensity is zero");

  std::size_t const h = mag.dim(0), w = mag.dim(1);
  auto diff = [](double a, double b, std::size_t span) { return (a - b) / static_cast<double>(span); };
  std::vector<double> grads;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (wm(r, c) == 0.0) { continue; }
      double gx = 0.0, gy = 0.0;
      if (w > 1) {
        std::size_t const c0 = c == 0 ? 0 : c - 1, c1 = c + 1 == w ? c : c + 1;
        gx = diff(mag(r, c1), mag(r, c0), c1 - c0);
      }
      if (h > 1) {
        std::size_t const r0 = r == 0 ? 0 : r - 1, r1 = r + 1 == h ? r : r + 1;
        gy = diff(mag(r1, c), mag(r0, c), r1 - r0);
      }
      grads.push_back(std::hypot(gx, gy) / mean);
    }
  }
  double const top = Percentile(grads, 99.0);
  if (top <= 0.0) { return 0.0; }
  std::vector<std::size_t> hist(kBins, 0);
  double const width = top / static_cast<double>(kBins);
  for (double g : grads) {
    if (g > top) { continue; }
    hist[std::min(static_cast<std::size_t>(g / width), kBins - 1)] += 1;
  }
  auto const mode = static_cast<std::size_t>(std::max_element(hist.begin(), hist.end()) - hist.begin());
  return (static_cast<double>(mode) + 0.5) * width;
}

double BgNoise(RTensor const &mag)
{
  RTensor const tissue = OtsuMask(mag);
  std::vector<double> bg;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    if (tissue[i] == 0.0) { bg.push_back(mag[i]); }
  }
  Require(!bg.empty(), ErrorCode::Degenerate, "image has no background");
  return Percentile(std::move(bg), 99.0);
}

CohortMaxima MaximaOf(std::vector<NoiseTriple> const &rows)
{
  Require(!rows.empty(), ErrorCode::InvalidArgument, "weighted average needs at least one row");
  CohortMaxima m{rows[0].cr, rows[0].wmn, rows[0].bgn};
  for (auto const &r : rows) {
    m.cr = std::max(m.cr, r.cr);
    m.wmn = std::max(m.wmn, r.wmn);
    m.bgn = std::max(m.bgn, r.bgn);
  }
  return m;
}

std::vector<double> WeightedAverage(std::vector<NoiseTriple> const &rows)
{
  return WeightedAverage(rows, MaximaOf(rows));
}

std::vector<double> WeightedAverage(std::vector<NoiseTriple> const &rows, CohortMaxima const &m)
{
  Require(m.cr > 0.0 && m.wmn > 0.0 && m.bgn > 0.0, ErrorCode::Degenerate,
          "weighted average needs positive cohort maxima");
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto const &r : rows) { out.push_back((1.0 - r.cr / m.cr) + r.wmn / m.wmn + r.bgn / m.bgn); }
  return out;
}

double Snr(RTensor const &mag, MultiCoilKSpace const &y, SamplingMask const &p, double cornerFrac)
{
  Require(y.samples.rank() == 3, ErrorCode::Shape, "k-space must be [C,H,W]");
  std::size_t const h = y.height(), w = y.width();
  Require(p.keep.shape() == Shape{h, w}, ErrorCode::Shape, "mask does not match k-space");

  RTensor const fg = OtsuMask(mag);
  double s = 0.0, n = 0.0;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    if (fg[i] != 0.0) {
      s += mag[i];
      n += 1.0;
    }
  }
  double const signal = s / n;

  auto side = static_cast<std::size_t>(std::lround(cornerFrac * static_cast<double>(std::min(h, w))));
  side = std::clamp<std::size_t>(side, 1, std::min(h, w) / 2);
  double noise = 0.0;
  for (std::size_t coil = 0; coil < y.coils(); ++coil) {
    std::vector<double> vals;
    for (std::size_t r = 0; r < h; ++r) {
      bool const rowIn = r < side || r >= h - side;
      for (std::size_t c = 0; rowIn && c < w; ++c) {
        if ((c < side || c >= w - side) && p.keep(r, c) != 0.0) { vals.push_back(std::abs(y.samples(coil, r, c))); }
      }
    }
    if (vals.empty()) { return kNaN; }
    noise += Percentile(std::move(vals), 50.0);
  }
  noise /= static_cast<double>(y.coils());
  Require(noise > 0.0, ErrorCode::Degenerate, "k-space periphery has zero magnitude");
  return signal / noise;
}

MetricsReport ComputeMetrics(MetricsInput const &in)
{
  RTensor const mag = Magnitude(*in.recon);
  RTensor const ref = Magnitude(*in.reference);
  MetricsReport m;
  m.ssim = Ssim(mag, ref);
  m.psnrDb = Psnr(mag, ref);
  bool const hasLesion = in.lesion && in.lesion->size() > 0 &&
                         std::any_of(in.lesion->vec().begin(), in.lesion->vec().end(), [](double v) { return v != 0.0; });
  m.cr = hasLesion ? ContrastResolution(mag, *in.lesion, *in.wm) : kNaN;
  m.wmn = in.wm && in.wm->size() > 0 ? WmNoise(mag, *in.wm) : kNaN;
  m.bgn = BgNoise(mag);
  m.snr = in.y ? Snr(mag, *in.y, *in.mask) : kNaN;
  return m;
}

} // namespace recon
