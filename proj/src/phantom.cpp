#include "recon/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "recon/rng.hpp"

namespace recon {

using nlohmann::json;

namespace {

double Deg(double d) { return d * std::numbers::pi / 180.0; }

double Coord(std::size_t i, std::size_t n) { return (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n) - 1.0; }

void CheckInside(Ellipse const &e, char const *what, std::size_t i)
{
  double const t = Deg(e.angleDeg);
  double const ex = std::hypot(e.a * std::cos(t), e.b * std::sin(t));
  double const ey = std::hypot(e.a * std::sin(t), e.b * std::cos(t));
  Require(e.a > 0.0 && e.b > 0.0, ErrorCode::InvalidArgument,
          std::string(what) + " " + std::to_string(i) + " has non-positive axes");
  Require(std::abs(e.cx) + ex <= 1.0 + 1e-12 && std::abs(e.cy) + ey <= 1.0 + 1e-12, ErrorCode::InvalidArgument,
          std::string(what) + " " + std::to_string(i) + " leaves the field of view");
}

} // namespace

bool Ellipse::contains(double u, double v) const
{
  double const t = Deg(angleDeg), du = u - cx, dv = v - cy;
  double const p = (du * std::cos(t) + dv * std::sin(t)) / a;
  double const q = (-du * std::sin(t) + dv * std::cos(t)) / b;
  return p * p + q * q <= 1.0;
}

void PhantomSpec::validate() const
{
  Require(height >= 1 && width >= 1, ErrorCode::InvalidArgument, "phantom grid must be non-empty");
  for (std::size_t i = 0; i < ellipses.size(); ++i) {
    CheckInside(ellipses[i], "ellipse", i);
    Require(ellipses[i].intensity >= 0.0 && ellipses[i].intensity <= 1.0, ErrorCode::InvalidArgument,
            "ellipse " + std::to_string(i) + " intensity outside [0,1]");
  }
  for (std::size_t i = 0; i < lesions.size(); ++i) { CheckInside(lesions[i], "lesion", i); }
  Require(wmHost >= -1 && wmHost < static_cast<int>(ellipses.size()), ErrorCode::InvalidArgument,
          "white matter host index out of range");
}

PhantomSpec DefaultBrainSpec(std::size_t h, std::size_t w)
{
  PhantomSpec s;
  s.height = h;
  s.width = w;
  s.ellipses = {
    {0.0, 0.0, 0.70, 0.90, 0.0, 0.80},    // scalp
    {0.0, 0.0, 0.64, 0.84, 0.0, 0.55},    // cortex
    {0.0, 0.02, 0.52, 0.72, 0.0, 0.40},   // white matter
    {-0.12, -0.05, 0.07, 0.22, -18.0, 0.12},
    {0.12, -0.05, 0.07, 0.22, 18.0, 0.12},
    {0.0, 0.36, 0.09, 0.06, 0.0, 0.55},
    {-0.30, 0.40, 0.05, 0.05, 0.0, 0.50},
  };
  s.wmHost = 2;
  s.lesions = {{0.30, 0.20, 0.07, 0.06, 0.0, 0.20}, {-0.28, -0.38, 0.06, 0.05, 30.0, 0.25}};
  s.phase = {0.3, 0.4, -0.2, 0.3, 0.1, -0.2};
  return s;
}

PhantomSpec RandomizeSpec(PhantomSpec const &base, std::uint64_t seed)
{
  Rng rng(seed);
  PhantomSpec s = base;
  s.seed = seed;
  for (auto &e : s.ellipses) {
    double const k = rng.uniform(0.95, 1.0);
    e.a *= k;
    e.b *= k;
    e.cx += rng.uniform(-0.02, 0.02);
    e.cy += rng.uniform(-0.02, 0.02);
    e.angleDeg += rng.uniform(-5.0, 5.0);
    e.intensity = std::clamp(e.intensity + rng.uniform(-0.03, 0.03), 0.0, 1.0);
  }
  // keep the jittered geometry inside the field of view
  for (auto &e : s.ellipses) {
    double const t = Deg(e.angleDeg);
    double const ex = std::hypot(e.a * std::cos(t), e.b * std::sin(t));
    double const ey = std::hypot(e.a * std::sin(t), e.b * std::cos(t));
    e.cx = std::clamp(e.cx, -(1.0 - ex), 1.0 - ex);
    e.cy = std::clamp(e.cy, -(1.0 - ey), 1.0 - ey);
  }
  if (s.wmHost >= 0) {
    Ellipse const &host = s.ellipses[static_cast<std::size_t>(s.wmHost)];
    s.lesions.clear();
    std::size_t const n = 1 + rng.below(3);
    for (std::size_t i = 0; i < n; ++i) {
      double const r = 0.6 * std::sqrt(rng.uniform()), phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      double const t = Deg(host.angleDeg);
      double const lu = r * host.a * std::cos(phi), lv = r * host.b * std::sin(phi);
      Ellipse l;
      l.cx = host.cx + lu * std::cos(t) - lv * std::sin(t);
      l.cy = host.cy + lu * std::sin(t) + lv * std::cos(t);
      l.a = rng.uniform(0.05, 0.09);
      l.b = rng.uniform(0.05, 0.09);
      l.angleDeg = rng.uniform(0.0, 180.0);
      l.intensity = rng.uniform(0.15, 0.30);
      s.lesions.push_back(l);
    }
  }
  for (auto &c : s.phase) { c += rng.uniform(-0.2, 0.2); }
  return s;
}

namespace {

json EllipseJson(Ellipse const &e)
{
  return {{"cx", e.cx}, {"cy", e.cy}, {"a", e.a}, {"b", e.b}, {"angle_deg", e.angleDeg}, {"intensity", e.intensity}};
}

Ellipse EllipseFrom(json const &j)
{
  Ellipse e;
  e.cx = j.value("cx", 0.0);
  e.cy = j.value("cy", 0.0);
  e.a = j.at("a").get<double>();
  e.b = j.at("b").get<double>();
  e.angleDeg = j.value("angle_deg", 0.0);
  e.intensity = j.at("intensity").get<double>();
  return e;
}

} // namespace

std::string SpecToJson(PhantomSpec const &s)
{
  json j;
  j["height"] = s.height;
  j["width"] = s.width;
  j["ellipses"] = json::array();
  for (auto const &e : s.ellipses) { j["ellipses"].push_back(EllipseJson(e)); }
  j["wm_host"] = s.wmHost;
  j["lesions"] = json::array();
  for (auto const &e : s.lesions) { j["lesions"].push_back(EllipseJson(e)); }
  j["phase"] = s.phase;
  j["seed"] = s.seed;
  return j.dump();
}

PhantomSpec SpecFromJson(std::string const &text)
{
  try {
    json const j = json::parse(text);
    PhantomSpec s;
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    for (auto const &e : j.value("ellipses", json::array())) { s.ellipses.push_back(EllipseFrom(e)); }
    s.wmHost = j.value("wm_host", -1);
    for (auto const &e : j.value("lesions", json::array())) { s.lesions.push_back(EllipseFrom(e)); }
    if (j.contains("phase")) {
      auto const p = j["phase"].get<std::vector<double>>();
      Require(p.size() <= 6, ErrorCode::Config, "phase polynomial has at most 6 coefficients");
      std::copy(p.begin(), p.end(), s.phase.begin());
    }
    s.seed = j.value("seed", std::uint64_t{0});
    s.validate();
    return s;
  } catch (json::exception const &e) {
    Fail(ErrorCode::Config, std::string("bad phantom spec: ") + e.what());
  }
}

Phantom MakePhantom(PhantomSpec const &spec)
{
  spec.validate();
  std::size_t const h = spec.height, w = spec.width;
  Phantom ph{CTensor({h, w}), RTensor({h, w}), RTensor({h, w})};
  auto const &c = spec.phase;
  for (std::size_t r = 0; r < h; ++r) {
    double const v = Coord(r, h);
    for (std::size_t col = 0; col < w; ++col) {
      double const u = Coord(col, w);
      double mag = 0.0;
      int owner = -1;
      for (std::size_t i = 0; i < spec.ellipses.size(); ++i) {
        if (spec.ellipses[i].contains(u, v)) {
          mag = spec.ellipses[i].intensity;
          owner = static_cast<int>(i);
        }
      }
      // overlapping lesions take the largest delta
      bool lesion = false;
      double delta = 0.0;
      for (auto const &l : spec.lesions) {
        if (l.contains(u, v)) {
          delta = lesion ? std::max(delta, l.intensity) : l.intensity;
          lesion = true;
        }
      }
      mag += delta;
      ph.lesion(r, col) = lesion ? 1.0 : 0.0;
      ph.wm(r, col) = (owner >= 0 && owner == spec.wmHost && !lesion) ? 1.0 : 0.0;
      double const phi = c[0] + c[1] * u + c[2] * v + c[3] * u * u + c[4] * u * v + c[5] * v * v;
      ph.image(r, col) = std::polar(mag, phi);
    }
  }
  return ph;
}

SensitivityMaps MakeCoils(std::size_t nCoils, std::size_t h, std::size_t w, double profileWidth)
{
  Require(nCoils >= 1, ErrorCode::InvalidArgument, "need at least one coil");
  Require(profileWidth > 0.0, ErrorCode::InvalidArgument, "coil profile width must be positive");
  SensitivityMaps s{CTensor({nCoils, h, w})};
  if (nCoils == 1) {
    s.maps.fill(Cx(1.0, 0.0));
    return s;
  }
  double const ring = 1.2, ramp = 0.5;
  for (std::size_t i = 0; i < nCoils; ++i) {
    double const t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(nCoils);
    double const px = ring * std::cos(t), py = ring * std::sin(t);
    for (std::size_t r = 0; r < h; ++r) {
      double const v = Coord(r, h);
      for (std::size_t c = 0; c < w; ++c) {
        double const u = Coord(c, w);
        double const d2 = (u - px) * (u - px) + (v - py) * (v - py);
        double const mag = std::exp(-d2 / (2.0 * profileWidth * profileWidth));
        s.maps(i, r, c) = std::polar(mag, t + ramp * (u * std::cos(t) + v * std::sin(t)));
      }
    }
  }
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double n = 0.0;
      for (std::size_t i = 0; i < nCoils; ++i) { n += std::norm(s.maps(i, r, c)); }
      n = std::sqrt(n);
      for (std::size_t i = 0; i < nCoils; ++i) { s.maps(i, r, c) /= n; }
    }
  }
  return s;
}

void DatasetRecord::validate() const
{
  Shape const img = reference.shape();
  Require(img.size() == 2, ErrorCode::Shape, "reference must be [H,W]");
  Require(maps.maps.shape().size() == 3 && maps.height() == img[0] && maps.width() == img[1], ErrorCode::Shape,
          "maps " + ShapeString(maps.maps.shape()) + " do not match reference " + ShapeString(img));
  Require(y.samples.shape() == maps.maps.shape(), ErrorCode::Shape, "k-space does not match maps");
  Require(mask.keep.shape() == img, ErrorCode::Shape, "mask does not match reference");
  Require(lesion.size() == 0 || lesion.shape() == img, ErrorCode::Shape, "lesion mask does not match reference");
  Require(wm.size() == 0 || wm.shape() == img, ErrorCode::Shape, "WM mask does not match reference");
}

DatasetRecord SimulateAcquisition(Phantom const &phantom, SensitivityMaps const &maps, SamplingMask const &mask,
                                  double sigma, std::uint64_t seed)
{
  Require(sigma >= 0.0 && std::isfinite(sigma), ErrorCode::InvalidArgument, "sigma must be >= 0");
  DatasetRecord rec;
  rec.reference = phantom.image;
  double peak = 0.0;
  for (auto const &v : rec.reference.vec()) { peak = std::max(peak, std::abs(v)); }
  if (peak > 0.0) {
    for (auto &v : rec.reference.vec()) { v /= peak; }
  }
  rec.maps = maps;
  rec.mask = mask;
  rec.lesion = phantom.lesion;
  rec.wm = phantom.wm;
  rec.seed = seed;
  rec.sigma = sigma;
  rec.y = AddNoise(ForwardOp(rec.reference, maps, mask), mask, sigma, seed);
  rec.validate();
  return rec;
}

} // namespace recon
