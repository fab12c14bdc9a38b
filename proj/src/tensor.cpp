#include "recon/tensor.hpp"

#include <cmath>

namespace recon {

char const *ErrorCodeName(ErrorCode code)
{
  switch (code) {
  case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
  case ErrorCode::Shape: return "SHAPE";
  case ErrorCode::Io: return "IO";
  case ErrorCode::Format: return "FORMAT";
  case ErrorCode::Version: return "VERSION";
  case ErrorCode::Truncated: return "TRUNCATED";
  case ErrorCode::Checksum: return "CHECKSUM";
  case ErrorCode::Diverged: return "DIVERGED";
  case ErrorCode::Config: return "CONFIG";
  case ErrorCode::Contract: return "CONTRACT";
  case ErrorCode::Calibration: return "CALIBRATION";
  case ErrorCode::Degenerate: return "DEGENERATE";
  case ErrorCode::Internal: return "INTERNAL";
  }
  return "UNKNOWN";
}

std::string ShapeString(Shape const &shape)
{
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) { s += ","; }
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

double Norm(CTensor const &x)
{
  double s = 0.0;
  for (auto const &v : x.span()) { s += std::norm(v); }
  return std::sqrt(s);
}

double Norm(RTensor const &x)
{
  double s = 0.0;
  for (double v : x.span()) { s += v * v; }
  return std::sqrt(s);
}

Cx Dot(CTensor const &a, CTensor const &b)
{
  RequireSameShape(a.shape(), b.shape(), "dot");
  Cx s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) { s += std::conj(a[i]) * b[i]; }
  return s;
}

bool AllFinite(CTensor const &x)
{
  for (auto const &v : x.span()) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) { return false; }
  }
  return true;
}

bool AllFinite(RTensor const &x)
{
  for (double v : x.span()) {
    if (!std::isfinite(v)) { return false; }
  }
  return true;
}

} // namespace recon
