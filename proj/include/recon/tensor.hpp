#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "recon/error.hpp"

namespace recon {

using Cx = std::complex<double>;
using Shape = std::vector<std::size_t>;

inline std::size_t NumElements(Shape const &shape)
{
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string ShapeString(Shape const &shape);

/// Dense row-major tensor with value semantics.
template <typename T>
class Tensor
{
public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{})
    : shape_(std::move(shape))
    , data_(NumElements(shape_), fill)
  {
  }
  Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape))
    , data_(std::move(data))
  {
    Require(data_.size() == NumElements(shape_), ErrorCode::Shape,
            "tensor data length " + std::to_string(data_.size()) + " does not match shape " + ShapeString(shape_));
  }

  Shape const &shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T *data() noexcept { return data_.data(); }
  T const *data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<T const> span() const noexcept { return data_; }
  std::vector<T> &vec() noexcept { return data_; }
  std::vector<T> const &vec() const noexcept { return data_; }

  T &operator[](std::size_t i) { return data_[i]; }
  T const &operator[](std::size_t i) const { return data_[i]; }

  // 2D / 3D element access for the common image layouts.
  T &operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  T const &operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  T &operator()(std::size_t ch, std::size_t r, std::size_t c) { return data_[(ch * shape_[1] + r) * shape_[2] + c]; }
  T const &operator()(std::size_t ch, std::size_t r, std::size_t c) const
  {
    return data_[(ch * shape_[1] + r) * shape_[2] + c];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(Tensor const &o) const = default;

private:
  Shape shape_;
  std::vector<T> data_;
};

using RTensor = Tensor<double>;
using CTensor = Tensor<Cx>;

inline void RequireSameShape(Shape const &a, Shape const &b, char const *what)
{
  Require(a == b, ErrorCode::Shape, std::string(what) + ": shape mismatch " + ShapeString(a) + " vs " + ShapeString(b));
}

double Norm(CTensor const &x);
double Norm(RTensor const &x);
/// <a, b> = sum conj(a) b
Cx Dot(CTensor const &a, CTensor const &b);
bool AllFinite(CTensor const &x);
bool AllFinite(RTensor const &x);

} // namespace recon
