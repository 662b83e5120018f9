#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fcnt {

/// Extents of a rank-4 tensor: batch, channels, height, width.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense rank-4 array of doubles, row-major with the batch index outermost
/// (n, c, h, w). Gradient storage is allocated on demand and always has the
/// same shape as the values.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return values_[index(n, c, y, x)];
  }
  double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return values_[index(n, c, y, x)];
  }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Pointer to the (n, c) plane.
  double* plane(std::size_t n, std::size_t c) { return values_.data() + (n * shape_.c + c) * shape_.plane(); }
  const double* plane(std::size_t n, std::size_t c) const {
    return values_.data() + (n * shape_.c + c) * shape_.plane();
  }

  bool has_grad() const { return !grad_.empty(); }
  /// Allocates a zeroed gradient buffer if absent.
  std::span<double> grad();
  std::span<const double> grad() const { return grad_; }
  void zero_grad();
  void drop_grad() { grad_.clear(); grad_.shrink_to_fit(); }

  void fill(double v);
  /// True when every entry is finite.
  bool all_finite() const;

  bool operator==(const Tensor& other) const { return shape_ == other.shape_ && values_ == other.values_; }

 private:
  Shape shape_{};
  std::vector<double> values_;
  std::vector<double> grad_;
};

/// Throws DimensionError naming `axis` unless `got == expected`.
void require_extent(const std::string& axis, std::size_t got, std::size_t expected);

/// Throws NumericalError if `t` holds NaN or Inf.
void require_finite(const Tensor& t, const std::string& what);

}  // namespace fcnt
