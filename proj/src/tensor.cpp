#include "fcnt/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "fcnt/error.hpp"

namespace fcnt {

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), values_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape_.numel()) {
    throw DimensionError("numel", "buffer of " + std::to_string(values_.size()) +
                                      " values does not fit shape " + shape_.str());
  }
}

std::span<double> Tensor::grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void require_extent(const std::string& axis, std::size_t got, std::size_t expected) {
  if (got != expected) {
    throw DimensionError(axis, "expected " + std::to_string(expected) + ", got " + std::to_string(got));
  }
}

void require_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) throw NumericalError(what + " produced non-finite values");
}

}  // namespace fcnt
