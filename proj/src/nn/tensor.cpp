#include "opsdann/nn/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "opsdann/error.hpp"

namespace opsdann::nn {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto extent : shape_) {
    if (extent == 0) throw Error("tensor extents must be positive, got " + shape_string(shape_));
  }
  values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  for (auto extent : shape_) {
    if (extent == 0) throw Error("tensor extents must be positive, got " + shape_string(shape_));
  }
  if (values_.size() != shape_size(shape_)) {
    throw Error("tensor of shape " + shape_string(shape_) + " given " +
                std::to_string(values_.size()) + " values");
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw Error("axis out of range for tensor " + shape_string(shape_));
  return shape_[axis];
}

std::span<double> Tensor::grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { grad_.assign(values_.size(), 0.0); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw Error("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.values_ = values_;
  return out;
}

void Tensor::check_finite(std::string_view what) const { nn::check_finite(values_, what); }

void check_finite(std::span<const double> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error("non-finite value in " + std::string(what) + " at index " + std::to_string(i));
    }
  }
}

}  // namespace opsdann::nn
