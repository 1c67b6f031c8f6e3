#include "genmix/tensor.hpp"

#include <algorithm>
#include <cstdio>

namespace genmix {

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::int64_t shape_numel(std::span<const int> shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(std::span<const int> shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  for (int d : shape_) {
    if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_str(shape_));
  }
  data_.assign(static_cast<std::size_t>(shape_numel(shape_)), 0.0f);
}

Tensor Tensor::full(std::vector<int> shape, float value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

std::span<float> Tensor::grad() {
  if (grad_.empty()) grad_.assign(data_.size(), 0.0f);
  return grad_;
}

std::span<const float> Tensor::grad() const {
  if (grad_.empty()) throw Error("gradient buffer not allocated");
  return grad_;
}

void Tensor::zero_grad() {
  if (grad_.empty())
    grad_.assign(data_.size(), 0.0f);
  else
    std::fill(grad_.begin(), grad_.end(), 0.0f);
}

void Tensor::drop_grad() { grad_.clear(); }

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(std::vector<int> shape) {
  if (shape_numel(shape) != numel())
    throw ShapeError("reshape to " + shape_str(shape) + " changes element count of " +
                     shape_str(shape_));
  shape_ = std::move(shape);
}

std::uint64_t Tensor::value_checksum() const {
  return fnv1a64(data_.data(), data_.size() * sizeof(float));
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

}  // namespace genmix
