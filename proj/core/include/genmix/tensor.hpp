#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "genmix/common.hpp"

namespace genmix {

std::int64_t shape_numel(std::span<const int> shape);
std::string shape_str(std::span<const int> shape);

// Dense row-major float32 tensor with an optional gradient buffer of the
// same shape. Gradients are lazily allocated and zero-initialized.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor full(std::vector<int> shape, float value);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  bool has_grad() const { return !grad_.empty(); }
  std::span<float> grad();
  std::span<const float> grad() const;
  void zero_grad();
  void drop_grad();

  void fill(float v);

  // Reinterprets the buffer under a new shape with identical element count.
  void reshape(std::vector<int> shape);

  std::uint64_t value_checksum() const;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
  std::vector<float> grad_;
};

bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace genmix
