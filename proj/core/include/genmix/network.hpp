#pragma once

#include <memory>
#include <string>
#include <vector>

#include "genmix/layers.hpp"

namespace genmix {

enum class Role { Generator, Discriminator, Classifier, LargeGenerator };

std::string role_str(Role r);
Role role_from_str(std::string_view s);

// Sequential network. Train-mode forwards record layer caches so backward()
// can run (repeatedly, e.g. one pass per class for DeepFool); eval-mode
// forwards with record=false leave the model untouched.
class NetworkModel {
 public:
  NetworkModel() = default;
  NetworkModel(std::string name, Role role);
  NetworkModel(const NetworkModel& other);
  NetworkModel& operator=(const NetworkModel& other);
  NetworkModel(NetworkModel&&) = default;
  NetworkModel& operator=(NetworkModel&&) = default;

  void add(std::unique_ptr<Layer> layer);

  Tensor forward(const Tensor& x, Mode mode) { return forward(x, mode, mode == Mode::Train); }
  Tensor forward(const Tensor& x, Mode mode, bool record);

  // Gradient of the recorded forward's output pulled back to its input.
  // Parameter gradients accumulate only when param_grads is set.
  Tensor backward(const Tensor& grad_out, bool param_grads = true);

  ParameterSet parameters();
  void zero_grad();
  std::int64_t trainable_count();

  // Fingerprint over all parameter values including running statistics.
  std::uint64_t checksum();

  const std::string& name() const { return name_; }
  Role role() const { return role_; }
  std::size_t layer_count() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }

 private:
  std::string name_;
  Role role_ = Role::Classifier;
  std::vector<std::unique_ptr<Layer>> layers_;
  bool recorded_ = false;
};

}  // namespace genmix
