#include "genmix/network.hpp"

namespace genmix {

std::string role_str(Role r) {
  switch (r) {
    case Role::Generator: return "generator";
    case Role::Discriminator: return "discriminator";
    case Role::Classifier: return "classifier";
    case Role::LargeGenerator: return "large_generator";
  }
  return "unknown";
}

Role role_from_str(std::string_view s) {
  if (s == "generator") return Role::Generator;
  if (s == "discriminator") return Role::Discriminator;
  if (s == "classifier") return Role::Classifier;
  if (s == "large_generator") return Role::LargeGenerator;
  throw FormatError("unknown model role: " + std::string(s));
}

NetworkModel::NetworkModel(std::string name, Role role)
    : name_(std::move(name)), role_(role) {}

NetworkModel::NetworkModel(const NetworkModel& other)
    : name_(other.name_), role_(other.role_), recorded_(false) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

NetworkModel& NetworkModel::operator=(const NetworkModel& other) {
  if (this == &other) return *this;
  NetworkModel tmp(other);
  *this = std::move(tmp);
  return *this;
}

void NetworkModel::add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

Tensor NetworkModel::forward(const Tensor& x, Mode mode, bool record) {
  Tensor cur = x;
  for (auto& l : layers_) cur = l->forward(cur, mode, record);
  recorded_ = record;
  return cur;
}

Tensor NetworkModel::backward(const Tensor& grad_out, bool param_grads) {
  if (!recorded_)
    throw Error(name_ + ": backward without a recorded forward");
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    g = (*it)->backward(g, param_grads);
  return g;
}

ParameterSet NetworkModel::parameters() {
  ParameterSet ps;
  for (auto& l : layers_) l->collect_params(ps);
  return ps;
}

void NetworkModel::zero_grad() {
  for (auto& r : parameters()) r.tensor->zero_grad();
}

std::int64_t NetworkModel::trainable_count() {
  auto ps = parameters();
  return param_count(ps, true);
}

std::uint64_t NetworkModel::checksum() {
  std::uint64_t h = kFnvOffset;
  for (auto& r : parameters()) {
    h = fnv1a64(r.name.data(), r.name.size(), h);
    h = fnv1a64(r.tensor->data(), static_cast<std::size_t>(r.tensor->numel()) * sizeof(float), h);
  }
  return h;
}

}  // namespace genmix
