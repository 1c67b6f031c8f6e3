#include "genmix/adam.hpp"

#include <cmath>

#include "genmix/parallel.hpp"

namespace genmix {

AdamState::AdamState(ParameterSet params, AdamConfig cfg) : cfg_(cfg) {
  for (auto& r : params) {
    if (!r.trainable) continue;
    slots_.push_back({r.name, Tensor(r.tensor->shape()), Tensor(r.tensor->shape())});
  }
}

void AdamState::step(ParameterSet& params) {
  // NaN scan first so a poisoned gradient aborts before any state changes.
  for (auto& slot : slots_) {
    ParamRef* r = params.find(slot.name);
    if (r == nullptr || !same_shape(*r->tensor, slot.m))
      throw Error("adam: parameter " + slot.name + " missing or reshaped");
    if (!r->tensor->has_grad())
      throw Error("adam: parameter " + slot.name + " has no gradient");
    const auto g = r->tensor->grad();
    for (float v : g)
      if (std::isnan(v)) throw NumericError("adam: NaN gradient in " + slot.name);
  }
  ++step_count_;
  const auto t = static_cast<double>(step_count_);
  const float bc1 = static_cast<float>(1.0 - std::pow(cfg_.beta1, t));
  const float bc2 = static_cast<float>(1.0 - std::pow(cfg_.beta2, t));
  for (auto& slot : slots_) {
    ParamRef* r = params.find(slot.name);
    float* w = r->tensor->data();
    const auto g = r->tensor->grad();
    float* m = slot.m.data();
    float* v = slot.v.data();
    const std::int64_t n = slot.m.numel();
    parallel_for(0, n, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t i = lo; i < hi; ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g[static_cast<std::size_t>(i)];
        v[i] = cfg_.beta2 * v[i] +
               (1.0f - cfg_.beta2) * g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(i)];
        const float mhat = m[i] / bc1;
        const float vhat = v[i] / bc2;
        w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    });
  }
}

}  // namespace genmix
