#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genmix/layers.hpp"

namespace genmix {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Adam with bias correction. Moments exist for trainable parameters only and
// are looked up by parameter name, so save/load and model reassembly keep
// them aligned.
class AdamState {
 public:
  AdamState() = default;
  AdamState(ParameterSet params, AdamConfig cfg);

  // One update over all trainable parameters with allocated gradients.
  // Throws NumericError naming the parameter on the first NaN gradient.
  void step(ParameterSet& params);

  std::int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

  struct Slot {
    std::string name;
    Tensor m;
    Tensor v;
  };
  const std::vector<Slot>& slots() const { return slots_; }
  std::vector<Slot>& slots() { return slots_; }
  void set_step_count(std::int64_t t) { step_count_ = t; }

 private:
  AdamConfig cfg_;
  std::int64_t step_count_ = 0;
  std::vector<Slot> slots_;
};

// Spec-facing convenience wrapper.
inline void adam_step(ParameterSet& params, AdamState& state) { state.step(params); }

}  // namespace genmix
