#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "s2ct/params.hpp"

namespace s2ct {

// Adam optimizer state. Moment buffers are keyed by parameter name and
// created on the first step.
struct AdamState {
  float lr = 3e-5f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  int64_t t = 0;
  std::unordered_map<std::string, std::vector<float>> m;
  std::unordered_map<std::string, std::vector<float>> v;
};

// One Adam update over every trainable parameter in the store, in
// registration order. Requires a populated gradient on each trainable
// parameter (rejects by name otherwise); gradients are zeroed after the
// update. Parameters with requires_grad=false are left untouched.
void adam_step(ParameterStore& params, AdamState& state);

// Optimizer persistence for resumable training: prefix.opt.rckp holds the
// moment buffers, prefix.opt.json the hyperparameters and step count.
void save_adam(const AdamState& state, const std::string& prefix);
AdamState load_adam(const std::string& prefix);

}  // namespace s2ct
