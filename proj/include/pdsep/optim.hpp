#pragma once

#include <span>
#include <vector>

#include "pdsep/tensor.hpp"

namespace pdsep {

struct RmsPropConfig {
  double learning_rate = 5e-5;
  double decay = 0.9;
  double epsilon = 1e-8;
};

/// Squared-gradient accumulator for one parameter tensor.
struct RmsPropState {
  std::vector<float> accumulator;
};

void validate(const RmsPropConfig& cfg);

/// acc <- decay*acc + (1-decay)*g^2 ; param <- param - lr*g/(sqrt(acc)+eps)
void rmsprop_step(Tensor& param, RmsPropState& state, const RmsPropConfig& cfg);

/// Clamp every entry of every tensor to [-c, c].
void clip_weights(std::span<Tensor> params, double c);

}  // namespace pdsep
