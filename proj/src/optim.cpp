#include "pdsep/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pdsep/error.hpp"

namespace pdsep {

void validate(const RmsPropConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
    throw InvalidArgument("rmsprop: learning rate must be finite and non-negative");
  if (!(cfg.decay > 0.0 && cfg.decay < 1.0)) throw InvalidArgument("rmsprop: decay must lie in (0,1)");
  if (!(cfg.epsilon > 0.0)) throw InvalidArgument("rmsprop: epsilon must be positive");
}

void rmsprop_step(Tensor& param, RmsPropState& state, const RmsPropConfig& cfg) {
  if (!param.has_grad()) throw InvalidArgument("rmsprop: parameter has no gradient");
  auto g = param.grad();
  auto p = param.mutable_data();
  if (state.accumulator.empty()) state.accumulator.assign(p.size(), 0.0f);
  if (state.accumulator.size() != p.size())
    throw InvalidArgument("rmsprop: state holds " + std::to_string(state.accumulator.size()) +
                          " entries, parameter has " + std::to_string(p.size()));
  const float rho = static_cast<float>(cfg.decay);
  const float one_minus_rho = static_cast<float>(1.0 - cfg.decay);
  const float lr = static_cast<float>(cfg.learning_rate);
  const float eps = static_cast<float>(cfg.epsilon);
  auto& acc = state.accumulator;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc[i] = rho * acc[i] + one_minus_rho * g[i] * g[i];
    p[i] -= lr * g[i] / (std::sqrt(acc[i]) + eps);
  }
}

void clip_weights(std::span<Tensor> params, double c) {
  if (!(c > 0.0)) throw InvalidArgument("clip_weights: clipping bound must be positive");
  const float hi = static_cast<float>(c);
  for (auto& t : params)
    for (auto& v : t.mutable_data()) v = std::clamp(v, -hi, hi);
}

}  // namespace pdsep
