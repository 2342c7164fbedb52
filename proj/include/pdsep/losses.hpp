#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pdsep/nets.hpp"
#include "pdsep/random.hpp"
#include "pdsep/tensor.hpp"

namespace pdsep {

enum class CriticMode { Clip, GradientPenalty };

const char* to_string(CriticMode mode);
CriticMode critic_mode_from_string(const std::string& s);

struct LossConfig {
  double lambda_u = 1000.0;
  double lambda_v = 1000.0;
  CriticMode mode = CriticMode::Clip;
  double clip = 0.05;
  double lambda_gp = 10.0;
};

/// Throws on non-positive weights; returns warnings for weights outside
/// [100, 1000].
std::vector<std::string> validate(const LossConfig& cfg);

/// A differentiable map between tensors: a generator with its noise bound,
/// or a critic.
using Mapping = std::function<Tensor(const Tensor&)>;

/// Mean absolute deviation, the L1 distance used by the cycle terms.
Tensor mean_l1(const Tensor& a, const Tensor& b);

struct GeneratorLoss {
  Tensor total;
  double recon_u = 0.0;        // mean |u - G_B(G_A(u))|
  double recon_v = 0.0;        // mean |v - G_A(G_B(v))|
  double critic_fake_a = 0.0;  // D_A(G_A(u))
  double critic_fake_b = 0.0;  // D_B(G_B(v))
};

/// lambda_u*|u - G_B(G_A(u))| + lambda_v*|v - G_A(G_B(v))| - D_B(G_B(v)) - D_A(G_A(u))
GeneratorLoss generator_loss(const Tensor& u, const Tensor& v, const Mapping& ga, const Mapping& gb,
                             const Mapping& da, const Mapping& db, const LossConfig& cfg);

/// D(fake) - D(real)
Tensor critic_objective(const Tensor& real, const Tensor& fake, const Mapping& critic);

/// lambda_gp * (|grad_x D(x_hat)| - 1)^2 with x_hat = e*real + (1-e)*fake,
/// e ~ U(0,1). Differentiable in the critic parameters; exact for critics
/// whose activations are piecewise linear, which is all this library builds.
struct PenaltyTerm {
  Tensor value;
  double gradient_norm = 0.0;
};
PenaltyTerm gradient_penalty(const Critic& critic, const Tensor& real, const Tensor& fake, double lambda_gp, Rng& rng);

struct CriticLoss {
  Tensor total;
  double base = 0.0;     // D(fake) - D(real)
  double penalty = 0.0;  // 0 in clip mode
};

/// D_A(G_A(u)) - D_A(v) [+ penalty]
CriticLoss critic_loss_a(const Tensor& u, const Tensor& v, const Mapping& ga, const Critic& da, const LossConfig& cfg,
                         Rng& rng);
/// D_B(G_B(v)) - D_B(u) [+ penalty]
CriticLoss critic_loss_b(const Tensor& u, const Tensor& v, const Mapping& gb, const Critic& db, const LossConfig& cfg,
                         Rng& rng);

}  // namespace pdsep
