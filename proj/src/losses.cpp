#include "pdsep/losses.hpp"

#include <cmath>

#include "pdsep/error.hpp"

namespace pdsep {

const char* to_string(CriticMode mode) { return mode == CriticMode::Clip ? "clip" : "gp"; }

CriticMode critic_mode_from_string(const std::string& s) {
  if (s == "clip") return CriticMode::Clip;
  if (s == "gp") return CriticMode::GradientPenalty;
  throw InvalidArgument("unknown critic mode '" + s + "' (expected clip or gp)");
}

std::vector<std::string> validate(const LossConfig& cfg) {
  if (!(cfg.lambda_u > 0.0) || !(cfg.lambda_v > 0.0)) throw InvalidArgument("loss: cycle weights must be positive");
  if (cfg.mode == CriticMode::Clip && !(cfg.clip > 0.0)) throw InvalidArgument("loss: clipping bound must be positive");
  if (cfg.mode == CriticMode::GradientPenalty && !(cfg.lambda_gp > 0.0))
    throw InvalidArgument("loss: gradient penalty weight must be positive");
  std::vector<std::string> warnings;
  for (double l : {cfg.lambda_u, cfg.lambda_v})
    if (l < 100.0 || l > 1000.0)
      warnings.push_back("cycle weight " + std::to_string(l) + " lies outside the usual [100, 1000] range");
  return warnings;
}

Tensor mean_l1(const Tensor& a, const Tensor& b) {
  return mul_scalar(abs_sum(sub(a, b)), 1.0f / static_cast<float>(a.size()));
}

GeneratorLoss generator_loss(const Tensor& u, const Tensor& v, const Mapping& ga, const Mapping& gb,
                             const Mapping& da, const Mapping& db, const LossConfig& cfg) {
  if (u.shape() != v.shape())
    throw InvalidArgument("generator_loss: shape mismatch " + shape_string(u.shape()) + " vs " + shape_string(v.shape()));
  const Tensor fake_v = ga(u);
  const Tensor fake_u = gb(v);
  const Tensor cycle_u = mean_l1(u, gb(fake_v));
  const Tensor cycle_v = mean_l1(v, ga(fake_u));
  const Tensor score_a = da(fake_v);
  const Tensor score_b = db(fake_u);

  GeneratorLoss out;
  out.recon_u = cycle_u.item();
  out.recon_v = cycle_v.item();
  out.critic_fake_a = score_a.item();
  out.critic_fake_b = score_b.item();
  Tensor recon = add(mul_scalar(cycle_u, static_cast<float>(cfg.lambda_u)), mul_scalar(cycle_v, static_cast<float>(cfg.lambda_v)));
  out.total = sub(sub(recon, score_b), score_a);
  return out;
}

Tensor critic_objective(const Tensor& real, const Tensor& fake, const Mapping& critic) {
  if (real.shape() != fake.shape())
    throw InvalidArgument("critic loss: shape mismatch " + shape_string(real.shape()) + " vs " + shape_string(fake.shape()));
  return sub(critic(fake), critic(real));
}

PenaltyTerm gradient_penalty(const Critic& critic, const Tensor& real, const Tensor& fake, double lambda_gp, Rng& rng) {
  if (real.shape() != fake.shape())
    throw InvalidArgument("gradient penalty: shape mismatch " + shape_string(real.shape()) + " vs " +
                          shape_string(fake.shape()));
  const float e = static_cast<float>(rng.uniform());
  std::vector<float> mix(real.size());
  auto rv = real.data();
  auto fv = fake.data();
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = e * rv[i] + (1.0f - e) * fv[i];
  const Tensor x_hat(real.shape(), std::move(mix));

  ActivationPattern pattern;
  const std::vector<float> g = critic.input_gradient(x_hat, &pattern);
  double norm2 = 0.0;
  for (float gi : g) norm2 += static_cast<double>(gi) * gi;
  const double norm = std::sqrt(norm2);

  PenaltyTerm out;
  out.gradient_norm = norm;
  const float lambda = static_cast<float>(lambda_gp);
  if (norm == 0.0) {
    out.value = Tensor::scalar(lambda);
    return out;
  }
  // <grad_x D(theta), g/|g|> equals |grad_x D| at the current parameters and
  // has the same parameter gradient.
  std::vector<float> dir(g.size());
  for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = static_cast<float>(g[i] / norm);
  Tensor slope_norm = critic.directional_derivative(Tensor(real.shape(), std::move(dir)), pattern);
  Tensor dev = add_scalar(slope_norm, -1.0f);
  out.value = mul_scalar(mul(dev, dev), lambda);
  return out;
}

namespace {

CriticLoss critic_loss(const Tensor& real, const Tensor& fake_taped, const Critic& critic, const LossConfig& cfg, Rng& rng) {
  const Tensor fake = fake_taped.detach();
  const Mapping d = [&critic](const Tensor& x) { return critic.forward(x); };
  CriticLoss out;
  out.total = critic_objective(real, fake, d);
  out.base = out.total.item();
  if (cfg.mode == CriticMode::GradientPenalty) {
    PenaltyTerm p = gradient_penalty(critic, real, fake, cfg.lambda_gp, rng);
    out.penalty = p.value.item();
    out.total = add(out.total, p.value);
  }
  return out;
}

}  // namespace

CriticLoss critic_loss_a(const Tensor& u, const Tensor& v, const Mapping& ga, const Critic& da, const LossConfig& cfg,
                         Rng& rng) {
  if (u.shape() != v.shape())
    throw InvalidArgument("critic_loss_a: shape mismatch " + shape_string(u.shape()) + " vs " + shape_string(v.shape()));
  return critic_loss(v, ga(u), da, cfg, rng);
}

CriticLoss critic_loss_b(const Tensor& u, const Tensor& v, const Mapping& gb, const Critic& db, const LossConfig& cfg,
                         Rng& rng) {
  if (u.shape() != v.shape())
    throw InvalidArgument("critic_loss_b: shape mismatch " + shape_string(u.shape()) + " vs " + shape_string(v.shape()));
  return critic_loss(u, gb(v), db, cfg, rng);
}

}  // namespace pdsep
