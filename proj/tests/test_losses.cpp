#include <cmath>

#include "doctest.h"
#include "pdsep/error.hpp"
#include "pdsep/losses.hpp"

using namespace pdsep;

namespace {

Mapping shift_by(float d) {
  return [d](const Tensor& x) { return add_scalar(x, d); };
}
Mapping constant(float c) {
  return [c](const Tensor& x) { return add_scalar(mul_scalar(mean(x), 0.0f), c); };
}
const Mapping identity = [](const Tensor& x) { return x; };

Tensor ramp(std::size_t n, float scale = 1.0f) {
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = scale * (static_cast<float>(i) / static_cast<float>(n) - 0.5f);
  return Tensor({1, n}, std::move(v));
}

}  // namespace

TEST_CASE("generator loss hand substitution") {
  // G_A scales by 0.8 and G_B is the identity: with u = 0.5 and v = 1.0
  // everywhere, the mean-L1 cycle errors are 0.1 and 0.2.
  const Tensor u = Tensor::full({1, 16}, 0.5f), v = Tensor::full({1, 16}, 1.0f);
  Mapping ga = [](const Tensor& x) { return mul_scalar(x, 0.8f); };
  auto l = generator_loss(u, v, ga, identity, constant(0.3f), constant(0.4f), LossConfig{});
  CHECK(l.recon_u == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(l.recon_v == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(std::abs(l.total.item() - 299.3) <= 1e-4 * 299.3);
  CHECK(l.critic_fake_a == doctest::Approx(0.3));
  CHECK(l.critic_fake_b == doctest::Approx(0.4));
}

TEST_CASE("perfect reconstruction leaves only the critic terms") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> uv(32), vv(32);
    for (auto& x : uv) x = static_cast<float>(rng.normal());
    for (auto& x : vv) x = static_cast<float>(rng.normal());
    const Tensor u({1, 32}, uv), v({1, 32}, vv);
    const float da = static_cast<float>(rng.normal()), db = static_cast<float>(rng.normal());
    auto l = generator_loss(u, v, identity, identity, constant(da), constant(db), LossConfig{});
    CHECK(l.total.item() == doctest::Approx(-db - da).epsilon(1e-6));
  }
  auto zero = generator_loss(ramp(8), ramp(8), identity, identity, constant(0.0f), constant(0.0f), LossConfig{});
  CHECK(zero.total.item() == 0.0f);
}

TEST_CASE("scaling lambda scales only the reconstruction part") {
  const Tensor u = ramp(16), v = ramp(16, 0.5f);
  LossConfig a, b;
  b.lambda_u = a.lambda_u * 3;
  b.lambda_v = a.lambda_v * 3;
  auto ga = shift_by(0.05f), gb = shift_by(0.02f);
  auto la = generator_loss(u, v, ga, gb, constant(0.3f), constant(-0.2f), a);
  auto lb = generator_loss(u, v, ga, gb, constant(0.3f), constant(-0.2f), b);
  const double adv = -(0.3 - 0.2);
  CHECK(lb.total.item() - adv == doctest::Approx(3.0 * (la.total.item() - adv)).epsilon(1e-5));
}

TEST_CASE("critic objective examples and antisymmetry") {
  const Tensor real = ramp(8), fake = ramp(8, 2.0f);
  Mapping d = [](const Tensor& x) { return mean(x); };
  auto l = critic_objective(real, fake, constant(0.3f));
  CHECK(l.item() == doctest::Approx(0.0));
  // D(fake)=0.3, D(real)=0.8
  Mapping d_split = [&](const Tensor& x) { return x.data()[0] == real.data()[0] ? constant(0.8f)(x) : constant(0.3f)(x); };
  CHECK(critic_objective(real, fake, d_split).item() == doctest::Approx(-0.5));
  Mapping d_b = [&](const Tensor& x) { return x.data()[0] == real.data()[0] ? constant(0.5f)(x) : constant(-0.2f)(x); };
  CHECK(critic_objective(real, fake, d_b).item() == doctest::Approx(-0.7));
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> a(8), b(8);
    for (auto& x : a) x = static_cast<float>(rng.normal());
    for (auto& x : b) x = static_cast<float>(rng.normal());
    const Tensor ta({1, 8}, a), tb({1, 8}, b);
    CHECK(critic_objective(ta, tb, d).item() == -critic_objective(tb, ta, d).item());
  }
}

TEST_CASE("critic losses wire real and fake per domain") {
  const auto arch = default_arch_1d(64);
  Critic da(arch, 1), db(arch, 2);
  const Tensor u = ramp(64), v = ramp(64, 0.3f);
  Rng rng(3);
  LossConfig cfg;
  auto ga = shift_by(0.1f), gb = shift_by(-0.1f);
  auto la = critic_loss_a(u, v, ga, da, cfg, rng);
  CHECK(la.total.item() == doctest::Approx(da.forward(ga(u)).item() - da.forward(v).item()));
  auto lb = critic_loss_b(u, v, gb, db, cfg, rng);
  CHECK(lb.total.item() == doctest::Approx(db.forward(gb(v)).item() - db.forward(u).item()));
  CHECK(la.penalty == 0.0);
}

TEST_CASE("gradient penalty vanishes for a unit-slope linear critic") {
  ArchDescriptor arch = default_arch_1d(256);
  arch.critic = {{1, 1, 1}};
  Critic d(arch, 1);
  d.params()[0].mutable_data()[0] = 16.0f;  // mean(16 x) has input-gradient norm 16/sqrt(256) = 1
  Rng rng(4);
  auto p = gradient_penalty(d, ramp(256), ramp(256, 0.2f), 10.0, rng);
  CHECK(p.gradient_norm == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(p.value.item() == doctest::Approx(0.0).epsilon(1e-10));
  d.params()[0].mutable_data()[0] = 32.0f;
  auto q = gradient_penalty(d, ramp(256), ramp(256, 0.2f), 10.0, rng);
  CHECK(q.value.item() == doctest::Approx(10.0));
}

TEST_CASE("gradient penalty parameter gradient matches finite differences") {
  const auto arch = default_arch_1d(64);
  Critic d(arch, 5);
  for (auto& p : d.params().tensors())
    for (auto& v : p.mutable_data()) v *= 5.0f;
  const Tensor real = ramp(64), fake = ramp(64, -0.7f);
  // Same interpolation point for every evaluation.
  auto eval = [&](ActivationPattern* pattern) {
    Rng rng(42);
    auto p = gradient_penalty(d, real, fake, 10.0, rng);
    if (pattern) {
      Rng again(42);
      const float e = static_cast<float>(again.uniform());
      std::vector<float> mix(64);
      for (std::size_t i = 0; i < 64; ++i) mix[i] = e * real.data()[i] + (1.0f - e) * fake.data()[i];
      d.forward(Tensor({1, 64}, mix), pattern);
    }
    return static_cast<double>(p.value.item());
  };
  auto same = [](const ActivationPattern& a, const ActivationPattern& b) {
    for (std::size_t l = 0; l < a.slopes.size(); ++l)
      if (!std::equal(a.slopes[l].data().begin(), a.slopes[l].data().end(), b.slopes[l].data().begin())) return false;
    return true;
  };
  ActivationPattern at;
  eval(&at);
  {
    Rng rng(42);
    gradient_penalty(d, real, fake, 10.0, rng).value.backward();
  }
  // Biases only move the activation pattern, so their gradient is zero.
  for (std::size_t k = 1; k < d.params().size(); k += 2) {
    const Tensor& b = d.params()[k];
    if (b.has_grad())
      for (float g : b.grad()) CHECK(g == 0.0f);
  }
  std::size_t checked = 0;
  for (std::size_t k = 0; k < d.params().size(); k += 2) {
    Tensor& w = d.params()[k];
    const std::vector<float> analytic(w.grad().begin(), w.grad().end());
    for (std::size_t i = 0; i < w.size(); i += 5) {
      const float orig = w.mutable_data()[i];
      const float h = 1e-3f;
      ActivationPattern pp, pm;
      w.mutable_data()[i] = orig + h;
      const double fp = eval(&pp);
      w.mutable_data()[i] = orig - h;
      const double fm = eval(&pm);
      w.mutable_data()[i] = orig;
      if (!same(at, pp) || !same(at, pm)) continue;
      const double numeric = (fp - fm) / (2.0 * h);
      CHECK(std::abs(numeric - analytic[i]) <= 2e-2 * std::max({std::abs(numeric), std::abs(double{analytic[i]}), 0.1}));
      ++checked;
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("losses give finite gradients for every parameter") {
  const auto arch = default_arch_1d(64);
  Generator ga(arch, 1), gb(arch, 2);
  Critic da(arch, 3), db(arch, 4);
  Rng rng(5);
  Mapping mga = [&](const Tensor& x) { return ga.forward(x, rng); };
  Mapping mgb = [&](const Tensor& x) { return gb.forward(x, rng); };
  Mapping mda = [&](const Tensor& x) { return da.forward(x); };
  Mapping mdb = [&](const Tensor& x) { return db.forward(x); };
  auto l = generator_loss(ramp(64), ramp(64, 0.4f), mga, mgb, mda, mdb, LossConfig{});
  l.total.backward();
  for (auto* ps : {&ga.params(), &gb.params(), &da.params(), &db.params()})
    for (const auto& t : ps->tensors()) {
      REQUIRE(t.has_grad());
      for (float g : t.grad()) CHECK(std::isfinite(g));
    }
  LossConfig gp;
  gp.mode = CriticMode::GradientPenalty;
  auto c = critic_loss_a(ramp(64), ramp(64, 0.4f), mga, da, gp, rng);
  c.total.backward();
  for (const auto& t : da.params().tensors())
    for (float g : t.grad()) CHECK(std::isfinite(g));
}

TEST_CASE("loss config validation") {
  LossConfig cfg;
  CHECK(validate(cfg).empty());
  cfg.lambda_u = 50.0;
  CHECK(validate(cfg).size() == 1);
  cfg.lambda_u = 0.0;
  CHECK_THROWS_AS(validate(cfg), InvalidArgument);
  CHECK(critic_mode_from_string("gp") == CriticMode::GradientPenalty);
  CHECK_THROWS_AS(critic_mode_from_string("hinge"), InvalidArgument);
}
