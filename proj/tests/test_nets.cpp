#include <cmath>

#include "doctest.h"
#include "pdsep/error.hpp"
#include "pdsep/nets.hpp"

using namespace pdsep;

namespace {

Tensor random_input(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(shape_size(shape));
  for (auto& x : v) x = static_cast<float>(2.0 * rng.uniform() - 1.0);
  return Tensor(shape, std::move(v));
}

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("generator preserves shape and range") {
  for (const auto& arch : {default_arch_1d(256), default_arch_2d(32, 32), default_arch_1d(64)}) {
    Generator g(arch, 1);
    Rng rng(2);
    for (std::uint64_t s = 0; s < 5; ++s) {
      auto y = g.forward(random_input(arch.input_shape, s), rng);
      CHECK(y.shape() == arch.input_shape);
      for (float v : y.data()) {
        CHECK(v > -1.0f);
        CHECK(v < 1.0f);
      }
    }
  }
}

TEST_CASE("generator without dropout is deterministic, with dropout it is noisy") {
  const auto arch = default_arch_1d(256);
  Generator g(arch, 3);
  const Tensor x = random_input(arch.input_shape, 4);
  Rng r1(1), r2(99);
  CHECK(values(g.forward(x, r1, {false, -1})) == values(g.forward(x, r2, {false, -1})));
  // Weights at the init scale give tiny outputs; scale them up so the noise is visible.
  for (auto& p : g.params().tensors())
    for (auto& v : p.mutable_data()) v *= 20.0f;
  Rng r3(1);
  auto a = values(g.forward(x, r3));
  auto b = values(g.forward(x, r3));
  CHECK(a != b);
}

TEST_CASE("skip connections are live") {
  const auto arch = default_arch_1d(256);
  Generator g(arch, 5);
  for (auto& p : g.params().tensors())
    for (auto& v : p.mutable_data()) v *= 20.0f;
  const Tensor x = random_input(arch.input_shape, 6);
  for (int level = 1; level < static_cast<int>(arch.depth()); ++level) {
    Rng r1(1), r2(1);
    auto full = values(g.forward(x, r1, {false, -1}));
    auto cut = values(g.forward(x, r2, {false, level}));
    CHECK(full != cut);
  }
}

TEST_CASE("init is N(0, 0.02) with zero biases and reproducible") {
  ArchDescriptor arch = default_arch_1d(256);
  arch.channels = {8, 16, 64, 64};
  Generator g(arch, 7);
  Generator g2(arch, 7);
  for (std::size_t i = 0; i < g.params().size(); ++i) CHECK(values(g.params()[i]) == values(g2.params()[i]));
  const Tensor& big = g.params().at("enc3.weight");  // 64*64*4 entries
  REQUIRE(big.size() >= 10000);
  double s = 0.0, s2 = 0.0;
  for (float v : big.data()) {
    s += v;
    s2 += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(big.size());
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  CHECK(sd >= 0.018);
  CHECK(sd <= 0.022);
  for (std::size_t i = 0; i < g.params().size(); ++i)
    if (g.params().name(i).find("bias") != std::string::npos)
      for (float v : g.params()[i].data()) CHECK(v == 0.0f);
}

TEST_CASE("parameter names are unique and ordered") {
  Generator g(default_arch_1d(256), 1);
  const auto& names = g.params().names();
  CHECK(names.front() == "enc0.weight");
  CHECK(names.back() == "dec0.bias");
  ParamSet ps;
  ps.add("a", Tensor::zeros({1}));
  CHECK_THROWS_AS(ps.add("a", Tensor::zeros({1})), InvalidArgument);
  CHECK_THROWS_AS(ps.at("missing"), InvalidArgument);
}

TEST_CASE("critic scores") {
  const auto arch = default_arch_1d(256);
  Critic d(arch, 1);
  auto& last = d.params()[d.params().size() - 2];
  for (auto& v : last.mutable_data()) v = 0.0f;
  CHECK(d.forward(Tensor::zeros(arch.input_shape)).item() == 0.0f);
  Critic d2(arch, 2);
  auto bank_like = random_input(arch.input_shape, 3);
  CHECK(std::isfinite(d2.forward(bank_like).item()));
  CHECK(d2.patch_scores(bank_like).shape() == Shape{1, 64});
  CHECK(critic_receptive_field(arch) == 16);
  CHECK(critic_receptive_field(arch) < 256);
}

TEST_CASE("directional derivative equals the input gradient projection") {
  for (const auto& arch : {default_arch_1d(256), default_arch_2d(32, 32)}) {
    Critic d(arch, 11);
    for (auto& p : d.params().tensors())
      for (auto& v : p.mutable_data()) v *= 10.0f;
    Tensor x = random_input(arch.input_shape, 12);
    x.set_requires_grad(true);
    ActivationPattern pat;
    d.forward(x, &pat).backward();
    const Tensor dir = random_input(arch.input_shape, 13);
    double expect = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) expect += static_cast<double>(x.grad()[i]) * dir.data()[i];
    const double got = d.directional_derivative(dir, pat).item();
    CHECK(got == doctest::Approx(expect).epsilon(1e-4));
  }
}

TEST_CASE("descriptor validation") {
  ArchDescriptor a = default_arch_1d(256);
  a.input_shape = {1, 100};  // not divisible by 16
  CHECK_THROWS_AS(validate(a), InvalidArgument);
  a = default_arch_1d(256);
  a.decoder_dropout = {0.5, 0, 0, 0};
  CHECK_THROWS_AS(validate(a), InvalidArgument);
  a = default_arch_1d(256);
  a.critic.back().channels = 2;
  CHECK_THROWS_AS(validate(a), InvalidArgument);
  Generator g(default_arch_1d(256), 1);
  Rng rng(1);
  CHECK_THROWS_AS(g.forward(Tensor::zeros({1, 128}), rng), InvalidArgument);
}
