#include <filesystem>
#include <set>

#include "doctest.h"
#include "pdsep/checkpoint.hpp"
#include "pdsep/dataset.hpp"
#include "pdsep/error.hpp"
#include "pdsep/trainer.hpp"

using namespace pdsep;
namespace fs = std::filesystem;

namespace {

ArchDescriptor small_arch() {
  ArchDescriptor a = default_arch_1d(64);
  a.channels = {4, 8};
  a.decoder_dropout = {0.0, 0.5};
  return a;
}

Dataset small_dataset(std::size_t n, std::size_t count, std::uint64_t seed = 1) {
  const Shape shape{1, 64};
  auto bank = builtin_bank(shape);
  return synth_dataset(bank, shape, count, MixKind::Instantaneous, n, {}, seed);
}

std::vector<std::vector<float>> snapshot(const ParamSet& ps) {
  std::vector<std::vector<float>> out;
  for (const auto& t : ps.tensors()) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

}  // namespace

TEST_CASE("update schedule: n_critic critic pairs then one generator step") {
  for (std::size_t nc : {2u, 3u, 4u}) {
    PDualGanModel m(small_arch(), 3, 7);
    TrainConfig cfg;
    cfg.n_critic = nc;
    auto ds = small_dataset(3, 2);
    auto entries = train_step(m, ds.records[0], cfg);
    REQUIRE(entries.size() == 3 * (2 * nc + 1));
    for (std::size_t i = 0; i < 3; ++i) {
      const std::size_t base = i * (2 * nc + 1);
      for (std::size_t k = 0; k < nc; ++k) {
        CHECK(entries[base + 2 * k].kind == LossKind::CriticA);
        CHECK(entries[base + 2 * k + 1].kind == LossKind::CriticB);
      }
      CHECK(entries[base + 2 * nc].kind == LossKind::Generator);
      for (std::size_t k = 0; k <= 2 * nc; ++k) CHECK(entries[base + k].submodel == i);
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(m.sub(i).step == 1);
  }
}

TEST_CASE("one epoch logs records * N * (2 n_critic + 1) rows") {
  PDualGanModel m(small_arch(), 2, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  auto ds = small_dataset(2, 10);
  auto log = train(m, ds, cfg);
  CHECK(log.size() == 10 * 2 * 7);
  // steps are monotone per sub-model
  std::vector<std::uint64_t> last(2, 0);
  for (const auto& e : log.entries()) {
    CHECK(e.step >= last[e.submodel]);
    last[e.submodel] = e.step;
  }
  const std::string csv = log.csv();
  CHECK(csv.rfind("step,submodel,loss_name,value\n", 0) == 0);
  CHECK(csv.find(",critic_A,") != std::string::npos);
}

TEST_CASE("clip mode keeps every critic weight in [-c, c] after every step") {
  PDualGanModel m(small_arch(), 2, 3);
  TrainConfig cfg;
  cfg.optimizer.learning_rate = 0.05;  // large steps so clipping is exercised
  auto ds = small_dataset(2, 4);
  std::size_t clipped = 0;
  for (const auto& rec : ds.records) {
    train_step(m, rec, cfg);
    for (std::size_t i = 0; i < m.size(); ++i)
      for (const Critic* d : {&m.sub(i).da, &m.sub(i).db})
        for (const auto& t : d->params().tensors())
          for (float v : t.data()) {
            CHECK(std::abs(v) <= 0.05f);
            clipped += std::abs(v) == 0.05f;
          }
  }
  CHECK(clipped > 0);
}

TEST_CASE("zero learning rate leaves every parameter bit-identical") {
  PDualGanModel m(small_arch(), 2, 4);
  TrainConfig cfg;
  cfg.optimizer.learning_rate = 0.0;
  std::vector<std::vector<std::vector<float>>> before;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (const ParamSet* ps : {&m.sub(i).ga.params(), &m.sub(i).gb.params(), &m.sub(i).da.params(), &m.sub(i).db.params()})
      before.push_back(snapshot(*ps));
  auto ds = small_dataset(2, 3);
  for (const auto& rec : ds.records) train_step(m, rec, cfg);
  std::size_t k = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (const ParamSet* ps : {&m.sub(i).ga.params(), &m.sub(i).gb.params(), &m.sub(i).da.params(), &m.sub(i).db.params()})
      CHECK(snapshot(*ps) == before[k++]);
}

TEST_CASE("gradient penalty mode names its log entries") {
  PDualGanModel m(small_arch(), 2, 5);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.loss.mode = CriticMode::GradientPenalty;
  std::vector<StepStats> stats;
  auto ds = small_dataset(2, 2);
  auto entries = train_step(m, ds.records[0], cfg, &stats);
  REQUIRE(stats.size() == 2);
  CHECK(stats[0].penalty_a > 0.0);
  TrainLog log(cfg.loss.mode);
  log.append(entries);
  CHECK(log.csv().find(",critic_A_gp,") != std::string::npos);
  CHECK(log.csv().find(",critic_B_gp,") != std::string::npos);
}

TEST_CASE("parallel and sequential training are bit-identical") {
  auto ds = small_dataset(3, 6);
  TrainConfig cfg;
  cfg.epochs = 2;
  PDualGanModel a(small_arch(), 3, 9), b(small_arch(), 3, 9);
  auto la = train(a, ds, cfg);
  cfg.workers = 3;
  auto lb = train(b, ds, cfg);
  CHECK(encode_checkpoint(a) == encode_checkpoint(b));
  CHECK(la.entries() == lb.entries());
}

TEST_CASE("step counters agree after each epoch") {
  auto ds = small_dataset(2, 5);
  TrainConfig cfg;
  cfg.epochs = 3;
  PDualGanModel m(small_arch(), 2, 1);
  TrainHooks hooks;
  std::size_t calls = 0;
  hooks.on_epoch_end = [&](std::size_t epoch, const PDualGanModel& model, std::span<const StepStats> stats) {
    CHECK(model.sub(0).step == model.sub(1).step);
    CHECK(model.sub(0).step == (epoch + 1) * 5);
    CHECK(stats.size() == 10);
    ++calls;
  };
  train(m, ds, cfg, hooks);
  CHECK(calls == 3);
}

TEST_CASE("epoch order is a seeded permutation") {
  auto o = epoch_order(50, 3, 0);
  std::set<std::size_t> s(o.begin(), o.end());
  CHECK(s.size() == 50);
  CHECK(*s.rbegin() == 49);
  CHECK(epoch_order(50, 3, 0) == o);
  CHECK(epoch_order(50, 3, 1) != o);
}

TEST_CASE("checkpoints at the configured interval and always at the end") {
  fs::path dir = fs::temp_directory_path() / "pdsep_test_ckpt_interval";
  fs::remove_all(dir);
  auto ds = small_dataset(2, 2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.checkpoint_interval = 2;
  cfg.checkpoint_dir = dir;
  PDualGanModel m(small_arch(), 2, 1);
  train(m, ds, cfg);
  CHECK(fs::exists(dir / "epoch_2.pdgm"));
  CHECK(fs::exists(dir / "epoch_4.pdgm"));
  CHECK_FALSE(fs::exists(dir / "epoch_5.pdgm"));
  CHECK(fs::exists(dir / "final.pdgm"));
  CHECK(encode_checkpoint(load_checkpoint(dir / "final.pdgm")) == encode_checkpoint(m));
}

TEST_CASE("training errors") {
  PDualGanModel m(small_arch(), 2, 1);
  TrainConfig cfg;
  CHECK_THROWS_AS(train(m, small_dataset(3, 2), cfg), InvalidArgument);
  cfg.n_critic = 0;
  CHECK_THROWS_AS(train(m, small_dataset(2, 2), cfg), InvalidArgument);
  cfg = {};
  cfg.optimizer.learning_rate = 1e30;  // diverges
  auto ds = small_dataset(2, 4);
  bool threw = false;
  try {
    for (int e = 0; e < 20; ++e)
      for (const auto& r : ds.records) train_step(m, r, cfg);
  } catch (const NumericError& e) {
    threw = true;
    CHECK(std::string(e.what()).find("sub-model") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("separation shape, determinism and averaging") {
  PDualGanModel m(small_arch(), 2, 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (auto& p : m.sub(i).ga.params().tensors())
      for (auto& v : p.mutable_data()) v *= 20.0f;
  auto ds = small_dataset(2, 1);
  const auto& mix = ds.records[0].mixture;
  SeparateOptions det{false, 1, 0};
  auto a = separate(m, mix, det);
  REQUIRE(a.size() == 2);
  CHECK(a[0].size() == 64);
  det.seed = 5;
  CHECK(separate(m, mix, det) == a);

  // Variance across seeds of an 8-pass average is below the single-pass variance.
  auto spread = [&](std::size_t passes) {
    double total = 0.0;
    std::vector<std::vector<float>> outs;
    for (std::uint64_t s = 0; s < 16; ++s) outs.push_back(separate(m, mix, SeparateOptions{true, passes, s})[0]);
    for (std::size_t t = 0; t < 64; ++t) {
      double mu = 0.0, var = 0.0;
      for (const auto& o : outs) mu += o[t];
      mu /= 16.0;
      for (const auto& o : outs) var += (o[t] - mu) * (o[t] - mu);
      total += var / 15.0;
    }
    return total;
  };
  CHECK(spread(8) < spread(1));
  CHECK_THROWS_AS(separate(m, std::vector<float>(10), det), InvalidArgument);
}
