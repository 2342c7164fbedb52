#include "pdsep/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "pdsep/binary_io.hpp"
#include "pdsep/checkpoint.hpp"
#include "pdsep/error.hpp"

namespace pdsep {

std::vector<std::string> validate(const TrainConfig& cfg) {
  if (cfg.n_critic < 1) throw InvalidArgument("train: n_critic must be at least 1");
  if (cfg.batch_size != 1) throw InvalidArgument("train: only batch size 1 is supported");
  if (cfg.epochs < 1) throw InvalidArgument("train: epochs must be at least 1");
  if (cfg.workers < 1) throw InvalidArgument("train: workers must be at least 1");
  validate(cfg.optimizer);
  auto warnings = validate(cfg.loss);
  if (cfg.n_critic < 2 || cfg.n_critic > 4) warnings.push_back("n_critic outside the usual 2-4 range");
  if (cfg.loss.mode == CriticMode::Clip && (cfg.loss.clip < 0.01 || cfg.loss.clip > 0.1))
    warnings.push_back("clipping bound outside the usual [0.01, 0.1] range");
  return warnings;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::size_t i) { return seed ^ static_cast<std::uint64_t>(i); }

std::vector<RmsPropState> fresh_states(const ParamSet& ps) {
  std::vector<RmsPropState> s(ps.size());
  for (std::size_t k = 0; k < ps.size(); ++k) s[k].accumulator.assign(ps[k].size(), 0.0f);
  return s;
}

}  // namespace

PDualGanModel::PDualGanModel(const ArchDescriptor& arch, std::size_t n, std::uint64_t seed) : arch_(arch), seed_(seed) {
  validate(arch_);
  if (n < 1) throw InvalidArgument("model: need at least one sub-model");
  subs_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t s = stream_seed(seed, i);
    SubModel m{Generator(arch, derive_seed(s, 1)), Generator(arch, derive_seed(s, 2)), Critic(arch, derive_seed(s, 3)),
               Critic(arch, derive_seed(s, 4)), {}, {}, {}, {}, 0};
    m.opt_ga = fresh_states(m.ga.params());
    m.opt_gb = fresh_states(m.gb.params());
    m.opt_da = fresh_states(m.da.params());
    m.opt_db = fresh_states(m.db.params());
    subs_.push_back(std::move(m));
  }
}

PDualGanModel PDualGanModel::assemble(ArchDescriptor arch, std::uint64_t seed, std::vector<SubModel> subs) {
  PDualGanModel m;
  m.arch_ = std::move(arch);
  m.seed_ = seed;
  m.subs_ = std::move(subs);
  return m;
}

// ---------------------------------------------------------------------------

std::string TrainLog::loss_name(LossKind kind) const {
  const bool gp = mode_ == CriticMode::GradientPenalty;
  switch (kind) {
    case LossKind::CriticA: return gp ? "critic_A_gp" : "critic_A";
    case LossKind::CriticB: return gp ? "critic_B_gp" : "critic_B";
    case LossKind::Generator: return "generator";
  }
  return "unknown";
}

std::string TrainLog::csv() const {
  std::ostringstream os;
  os.precision(9);
  os << "step,submodel,loss_name,value\n";
  for (const auto& e : entries_) os << e.step << ',' << e.submodel << ',' << loss_name(e.kind) << ',' << e.value << '\n';
  return os.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const { io::write_text_file(path, csv()); }

// ---------------------------------------------------------------------------

namespace {

void optimize(ParamSet& params, std::vector<RmsPropState>& states, const RmsPropConfig& cfg) {
  for (std::size_t k = 0; k < params.size(); ++k) rmsprop_step(params[k], states[k], cfg);
}

void check_finite(double v, const char* what, std::size_t i, std::uint64_t step) {
  if (!std::isfinite(v))
    throw NumericError(std::string("non-finite ") + what + " loss in sub-model " + std::to_string(i) + " at step " +
                       std::to_string(step));
}

Tensor as_tensor(const Shape& shape, const std::vector<float>& v) { return Tensor(shape, v); }

}  // namespace

std::vector<LogEntry> train_submodel_step(PDualGanModel& model, std::size_t i, const SampleRecord& record,
                                          const TrainConfig& cfg, StepStats* stats) {
  const Shape& shape = model.arch().input_shape;
  if (record.mixture.size() != shape_size(shape) || record.sources.size() != model.size())
    throw InvalidArgument("train_step: record does not match the model (" + std::to_string(record.sources.size()) +
                          " sources of size " + std::to_string(record.mixture.size()) + ", model expects " +
                          std::to_string(model.size()) + " of shape " + shape_string(shape) + ")");
  SubModel& m = model.sub(i);
  const Tensor u = as_tensor(shape, record.mixture);
  const Tensor v = as_tensor(shape, record.sources[i]);
  Rng rng(derive_seed(stream_seed(model.seed(), i), m.step));
  const Mapping ga = [&](const Tensor& x) { return m.ga.forward(x, rng); };
  const Mapping gb = [&](const Tensor& x) { return m.gb.forward(x, rng); };

  std::vector<LogEntry> log;
  log.reserve(2 * cfg.n_critic + 1);
  StepStats st;
  st.submodel = static_cast<std::uint32_t>(i);
  st.step = m.step;

  m.ga.params().set_requires_grad(false);
  m.gb.params().set_requires_grad(false);
  m.da.params().set_requires_grad(true);
  m.db.params().set_requires_grad(true);
  for (std::size_t k = 0; k < cfg.n_critic; ++k) {
    CriticLoss la = critic_loss_a(u, v, ga, m.da, cfg.loss, rng);
    check_finite(la.total.item(), "critic_A", i, m.step);
    la.total.backward();
    optimize(m.da.params(), m.opt_da, cfg.optimizer);

    CriticLoss lb = critic_loss_b(u, v, gb, m.db, cfg.loss, rng);
    check_finite(lb.total.item(), "critic_B", i, m.step);
    lb.total.backward();
    optimize(m.db.params(), m.opt_db, cfg.optimizer);

    if (cfg.loss.mode == CriticMode::Clip) {
      clip_weights(m.da.params().tensors(), cfg.loss.clip);
      clip_weights(m.db.params().tensors(), cfg.loss.clip);
    }
    log.push_back({m.step, static_cast<std::uint32_t>(i), LossKind::CriticA, la.total.item()});
    log.push_back({m.step, static_cast<std::uint32_t>(i), LossKind::CriticB, lb.total.item()});
    st.critic_a = la.base;
    st.critic_b = lb.base;
    st.penalty_a = la.penalty;
    st.penalty_b = lb.penalty;
  }

  m.da.params().set_requires_grad(false);
  m.db.params().set_requires_grad(false);
  m.ga.params().set_requires_grad(true);
  m.gb.params().set_requires_grad(true);
  const Mapping da = [&](const Tensor& x) { return m.da.forward(x); };
  const Mapping db = [&](const Tensor& x) { return m.db.forward(x); };
  GeneratorLoss lg = generator_loss(u, v, ga, gb, da, db, cfg.loss);
  check_finite(lg.total.item(), "generator", i, m.step);
  lg.total.backward();
  optimize(m.ga.params(), m.opt_ga, cfg.optimizer);
  optimize(m.gb.params(), m.opt_gb, cfg.optimizer);
  log.push_back({m.step, static_cast<std::uint32_t>(i), LossKind::Generator, lg.total.item()});

  st.generator = lg.total.item();
  st.recon_u = lg.recon_u;
  st.recon_v = lg.recon_v;
  st.critic_fake_a = lg.critic_fake_a;
  st.critic_fake_b = lg.critic_fake_b;
  if (stats) *stats = st;
  ++m.step;
  return log;
}

std::vector<LogEntry> train_step(PDualGanModel& model, const SampleRecord& record, const TrainConfig& cfg,
                                 std::vector<StepStats>* stats) {
  std::vector<LogEntry> log;
  if (stats) stats->clear();
  for (std::size_t i = 0; i < model.size(); ++i) {
    StepStats st;
    auto entries = train_submodel_step(model, i, record, cfg, &st);
    log.insert(log.end(), entries.begin(), entries.end());
    if (stats) stats->push_back(st);
  }
  return log;
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0xe90c'0000'0000ULL + epoch));
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle.
  for (std::size_t k = count; k > 1; --k) {
    const std::size_t j = static_cast<std::size_t>(rng.next() % k);
    std::swap(order[k - 1], order[j]);
  }
  return order;
}

TrainLog train(PDualGanModel& model, const Dataset& dataset, const TrainConfig& cfg, const TrainHooks& hooks) {
  validate(cfg);
  if (dataset.records.empty()) throw InvalidArgument("train: dataset is empty");
  if (dataset.manifest.sources != model.size())
    throw InvalidArgument("train: dataset has " + std::to_string(dataset.manifest.sources) + " sources, model has " +
                          std::to_string(model.size()));
  if (dataset.manifest.shape != model.arch().input_shape)
    throw InvalidArgument("train: dataset shape " + shape_string(dataset.manifest.shape) +
                          " does not match the model input " + shape_string(model.arch().input_shape));
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  TrainLog log(cfg.loss.mode);
  const std::size_t n = model.size();
  const std::size_t records = dataset.records.size();
  const std::size_t workers = std::min(cfg.workers, n);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(records, model.seed(), epoch);
    std::vector<std::vector<std::vector<LogEntry>>> per_sub(n, std::vector<std::vector<LogEntry>>(records));
    std::vector<std::vector<StepStats>> sub_stats(n, std::vector<StepStats>(records));
    std::vector<std::exception_ptr> errors(n);

    auto run_sub = [&](std::size_t i) {
      try {
        for (std::size_t r = 0; r < records; ++r)
          per_sub[i][r] = train_submodel_step(model, i, dataset.records[order[r]], cfg, &sub_stats[i][r]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    };
    if (workers <= 1) {
      for (std::size_t i = 0; i < n; ++i) run_sub(i);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
          for (std::size_t i = w; i < n; i += workers) run_sub(i);
        });
      for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);

    std::vector<StepStats> merged_stats;
    merged_stats.reserve(n * records);
    for (std::size_t r = 0; r < records; ++r)
      for (std::size_t i = 0; i < n; ++i) {
        if (cfg.keep_log) log.append(per_sub[i][r]);
        merged_stats.push_back(sub_stats[i][r]);
      }
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model, merged_stats);

    if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_interval > 0 && (epoch + 1) % cfg.checkpoint_interval == 0 &&
        epoch + 1 < cfg.epochs)
      save_checkpoint(model, cfg.checkpoint_dir / ("epoch_" + std::to_string(epoch + 1) + ".pdgm"));
  }
  if (!cfg.checkpoint_dir.empty()) save_checkpoint(model, cfg.checkpoint_dir / "final.pdgm");
  return log;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<float>> separate(const PDualGanModel& model, std::span<const float> mixture,
                                         const SeparateOptions& opt) {
  const Shape& shape = model.arch().input_shape;
  if (mixture.size() != shape_size(shape))
    throw InvalidArgument("separate: mixture holds " + std::to_string(mixture.size()) + " values, model expects shape " +
                          shape_string(shape));
  if (opt.passes < 1) throw InvalidArgument("separate: passes must be at least 1");
  const Tensor x(shape, std::vector<float>(mixture.begin(), mixture.end()));
  std::vector<std::vector<float>> out(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    Rng rng(derive_seed(stream_seed(opt.seed, i), 0x5e9a'7a7eULL));
    // Inference must not record a tape even if the parameters are trainable.
    ParamSet frozen = clone(model.sub(i).ga.params());
    frozen.set_requires_grad(false);
    Generator g = model.sub(i).ga;
    g.params() = std::move(frozen);
    std::vector<double> acc(x.size(), 0.0);
    for (std::size_t p = 0; p < opt.passes; ++p) {
      Tensor y = g.forward(x, rng, GeneratorOptions{opt.dropout, -1});
      auto yv = y.data();
      for (std::size_t t = 0; t < acc.size(); ++t) acc[t] += yv[t];
    }
    out[i].resize(acc.size());
    for (std::size_t t = 0; t < acc.size(); ++t) out[i][t] = static_cast<float>(acc[t] / static_cast<double>(opt.passes));
  }
  return out;
}

}  // namespace pdsep
