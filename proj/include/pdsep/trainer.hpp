#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pdsep/dataset.hpp"
#include "pdsep/losses.hpp"
#include "pdsep/nets.hpp"
#include "pdsep/optim.hpp"

namespace pdsep {

struct TrainConfig {
  std::size_t n_critic = 3;
  RmsPropConfig optimizer{};
  std::size_t batch_size = 1;
  // One epoch is one pass over every record.
  std::size_t epochs = 2000;
  LossConfig loss{};
  std::uint64_t seed = 0;
  // Epochs between intermediate checkpoints; 0 writes only the final one.
  std::size_t checkpoint_interval = 0;
  // Where checkpoints go; empty disables checkpoint files.
  std::filesystem::path checkpoint_dir;
  std::size_t workers = 1;
  // Dropping the in-memory log keeps long runs small; CSV output needs it.
  bool keep_log = true;
};

/// Throws on invalid values; returns non-fatal warnings.
std::vector<std::string> validate(const TrainConfig& cfg);

/// One DualGAN of the bank: maps the mixture domain to source domain i.
struct SubModel {
  Generator ga;  // mixture -> source
  Generator gb;  // source -> mixture
  Critic da;     // judges sources
  Critic db;     // judges mixtures
  std::vector<RmsPropState> opt_ga, opt_gb, opt_da, opt_db;
  std::uint64_t step = 0;
};

class PDualGanModel {
 public:
  PDualGanModel() = default;
  /// Sub-model i is initialised from the stream seed ^ i.
  PDualGanModel(const ArchDescriptor& arch, std::size_t n, std::uint64_t seed);

  const ArchDescriptor& arch() const { return arch_; }
  std::size_t size() const { return subs_.size(); }
  std::uint64_t seed() const { return seed_; }
  SubModel& sub(std::size_t i) { return subs_.at(i); }
  const SubModel& sub(std::size_t i) const { return subs_.at(i); }

  /// Used by the checkpoint loader.
  static PDualGanModel assemble(ArchDescriptor arch, std::uint64_t seed, std::vector<SubModel> subs);

 private:
  ArchDescriptor arch_;
  std::uint64_t seed_ = 0;
  std::vector<SubModel> subs_;
};

enum class LossKind : std::uint8_t { CriticA, CriticB, Generator };

struct LogEntry {
  std::uint64_t step = 0;
  std::uint32_t submodel = 0;
  LossKind kind = LossKind::Generator;
  double value = 0.0;

  bool operator==(const LogEntry&) const = default;
};

/// Loss records in step order. Critic entries carry a `_gp` suffix in
/// gradient-penalty mode, where their value includes the penalty.
class TrainLog {
 public:
  explicit TrainLog(CriticMode mode = CriticMode::Clip) : mode_(mode) {}

  void append(const LogEntry& e) { entries_.push_back(e); }
  void append(std::span<const LogEntry> es) { entries_.insert(entries_.end(), es.begin(), es.end()); }
  const std::vector<LogEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::string loss_name(LossKind kind) const;

  /// Columns step,submodel,loss_name,value.
  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;

 private:
  CriticMode mode_;
  std::vector<LogEntry> entries_;
};

/// Per sub-model diagnostics for one record; not part of the log.
struct StepStats {
  std::uint32_t submodel = 0;
  std::uint64_t step = 0;
  double critic_a = 0.0;  // last critic update of the step
  double critic_b = 0.0;
  double penalty_a = 0.0;
  double penalty_b = 0.0;
  double generator = 0.0;
  double recon_u = 0.0;
  double recon_v = 0.0;
  double critic_fake_a = 0.0;
  double critic_fake_b = 0.0;
};

struct TrainHooks {
  // Called after every epoch with its index and the merged step stats, in order.
  std::function<void(std::size_t epoch, const PDualGanModel& model, std::span<const StepStats> stats)> on_epoch_end;
};

/// n_critic critic updates (both critics, clipped in clip mode), then one
/// joint update of both generators, for every sub-model on one record.
/// Throws NumericError on a non-finite loss.
std::vector<LogEntry> train_step(PDualGanModel& model, const SampleRecord& record, const TrainConfig& cfg,
                                 std::vector<StepStats>* stats = nullptr);

/// The same update for sub-model i alone.
std::vector<LogEntry> train_submodel_step(PDualGanModel& model, std::size_t i, const SampleRecord& record,
                                          const TrainConfig& cfg, StepStats* stats = nullptr);

/// Runs cfg.epochs passes over the dataset (shuffled per epoch), optionally on
/// several workers; results do not depend on the worker count.
TrainLog train(PDualGanModel& model, const Dataset& dataset, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Order in which records are visited during `epoch`.
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch);

struct SeparateOptions {
  // Dropout stays active at inference; turning it off is a debugging aid.
  bool dropout = true;
  std::size_t passes = 1;
  std::uint64_t seed = 0;
};

/// Estimate of every source: G_Ai(mixture) for i = 1..N, averaged over
/// `passes` stochastic passes.
std::vector<std::vector<float>> separate(const PDualGanModel& model, std::span<const float> mixture,
                                         const SeparateOptions& opt = {});

}  // namespace pdsep
