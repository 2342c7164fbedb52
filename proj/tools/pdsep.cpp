#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pdsep/array_file.hpp"
#include "pdsep/binary_io.hpp"
#include "pdsep/checkpoint.hpp"
#include "pdsep/dataset.hpp"
#include "pdsep/error.hpp"
#include "pdsep/gradcheck.hpp"
#include "pdsep/metrics.hpp"
#include "pdsep/run_config.hpp"
#include "pdsep/trainer.hpp"

namespace fs = std::filesystem;
using namespace pdsep;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Flag values collected by CLI11; applied over the config file after parsing.
struct Flags {
  std::string config;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
  std::vector<std::pair<CLI::Option*, std::string>> options;
  std::vector<std::pair<CLI::Option*, std::string>> flag_options;

  CLI::Option* option(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    CLI::Option* o = app->add_option(flag, values[key], help);
    options.emplace_back(o, key);
    return o;
  }
  void flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    flag_options.emplace_back(app->add_flag(flag, switches[key], help), key);
  }
};

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (const char* env = std::getenv("PDSEP_SEED")) cfg.set("seed", env);
  if (!f.config.empty()) cfg.apply(RunConfig::load(f.config).text());
  for (const auto& [opt, key] : f.options)
    if (opt->count() > 0) cfg.set(key, f.values.at(key));
  for (const auto& [opt, key] : f.flag_options)
    if (opt->count() > 0) cfg.set(key, f.switches.at(key) ? "1" : "0");
  return cfg;
}

void warn(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

fs::path require_path(const RunConfig& cfg, const char* key) {
  const auto& v = cfg.get(key);
  if (v.empty()) throw InvalidArgument(std::string("missing --") + key);
  return v;
}

int cmd_synth(RunConfig cfg) {
  const fs::path out = require_path(cfg, "out");
  if (cfg.get("n") == "auto") cfg.set("n", "2");
  const std::size_t n = cfg.size("n");
  const std::size_t count = cfg.size("count");
  if (n < 2) throw InvalidArgument("synth: --n must be at least 2");
  if (count < 1) throw InvalidArgument("synth: --count must be at least 1");
  const Shape shape = cfg.sample_shape();
  const MixKind kind = cfg.kind();
  const Shape kshape = cfg.kernel_shape();
  std::uint64_t seed = cfg.u64("seed");
  const auto& split = cfg.get("split");
  if (split == "test") {
    seed = test_split_seed(seed);
  } else if (split != "train") {
    throw InvalidArgument("synth: --split must be train or test");
  }
  const auto bank = builtin_bank(shape);
  const Dataset ds = synth_dataset(bank, shape, count, kind, n, kshape, seed);
  save_dataset(ds, out);
  cfg.save(out.string() + ".config");
  std::cout << "wrote " << out.string() << ": N=" << n << " kind=" << to_string(kind) << " count=" << count
            << " seed=" << cfg.get("seed") << " shape=" << shape_string(shape);
  if (kind == MixKind::Convolutive) std::cout << " kernel=" << shape_string(kshape);
  std::cout << '\n';
  return kOk;
}

int cmd_train(RunConfig cfg) {
  const fs::path data = require_path(cfg, "data");
  const fs::path out = require_path(cfg, "out");
  const Dataset ds = load_dataset(data);
  if (cfg.get("n") != "auto" && cfg.size("n") != ds.manifest.sources)
    throw InvalidArgument("train: --n " + cfg.get("n") + " but the dataset has " +
                          std::to_string(ds.manifest.sources) + " sources");
  cfg.set("n", std::to_string(ds.manifest.sources));
  const ArchDescriptor arch = cfg.arch(ds.manifest.shape);
  cfg.set_arch(arch);
  TrainConfig tc = cfg.train_config();
  tc.checkpoint_dir = out;
  warn(validate(tc));

  fs::create_directories(out);
  cfg.save(out / "run.config");
  PDualGanModel model(arch, ds.manifest.sources, tc.seed);
  TrainHooks hooks;
  hooks.on_epoch_end = [&](std::size_t epoch, const PDualGanModel&, std::span<const StepStats> stats) {
    double ru = 0.0, rv = 0.0;
    for (const auto& s : stats) {
      ru += s.recon_u;
      rv += s.recon_v;
    }
    const double k = static_cast<double>(stats.size());
    std::cout << "epoch " << epoch + 1 << "/" << tc.epochs << " recon_u=" << ru / k << " recon_v=" << rv / k << '\n';
  };
  const TrainLog log = train(model, ds, tc, hooks);
  log.write_csv(out / "train_log.csv");
  std::cout << "wrote " << (out / "final.pdgm").string() << " and " << log.size() << " log rows\n";
  return kOk;
}

int cmd_separate(RunConfig cfg) {
  const fs::path ckpt = require_path(cfg, "checkpoint");
  const fs::path input = require_path(cfg, "input");
  const fs::path out = require_path(cfg, "out");
  const PDualGanModel model = load_checkpoint(ckpt);
  const Shape& shape = model.arch().input_shape;

  std::vector<float> mixture;
  const auto bytes = io::read_file(input);
  if (bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) == "PDG1") {
    const Dataset ds = decode_dataset(bytes);
    const std::size_t r = cfg.size("record");
    if (r >= ds.records.size())
      throw InvalidArgument("separate: --record " + std::to_string(r) + " but the dataset has " +
                            std::to_string(ds.records.size()) + " records");
    if (ds.manifest.shape != shape)
      throw InvalidArgument("separate: dataset shape " + shape_string(ds.manifest.shape) +
                            " does not match the checkpoint input " + shape_string(shape));
    mixture = ds.records[r].mixture;
  } else {
    ArrayFile a = decode_array(bytes);
    if (a.shape != shape)
      throw InvalidArgument("separate: mixture shape " + shape_string(a.shape) + " does not match the checkpoint input " +
                            shape_string(shape));
    mixture = std::move(a.values);
  }

  SeparateOptions opt;
  opt.dropout = !cfg.flag("det");
  opt.passes = cfg.size("passes");
  opt.seed = cfg.u64("seed");
  const auto estimates = separate(model, mixture, opt);

  fs::create_directories(out);
  cfg.save(out / "run.config");
  const bool pgm = cfg.flag("pgm");
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const ArrayFile a{shape, estimates[i]};
    const fs::path p = out / ("source_" + std::to_string(i) + ".pda");
    save_array(p, a);
    if (pgm && shape.size() == 3) save_pgm(out / ("source_" + std::to_string(i) + ".pgm"), a);
    std::cout << "wrote " << p.string() << '\n';
  }
  return kOk;
}

int cmd_eval(RunConfig cfg) {
  const fs::path data = require_path(cfg, "data");
  const fs::path out = require_path(cfg, "out");
  const Dataset ds = load_dataset(data);
  const Pairing pairing = cfg.flag("permutation") ? Pairing::BestPermutation : Pairing::FixedIndex;
  MetricsReport rep;
  if (cfg.flag("oracle")) {
    std::vector<std::vector<std::vector<float>>> truth;
    for (const auto& r : ds.records) truth.push_back(r.sources);
    rep = evaluate(truth, ds, pairing);
  } else {
    const PDualGanModel model = load_checkpoint(require_path(cfg, "checkpoint"));
    SeparateOptions opt;
    opt.dropout = !cfg.flag("det");
    opt.passes = cfg.size("passes");
    opt.seed = cfg.u64("seed");
    rep = evaluate(model, ds, opt, pairing);
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_report_csv(rep, out);
  cfg.save(out.string() + ".config");
  std::printf("records=%zu sources=%zu\n", rep.records, rep.sources);
  for (std::size_t i = 0; i < rep.sources; ++i)
    std::printf("source %zu: psnr=%.4f dB corr=%.6f baseline_corr=%.6f\n", i, rep.mean_psnr[i], rep.mean_corr[i],
                rep.mean_baseline_corr[i]);
  std::printf("all: psnr=%.4f dB corr=%.6f baseline_corr=%.6f\n", rep.grand_psnr, rep.grand_corr,
              rep.grand_baseline_corr);
  return kOk;
}

int cmd_gradcheck(const RunConfig& cfg) {
  GradcheckConfig gc;
  gc.tolerance = cfg.real("tol");
  gc.cases_per_op = cfg.size("cases");
  const auto& fault = cfg.get("inject_fault");
  if (fault != "none") {
    bool found = false;
    for (OpKind op : catalogue_ops())
      if (fault == op_name(op)) {
        testing::inject_backward_sign_fault(op);
        found = true;
      }
    if (!found) throw InvalidArgument("gradcheck: unknown op '" + fault + "'");
  }
  const GradcheckReport rep = gradcheck_all(gc);
  testing::inject_backward_sign_fault(OpKind::Leaf);
  std::cout << rep.text();
  if (rep.passed()) {
    std::cout << "gradcheck passed (tol " << gc.tolerance << ")\n";
    return kOk;
  }
  std::cout << "gradcheck FAILED:";
  for (const auto& name : rep.failed_ops()) std::cout << ' ' << name;
  std::cout << '\n';
  return kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel dual-GAN single-channel source separation"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "key=value config file; flags override its keys");
    f.option(sub, "--seed", "seed", "base seed (default: $PDSEP_SEED or 0)");
    f.option(sub, "--out", "out", "output path");
  };
  auto arch_flags = [&](CLI::App* sub) {
    f.option(sub, "--channels", "channels", "generator channels per level, comma separated");
    f.option(sub, "--decoder-dropout", "decoder_dropout", "dropout per decoder level, comma separated");
    f.option(sub, "--critic", "critic", "critic layers as channels:kernel:stride, comma separated");
  };

  auto* synth = app.add_subcommand("synth", "synthesize a mixture dataset");
  common(synth);
  f.option(synth, "--kind", "kind", "inst or conv");
  f.option(synth, "--n", "n", "number of sources");
  f.option(synth, "--count", "count", "number of records");
  f.option(synth, "--shape", "shape", "sample length T or HxW");
  f.option(synth, "--klen", "klen", "convolution kernel length K or KhxKw (0: default)");
  f.option(synth, "--split", "split", "train or test weight stream");

  auto* trn = app.add_subcommand("train", "train a model bank on a dataset");
  common(trn);
  arch_flags(trn);
  f.option(trn, "--data", "data", "training dataset");
  f.option(trn, "--n", "n", "expected number of sources");
  f.option(trn, "--epochs", "epochs", "passes over the dataset");
  f.option(trn, "--n-critic", "n_critic", "critic updates per generator update");
  f.option(trn, "--lr", "lr", "RMSProp learning rate");
  f.option(trn, "--mode", "mode", "critic regularization: clip or gp");
  f.option(trn, "--clip", "clip", "weight clipping bound");
  f.option(trn, "--lambda-gp", "lambda_gp", "gradient penalty weight");
  f.option(trn, "--lambda-u", "lambda_u", "mixture cycle weight");
  f.option(trn, "--lambda-v", "lambda_v", "source cycle weight");
  f.option(trn, "--workers", "workers", "parallel workers");
  f.option(trn, "--checkpoint-interval", "checkpoint_interval", "epochs between intermediate checkpoints");

  auto* sep = app.add_subcommand("separate", "estimate the sources of one mixture");
  common(sep);
  f.option(sep, "--checkpoint", "checkpoint", "trained model");
  f.option(sep, "--input", "input", "mixture array file, or a dataset with --record");
  f.option(sep, "--record", "record", "record index when --input is a dataset");
  f.option(sep, "--passes", "passes", "stochastic passes to average");
  f.flag(sep, "--det", "det", "disable dropout");
  f.flag(sep, "--pgm", "pgm", "also write PGM images for 2-D models");

  auto* ev = app.add_subcommand("eval", "score a model on a dataset");
  common(ev);
  f.option(ev, "--checkpoint", "checkpoint", "trained model");
  f.option(ev, "--data", "data", "test dataset");
  f.option(ev, "--passes", "passes", "stochastic passes to average");
  f.flag(ev, "--det", "det", "disable dropout");
  f.flag(ev, "--oracle", "oracle", "score the ground truth against itself");
  f.flag(ev, "--permutation", "permutation", "pair estimates with sources by best correlation");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every backward rule");
  gc->add_option("--config", f.config, "key=value config file");
  f.option(gc, "--tol", "tol", "relative error tolerance");
  f.option(gc, "--cases", "cases", "random cases per op");
  f.option(gc, "--inject-fault", "inject_fault", "negate one op's backward rule (test fixture)")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const RunConfig cfg = resolve(f);
    if (*synth) return cmd_synth(cfg);
    if (*trn) return cmd_train(cfg);
    if (*sep) return cmd_separate(cfg);
    if (*ev) return cmd_eval(cfg);
    if (*gc) return cmd_gradcheck(cfg);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
