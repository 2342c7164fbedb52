#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pdsep/mixing.hpp"
#include "pdsep/nets.hpp"
#include "pdsep/trainer.hpp"

namespace pdsep {

/// Flat `key=value` configuration shared by every command. Every key has a
/// default, so the resolved text always lists the full set. Unknown keys are
/// rejected on parse and on set.
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  /// Overrides keys with the lines of `text`.
  void apply(const std::string& text);

  /// One `key=value` line per key, sorted by key.
  std::string text() const;
  void save(const std::filesystem::path& path) const;

  static const std::vector<std::string>& keys();
  static bool known(const std::string& key);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  std::string str(const std::string& key) const { return get(key); }
  std::uint64_t u64(const std::string& key) const;
  std::size_t size(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;

  MixKind kind() const;
  /// `shape` is "T" for signals or "HxW" for images; the result carries the
  /// leading channel axis.
  Shape sample_shape() const;
  /// `klen` as "K" or "KhxKw"; 0 picks the default for the sample rank.
  Shape kernel_shape() const;

  TrainConfig train_config() const;
  /// Architecture for samples of the given shape. Keys left at `auto` take
  /// the rank's default.
  ArchDescriptor arch(const Shape& sample_shape) const;
  /// Writes the architecture fields back as keys.
  void set_arch(const ArchDescriptor& arch);

 private:
  std::map<std::string, std::string> values_;
};

/// Parses "a,b,c" / "AxB" style lists.
std::vector<std::size_t> parse_size_list(const std::string& s, char sep);
std::vector<double> parse_real_list(const std::string& s, char sep);

}  // namespace pdsep
