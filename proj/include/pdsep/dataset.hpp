#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pdsep/mixing.hpp"

namespace pdsep {

inline constexpr std::uint16_t kDatasetFormatVersion = 1;

struct Manifest {
  std::uint32_t sources = 0;
  Shape shape;  // sample shape, [C,T] or [C,H,W]
  MixKind kind = MixKind::Instantaneous;
  std::uint32_t count = 0;
  std::uint64_t seed = 0;
  std::uint16_t version = kDatasetFormatVersion;

  bool operator==(const Manifest&) const = default;
};

/// One mixture and its ground-truth sources, all of the manifest's shape.
struct SampleRecord {
  std::vector<float> mixture;
  std::vector<std::vector<float>> sources;
  MixingSpec spec;

  bool operator==(const SampleRecord&) const = default;
};

struct Dataset {
  Manifest manifest;
  std::vector<SampleRecord> records;

  bool operator==(const Dataset&) const = default;
};

void validate(const Dataset& ds);

/// Records share the first `n` bank sources; each record draws fresh weights
/// from the stream derive_seed(seed, index).
Dataset synth_dataset(std::span<const std::vector<double>> bank, const Shape& sample_shape, std::size_t count,
                      MixKind kind, std::size_t n, const Shape& kernel_shape, std::uint64_t seed);

struct Split {
  Dataset train;
  Dataset test;
};

/// Train and test sets over the same base sources with weights drawn from
/// disjoint streams of `seed`.
Split synth_split(std::span<const std::vector<double>> bank, const Shape& sample_shape, std::size_t train_count,
                  std::size_t test_count, MixKind kind, std::size_t n, const Shape& kernel_shape, std::uint64_t seed);

/// Seed used for the test half of synth_split.
std::uint64_t test_split_seed(std::uint64_t seed);

/// The built-in bank matching a sample shape ([1,T] or [1,H,W]).
std::vector<std::vector<double>> builtin_bank(const Shape& sample_shape);

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

/// `key=value` lines mirroring the binary manifest.
std::string manifest_text(const Dataset& ds);

/// Writes `path` and the sibling `path.manifest`.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path);

}  // namespace pdsep
