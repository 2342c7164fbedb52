#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "pdsep/tensor.hpp"

namespace pdsep {

/// A float array with its shape. On disk (PDA1): magic "PDA1", u32 rank,
/// u32 extents, f32 values, little-endian.
struct ArrayFile {
  Shape shape;
  std::vector<float> values;
};

std::vector<std::uint8_t> encode_array(const ArrayFile& a);
ArrayFile decode_array(std::span<const std::uint8_t> bytes);
void save_array(const std::filesystem::path& path, const ArrayFile& a);
ArrayFile load_array(const std::filesystem::path& path);

/// Binary greyscale PGM of a [1,H,W] or [H,W] array, mapping [-1,1] to 0..255
/// with clamping.
void save_pgm(const std::filesystem::path& path, const ArrayFile& a);

}  // namespace pdsep
