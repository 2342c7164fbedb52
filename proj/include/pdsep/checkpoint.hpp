#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pdsep {

class PDualGanModel;
struct ArchDescriptor;

inline constexpr std::uint16_t kCheckpointFormatVersion = 1;

/// PDGM layout: magic, version, architecture, seed, N, named parameter
/// blocks, optimizer accumulators, step counters, CRC32 of everything before it.
std::vector<std::uint8_t> encode_checkpoint(const PDualGanModel& model);
PDualGanModel decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const PDualGanModel& model, const std::filesystem::path& path);
PDualGanModel load_checkpoint(const std::filesystem::path& path);

/// Architecture text as `key=value` lines (used in resolved configs and logs).
std::string describe(const ArchDescriptor& arch);

}  // namespace pdsep
