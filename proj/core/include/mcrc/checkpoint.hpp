#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mcrc/autodiff.hpp"

namespace mcrc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Binary layout (little-endian):
//   char[8]  magic "MCRCCKPT"
//   u32      format version
//   u64      parameter count
//   per parameter:
//     u32 name length, name bytes, u32 rank, u64 extents[rank],
//     f64 values[product(extents)] in row-major order
// Doubles are written bit-for-bit, so a reload reproduces predictions exactly.

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
void save_checkpoint(const std::vector<const Parameter*>& params, const std::filesystem::path& path);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// Overwrites every parameter of `params` from the file. Missing names and
/// shape disagreements raise CheckpointError; extra entries are ignored.
void load_checkpoint(ParameterSet& params, const std::filesystem::path& path);
void load_checkpoint(const std::vector<Parameter*>& params, const std::filesystem::path& path);

/// FNV-1a over names and raw value bytes; used to verify freezing.
std::uint64_t parameter_checksum(const std::vector<const Parameter*>& params);

}  // namespace mcrc
