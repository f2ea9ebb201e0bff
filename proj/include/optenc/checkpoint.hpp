#pragma once

#include <cstdint>
#include <filesystem>

#include "optenc/model.hpp"

namespace optenc {

inline constexpr char kCheckpointMagic[4] = {'M', 'F', 'M', 'R'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
};

/// Binary layout (all integers and floats little-endian):
///   "MFMR" | u32 version | ModelConfig as 8 x i32 + f64 dropout |
///   u32 tensor count | per tensor: u32 name length, name bytes,
///   u64 rows, u64 cols, rows*cols f64 in row-major order.
void save_checkpoint(const ParameterSet& params, const ModelConfig& cfg,
                     const std::filesystem::path& path);

/// Throws IoError, FormatError (bad magic, truncation, layout mismatch) or
/// VersionError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace optenc
