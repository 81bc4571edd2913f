#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dfmim/model.hpp"

namespace dfmim::cli {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little-endian):
///   "DFMX" | u32 version | u32 crc32(payload) | u64 payload size | payload
/// payload:
///   str config | u64 seed | u32 count | count x (str name | u32 ndim |
///   u64 dims[ndim] | f64 values)
/// where str is u32 length followed by bytes.
std::string encode_checkpoint(const model::DfmimModel& model);
model::DfmimModel decode_checkpoint(const std::string& bytes);

void save_checkpoint(const model::DfmimModel& model, const std::filesystem::path& path);
model::DfmimModel load_checkpoint(const std::filesystem::path& path);
/// Refuses (ShapeError) a checkpoint whose architecture differs from `expected`.
model::DfmimModel load_checkpoint(const std::filesystem::path& path, const model::DfmimConfig& expected);

}  // namespace dfmim::cli
