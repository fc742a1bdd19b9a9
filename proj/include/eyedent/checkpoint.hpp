// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file layout, all little-endian:
//   bytes 0-3    magic "EYID"
//   bytes 4-7    format version (u32)
//   bytes 8-15   JSON header length (u64)
//   ...          JSON header (config, shapes, tensor index, training metadata)
//   ...          raw float32 tensor payloads in index order
//   last 32      SHA-256 over all preceding bytes
#pragma once

#include <cstdint>
#include <filesystem>

#include "eyedent/model.hpp"

namespace eyedent::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'E', 'Y', 'I', 'D'};

void save_checkpoint(ModelBundle& bundle, const std::filesystem::path& path);

/// Errors are distinct by cause: checkpoint_version for a foreign format
/// version, checkpoint_truncated when the file ends before its declared
/// payload, checkpoint_checksum when the trailer does not match.
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace eyedent::model
