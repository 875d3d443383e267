#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "soyo/core.hpp"

namespace soyo::cli {

/// FEAT binary format, version 1, little-endian throughout:
///
///   offset  0  magic "FEAT" (4 bytes)
///   offset  4  u16 version = 1
///   offset  6  u16 flags (bit 0: label block present)
///   offset  8  u64 n_rows
///   offset 16  u32 dim
///   offset 20  u8  dtype = 1 (IEEE-754 binary32)
///   offset 21  3 reserved zero bytes
///   offset 24  payload: n_rows * dim f32 values, row-major
///   then       label block (if flagged): n_rows u32 values
///
/// Declared sizes must match the file size exactly; truncated payloads and
/// trailing bytes are rejected. Features are stored at 32-bit precision and
/// widened to 64-bit on load.
struct FeatFile {
  FeatureMatrix features;
  std::optional<std::vector<std::uint32_t>> labels;
};

void save_feat(const std::string& path, const FeatureMatrix& features,
               const std::optional<std::vector<std::uint32_t>>& labels = std::nullopt);

FeatFile load_feat(const std::string& path);

}  // namespace soyo::cli
