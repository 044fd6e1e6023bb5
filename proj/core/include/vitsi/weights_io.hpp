#pragma once

#include <cstdint>
#include <filesystem>

#include "vitsi/vit.hpp"

namespace vitsi {

/// VITW interchange layout:
///   "VITW" | u32 version (LE) | u64 manifest length (LE) | manifest JSON |
///   data section of little-endian float32.
/// The manifest is a JSON array of {name, dtype: "f32", shape, byte_offset,
/// byte_length}; byte_offset counts from the first byte of the data section.
inline constexpr std::uint32_t kWeightFormatVersion = 1;

/// Reads every tensor named by tensor_layout(config). Throws LoadError on bad
/// magic or version, a missing tensor, a shape mismatch, or a data section that
/// ends before a tensor does (the message names the tensor).
ViTWeights load_weights(const std::filesystem::path& path, const ViTConfig& config);

/// Writes all tensors as float32. Values that are exactly representable in
/// float32 (random_init output, trainer exports) round-trip bit for bit.
void save_weights(const ViTWeights& weights, const std::filesystem::path& path);

}  // namespace vitsi
