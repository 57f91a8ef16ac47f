#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>

#include "mlmkit/model.hpp"

namespace mlmkit {

inline constexpr std::string_view kCheckpointMagic = "LKMB";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little-endian): magic "LKMB", u32 version, u64 length + config
/// text, u64 tensor count, then per tensor u64 length + name, u64 rank,
/// u64 dims, raw float32 data.
void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);

Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace mlmkit
