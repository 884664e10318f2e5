#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lmc/checkpoint.hpp"

namespace lmc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, all integers and floats little-endian:
///   "LMCK" | u32 version | u32 metadata length | metadata JSON (UTF-8)
///   | P x f32 parameters | for each BN block: C x f32 mean, C x f32 var
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lmc
