#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowcouple/numcore.hpp"

namespace flowcouple {

inline constexpr std::uint16_t kCheckpointVersion = 1;

// Binary layout, all integers little-endian:
//
//   "FCKP" | version u16
//   state_dim u32 | context_dim u32
//   param block
//   step_count u64 | beta1 f64 | beta2 f64 | epsilon f64 | learning_rate f64
//   param block (first moments) | param block (second moments)
//
// param block = count u32, then per array: rank u8, dims u32 x rank,
// values f64 x prod(dims).
struct Checkpoint {
    VelocityNet net;
    AdamState adam;
};

std::vector<std::uint8_t> encode_checkpoint(const VelocityNet& net, const AdamState& adam);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Written atomically (temp file + rename).
void save_checkpoint(const std::filesystem::path& path, const VelocityNet& net, const AdamState& adam);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace flowcouple
