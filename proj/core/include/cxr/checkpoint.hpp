#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "cxr/model.hpp"

namespace cxr {

// Self-describing model container. Layout (see docs/checkpoint_format.md):
//   "CXRCKPT1" | u32 version | u64 header bytes | JSON header | f32 payload
// All integers and floats little-endian; tensors row-major in parameter order.
struct Checkpoint {
  Model<float> model;
  std::string architecture;  // "Arch1".."Arch6", or empty for custom stacks
  std::uint64_t seed = 0;
  std::map<std::string, std::string> metadata;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);

// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Atomic whole-file write shared by every artifact writer.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace cxr
