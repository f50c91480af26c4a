#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "spgrpo/numerics.hpp"

namespace spgrpo::numerics {

// Versioned binary parameter record:
//
//   "SPGRPOCK" | u32 version | u32 n_sizes | u64 sizes[n_sizes]
//   | per layer: f64 weights (row-major), f64 biases
//   | u32 n_attrs | { u32 len, name, i64 value }*
//   | u32 n_tensors | { u32 len, name, u64 rows, u64 cols, f64 data }*
//   | u64 FNV-1a checksum of everything before it
//
// All integers and doubles are little-endian. Maps are written in key order,
// so decode followed by encode reproduces the input bytes exactly.
struct Checkpoint {
  MlpParams net;
  std::map<std::string, std::int64_t> attributes;
  std::map<std::string, DenseMatrix> tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace spgrpo::numerics
