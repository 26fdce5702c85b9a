#pragma once

// Binary checkpoint: string metadata plus named float64 arrays.
//
// Layout, all integers little-endian:
//   magic    8 bytes  "TFBCKPT\0"
//   version  u32      currently 1
//   n_meta   u32, then per entry: u32 key length, key bytes, u32 value length, value bytes
//   n_arrays u32, then per array: u32 name length, name bytes, u32 rank,
//            rank x u64 dims, prod(dims) x f64 (IEEE-754 bit pattern, little-endian)

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tfbench {

struct CheckpointArray {
  std::vector<std::uint64_t> shape;
  std::vector<double> values;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> metadata;
  std::map<std::string, CheckpointArray> arrays;

  const std::string& meta(const std::string& key) const;
  const CheckpointArray& array(const std::string& name) const;
};

// Written to a temporary sibling then renamed into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws ParseError on a bad magic, unknown version or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tfbench
