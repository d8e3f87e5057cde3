// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "safesteer/diffnum/dense.hpp"

namespace safesteer {

// Little-endian binary container:
//
//   bytes 0..7    magic "SSGRPOCK"
//   bytes 8..11   u32 format version (1)
//   bytes 12..15  u32 reserved (0)
//   u64           config hash
//   u32           layer count L, then L x u32 layer sizes
//   u64           parameter count N, then N x f64 parameters
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::vector<diffnum::Index> layer_sizes;
  diffnum::VectorXd params;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace safesteer
