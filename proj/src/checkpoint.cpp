// SPDX-License-Identifier: Apache-2.0
#include "safesteer/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "safesteer/errors.hpp"

namespace safesteer {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'S', 'G', 'R', 'P', 'O', 'C', 'K'};

template <typename UInt>
void put(std::ostream& out, UInt v) {
  std::array<char, sizeof(UInt)> buf{};
  for (std::size_t i = 0; i < sizeof(UInt); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(buf.data(), buf.size());
}

template <typename UInt>
UInt get(std::istream& in) {
  std::array<unsigned char, sizeof(UInt)> buf{};
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size())) throw std::runtime_error("checkpoint truncated");
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, 0);
  put<std::uint64_t>(out, ckpt.config_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.layer_sizes.size()));
  for (auto s : ckpt.layer_sizes) put<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(ckpt.params.size()));
  for (diffnum::Index i = 0; i < ckpt.params.size(); ++i) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(ckpt.params[i]));
  if (!out) throw std::runtime_error("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw std::runtime_error("not a safesteer checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  get<std::uint32_t>(in);
  Checkpoint ckpt;
  ckpt.config_hash = get<std::uint64_t>(in);
  const auto layers = get<std::uint32_t>(in);
  if (layers > 1024) throw std::runtime_error("checkpoint layer count implausible");
  for (std::uint32_t l = 0; l < layers; ++l) ckpt.layer_sizes.push_back(static_cast<diffnum::Index>(get<std::uint32_t>(in)));
  const auto n = get<std::uint64_t>(in);
  if (n > (1ULL << 32)) throw std::runtime_error("checkpoint parameter count implausible");
  ckpt.params.resize(static_cast<diffnum::Index>(n));
  for (diffnum::Index i = 0; i < ckpt.params.size(); ++i) ckpt.params[i] = std::bit_cast<double>(get<std::uint64_t>(in));
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace safesteer
