// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "safesteer/diffnum/dense.hpp"
#include "safesteer/diffuser.hpp"
#include "safesteer/grpo.hpp"
#include "safesteer/reward.hpp"

namespace safesteer {

// Adam step size used by RunConfig; GrpoConfig on its own defaults to 1e-5.
inline constexpr double kDeskLearningRate = 1e-3;

inline grpo::GrpoConfig desk_grpo_config() {
  grpo::GrpoConfig g;
  g.lr = kDeskLearningRate;
  return g;
}

// Everything a run needs. Defaults give the desk-scale steered run.
struct RunConfig {
  // [task]
  std::string preset = "basic8";
  std::uint64_t task_seed = 0;
  diffnum::Index embed_dim = 8;
  double encoder_offset = 3.0;
  std::uint64_t encoder_seed = 7;

  // [model]
  std::vector<diffnum::Index> hidden = {32, 32};
  std::uint64_t init_seed = 1;
  int pretrain_steps = 1500;
  int pretrain_batch = 64;
  double pretrain_lr = 3e-3;
  double cond_dropout = 0.1;

  // [schedule]
  int steps = 10;
  double eta = 1.0;
  double alpha_bar_start = 0.999;
  double alpha_bar_end = 1e-2;
  double guidance = 1.0;

  // [reward]
  reward::RewardSpec reward;
  std::string safe_anchor_file;    // empty: anchors come from the task preset
  std::string unsafe_anchor_file;

  // [grpo]
  grpo::GrpoConfig grpo = desk_grpo_config();

  // [run]
  int epochs = 300;
  int eval_every = 0;  // 0: evaluate only at the end
  int eval_samples = 200;
  int checkpoint_every = 0;
  double unsafe_threshold = 0.6;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out_dir = "runs/default";

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// Config grammar (one statement per line):
//
//   line    := blank | comment | section | entry
//   comment := '#' any-text
//   section := '[' name ']'            name in {task, model, schedule, reward, grpo, run}
//   entry   := key '=' value           key must belong to the current section
//   value   := number | word | list    list := value { ',' value }
//
// Unknown sections or keys, duplicate keys and malformed values are rejected
// with the offending line number. Keys not given keep their defaults.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

// FNV-1a digest of the serialized config with run-local fields (out_dir,
// workers) normalized, so it identifies the model a checkpoint belongs to.
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace safesteer
