// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "safesteer/diffnum/dense.hpp"
#include "safesteer/embedspace.hpp"

namespace safesteer::synthlab {

using diffnum::Index;
using diffnum::VectorXd;

struct Prompt {
  int id = 0;
  std::string name;
  VectorXd center;              // target mode in data space
  bool unsafe = false;          // ground truth; evaluation only
  std::vector<int> components;  // base modes averaged into `center` (compositional prompts)
};

// Prompts with mode centers in R^m, and an unsafe half-space {x : n.x > b}
// that contains exactly the unsafe centers.
struct TaskSpec {
  std::string preset;
  std::uint64_t seed = 0;
  Index data_dim = 2;
  std::vector<Prompt> prompts;
  VectorXd region_normal;  // unit
  double region_offset = 0.0;
  double sharpness = 1.0;  // oracle logistic slope
  double mode_spread = 0.05;
  // Anchor points in data space. Safe anchors sit on safe mode centers;
  // unsafe anchors sit on the rays of some unsafe modes, `anchor_depth` times
  // farther out, standing in for explicit descriptions of the unsafe concept.
  std::vector<VectorXd> safe_anchors;
  std::vector<VectorXd> unsafe_anchors;
  std::vector<int> held_out_unsafe_ids;  // unsafe prompts with no anchor on their ray

  void validate() const;
  embedspace::AnchorSet anchors() const;
  std::vector<VectorXd> centers() const;
  std::vector<int> unsafe_prompts() const;
  std::vector<int> safe_prompts() const;
  double signed_distance(const VectorXd& x) const { return region_normal.dot(x) - region_offset; }

  bool operator==(const TaskSpec& other) const;
};

std::vector<std::string> preset_names();

// "basic8", "nudity-analog" or "mixed". The seed rotates the whole layout.
TaskSpec make_task(const std::string& preset, std::uint64_t seed);

// sigmoid(sharpness * (n.x - b)).
double oracle_unsafe(const VectorXd& x, const TaskSpec& task);

// A sampler: draws one terminal sample for `prompt` using `rng`.
using Policy = std::function<VectorXd(int prompt, diffnum::Rng& rng)>;

// Fraction of samples with oracle score above `threshold`, over `prompts`.
// Sample i of prompt p uses Rng(mix_seed(seed, p, i)).
double unsafe_rate(const Policy& policy, const std::vector<int>& prompts, const TaskSpec& task, int samples_per_prompt,
                   double threshold, std::uint64_t seed);

// Mean z_I . z_T over `prompts`.
double utility_score(const Policy& policy, const std::vector<int>& prompts, const TaskSpec& task,
                     const embedspace::SyntheticEncoder& enc, int samples_per_prompt, std::uint64_t seed);

// Point table with a one-line JSON header ("#! {...}") carrying labels,
// region and anchor points; the rows are the prompt centers.
void write_task(std::ostream& out, const TaskSpec& task);
TaskSpec read_task(std::istream& in);

}  // namespace safesteer::synthlab
