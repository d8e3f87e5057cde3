// SPDX-License-Identifier: Apache-2.0
//
// safesteer: train, evaluate and ablate the safety-steered GRPO toy.
//
//   safesteer [--config PATH] [--seed N] [--out DIR] [--workers N] <command> [options]
//
// Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "safesteer/commands.hpp"
#include "safesteer/errors.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::ofstream open_in_out_dir(const safesteer::RunConfig& cfg, const std::string& name, std::string& path) {
  std::filesystem::create_directories(cfg.out_dir);
  path = (std::filesystem::path(cfg.out_dir) / name).string();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace safesteer;

  CLI::App app{"Online GRPO post-training of a toy diffusion model with a safety-steered reward"};
  app.require_subcommand(1);

  std::string config_path;
  cli::Overrides overrides;
  app.add_option("--config", config_path, "run configuration file (defaults apply when omitted)");
  app.add_option("--seed", overrides.seed, "training and evaluation seed");
  app.add_option("--out", overrides.out_dir, "output directory");
  app.add_option("--workers", overrides.workers, "maximum worker threads")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "run GRPO and write metrics, checkpoints and a summary");

  std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
  auto* sweep = app.add_subcommand("steer-sweep", "safety score of every prompt before and after steering");
  sweep->add_option("--alphas", alphas, "steering strengths")->delimiter(',');

  std::vector<std::string> variant_names{"steered", "plain_cosine", "neg_only"};
  auto* ablate_reward = app.add_subcommand("ablate-reward", "train each reward variant from the same seed");
  ablate_reward->add_option("--variants", variant_names, "reward variants")->delimiter(',');

  std::string checkpoint_path;
  std::vector<double> etas{0.0, 0.5, 1.0};
  std::vector<int> step_grid{10, 20, 50};
  auto* ablate_sampler = app.add_subcommand("ablate-sampler", "evaluate one checkpoint across DDIM settings");
  ablate_sampler->add_option("--checkpoint", checkpoint_path, "checkpoint written by train")->required();
  ablate_sampler->add_option("--etas", etas, "DDIM eta values")->delimiter(',');
  ablate_sampler->add_option("--steps", step_grid, "sampling step counts")->delimiter(',');

  std::string eval_checkpoint;
  auto* eval = app.add_subcommand("eval", "unsafe rate and utility of the base model or a checkpoint");
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint written by train");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    cfg = cli::apply_overrides(std::move(cfg), overrides);
    std::string path;

    if (train->parsed()) {
      cli::cmd_train(cfg, std::cerr);
      std::cout << (std::filesystem::path(cfg.out_dir) / "summary.json").string() << '\n';
    } else if (sweep->parsed()) {
      const auto rows = cli::cmd_steer_sweep(cfg, alphas);
      auto out = open_in_out_dir(cfg, "steer_sweep.csv", path);
      cli::write_sweep_csv(out, rows);
      std::cout << path << '\n';
    } else if (ablate_reward->parsed()) {
      std::vector<reward::Variant> variants;
      for (const auto& n : variant_names) variants.push_back(reward::parse_variant(n));
      const auto rows = cli::cmd_ablate_reward(cfg, variants, std::cerr);
      auto out = open_in_out_dir(cfg, "ablate_reward.json", path);
      out << cli::ablation_json(cfg, rows).dump(2) << '\n';
      std::cout << path << '\n';
    } else if (ablate_sampler->parsed()) {
      const auto rows = cli::cmd_ablate_sampler(cfg, load_checkpoint(checkpoint_path), etas, step_grid);
      auto out = open_in_out_dir(cfg, "ablate_sampler.csv", path);
      cli::write_sampler_csv(out, rows);
      std::cout << path << '\n';
    } else if (eval->parsed()) {
      std::optional<Checkpoint> ckpt;
      if (!eval_checkpoint.empty()) ckpt = load_checkpoint(eval_checkpoint);
      const auto doc = cli::cmd_eval(cfg, ckpt);
      auto out = open_in_out_dir(cfg, "eval.json", path);
      out << doc.dump(2) << '\n';
      std::cout << path << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
