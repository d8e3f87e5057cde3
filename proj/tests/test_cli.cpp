// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "safesteer/commands.hpp"
#include "safesteer/errors.hpp"

using namespace safesteer;
using namespace safesteer::cli;
namespace fs = std::filesystem;

namespace {

RunConfig small_config(const std::string& name) {
  RunConfig cfg;
  cfg.hidden = {8};
  cfg.pretrain_steps = 100;
  cfg.steps = 3;
  cfg.grpo.group_size = 2;
  cfg.epochs = 2;
  cfg.eval_samples = 10;
  const auto dir = fs::temp_directory_path() / ("safesteer_test_cli_" + name);
  fs::remove_all(dir);
  cfg.out_dir = dir.string();
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("overrides take precedence and are validated") {
  Overrides o;
  o.seed = 9;
  o.out_dir = "x";
  o.workers = 3;
  const auto cfg = apply_overrides(RunConfig{}, o);
  CHECK(cfg.seed == 9);
  CHECK(cfg.out_dir == "x");
  CHECK(cfg.workers == 3);
  o.workers = 0;
  CHECK_THROWS_AS(apply_overrides(RunConfig{}, o), ConfigError);
  CHECK(apply_overrides(RunConfig{}, Overrides{}) == RunConfig{});
}

TEST_CASE("metrics line carries the documented fields in order") {
  grpo::StepMetrics m;
  m.step = 4;
  m.reward_mean_safe = 0.5;
  m.reward_mean_unsafe = -0.25;
  m.kl_mean = 1e-3;
  m.clip_frac = 0.125;
  m.grad_norm = 2.0;
  m.unsafe_rate = 0.75;
  CHECK(metrics_line(m) ==
        "{\"step\":4,\"reward_mean_safe\":0.5,\"reward_mean_unsafe\":-0.25,\"kl_mean\":0.001,"
        "\"clip_frac\":0.125,\"grad_norm\":2.0,\"unsafe_rate\":0.75}");
}

TEST_CASE("train with zero epochs evaluates the base model") {
  auto cfg = small_config("zero");
  cfg.epochs = 0;
  std::ostringstream log;
  const auto summary = cmd_train(cfg, log);
  const fs::path dir(cfg.out_dir);
  CHECK(summary.history.empty());
  CHECK(slurp(dir / "metrics.jsonl").empty());
  CHECK(fs::exists(dir / "final.ckpt"));
  CHECK_FALSE(fs::exists(dir / "eval.jsonl"));
  CHECK(slurp(dir / "config.txt") == serialize_config(cfg));

  const auto doc = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(doc["schema"] == "safesteer.summary/1");
  CHECK(doc["epochs"] == 0);
  CHECK(doc["variant"] == "steered");
  CHECK(doc["config_hash"] == config_hash(cfg));
  CHECK(doc["final_unsafe_rate"].get<double>() == summary.final.unsafe_rate);

  const auto base = cmd_eval(cfg, std::nullopt);
  CHECK(base["model"] == "base");
  CHECK(base["unsafe_rate"].get<double>() == summary.final.unsafe_rate);
  CHECK(base["utility_score"].get<double>() == summary.final.utility);
  fs::remove_all(dir);
}

TEST_CASE("train writes metrics, evals and checkpoints that replay consistently") {
  auto cfg = small_config("two");
  cfg.eval_every = 1;
  cfg.checkpoint_every = 2;
  std::ostringstream log;
  const auto summary = cmd_train(cfg, log);
  const fs::path dir(cfg.out_dir);

  const auto metrics = lines_of(slurp(dir / "metrics.jsonl"));
  REQUIRE(metrics.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto j = nlohmann::json::parse(metrics[i]);
    CHECK(j["step"] == i + 1);
    for (const char* key : {"reward_mean_safe", "reward_mean_unsafe", "kl_mean", "clip_frac", "grad_norm", "unsafe_rate"}) {
      CHECK(j.contains(key));
    }
    CHECK(metrics[i] == metrics_line(summary.history[i]));
  }
  CHECK(lines_of(slurp(dir / "eval.jsonl")).size() == 2);
  CHECK_FALSE(fs::exists(dir / "ckpt_1.bin"));
  CHECK(fs::exists(dir / "ckpt_2.bin"));
  CHECK(slurp(dir / "ckpt_2.bin") == slurp(dir / "final.ckpt"));

  const auto ckpt = load_checkpoint((dir / "final.ckpt").string());
  const auto rows = cmd_ablate_sampler(cfg, ckpt, {cfg.eta, 0.0}, {cfg.steps, 5});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].eta == cfg.eta);
  CHECK(rows[0].steps == cfg.steps);
  CHECK(rows[0].unsafe_rate == summary.final.unsafe_rate);
  CHECK(rows[0].utility == summary.final.utility);
  CHECK(rows[2].eta == 0.0);
  for (const auto& r : rows) {
    CHECK(r.unsafe_rate >= 0.0);
    CHECK(r.unsafe_rate <= 1.0);
  }

  const auto doc = cmd_eval(cfg, ckpt);
  CHECK(doc["schema"] == "safesteer.eval/1");
  CHECK(doc["model"] == "checkpoint");
  CHECK(doc["unsafe_rate"].get<double>() == summary.final.unsafe_rate);
  REQUIRE(doc["prompts"].size() == 8);
  int held_out = 0;
  for (const auto& p : doc["prompts"]) held_out += p["held_out"].get<bool>() ? 1 : 0;
  CHECK(held_out == 1);

  auto moved = cfg;
  moved.reward.alpha = 0.1;
  CHECK_THROWS_AS(cmd_ablate_sampler(moved, ckpt, {1.0}, {3}), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("train is reproducible byte for byte") {
  auto a = small_config("repro_a");
  auto b = small_config("repro_b");
  b.workers = 2;
  std::ostringstream log;
  cmd_train(a, log);
  cmd_train(b, log);
  CHECK(slurp(fs::path(a.out_dir) / "metrics.jsonl") == slurp(fs::path(b.out_dir) / "metrics.jsonl"));
  CHECK(slurp(fs::path(a.out_dir) / "final.ckpt") == slurp(fs::path(b.out_dir) / "final.ckpt"));
  fs::remove_all(a.out_dir);
  fs::remove_all(b.out_dir);
}

TEST_CASE("steer sweep: alpha = 0 and the collinear case") {
  const embedspace::SafetyDirection v(embedspace::UnitEmbedding::normalized(Eigen::Vector3d(1, 2, 2)));
  const auto minus_v = embedspace::UnitEmbedding(-v.values());
  const auto side = embedspace::UnitEmbedding::normalized(Eigen::Vector3d(2, 1, -2));
  const auto rows = steer_sweep({v.direction(), side, embedspace::UnitEmbedding::normalized(Eigen::Vector3d(0, -1, 0))},
                                {"a", "b", "c"}, {"safe", "safe", "unsafe"}, v, {0.0, 0.5});
  REQUIRE(rows.size() == 6);
  for (const auto& r : rows) {
    if (r.alpha == 0.0) CHECK(r.score_after == r.score_before);
  }
  CHECK(rows[0].score_after == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rows[1].score_after == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rows[2].score_before == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(rows[3].score_after == rows[3].score_before);
  CHECK(rows[5].score_after > rows[5].score_before);
  CHECK_THROWS_AS(steer_sweep({minus_v}, {"x"}, {"unsafe"}, v, {1.0}), DegenerateError);
  CHECK_THROWS_AS(steer_sweep({side}, {}, {}, v, {1.0}), DimensionError);
}

TEST_CASE("steer sweep on basic8 against the embedding functions") {
  RunConfig cfg;
  const std::vector<double> alphas{0.0, 0.25, 0.5, 1.0};
  const auto rows = cmd_steer_sweep(cfg, alphas);
  const auto task = synthlab::make_task(cfg.preset, cfg.task_seed);
  const auto enc = embedspace::SyntheticEncoder::seeded(cfg.embed_dim, 2, cfg.encoder_seed, cfg.encoder_offset);
  const auto v = embedspace::build_safety_direction(enc, task.anchors());
  REQUIRE(rows.size() == task.prompts.size() * alphas.size());
  for (const auto& r : rows) {
    const auto& p = task.prompts[static_cast<std::size_t>(r.prompt)];
    CHECK(r.name == p.name);
    CHECK(r.label == (p.unsafe ? "unsafe" : "safe"));
    const auto z = enc.encode(p.center);
    CHECK(r.score_before == doctest::Approx(embedspace::text_safety_score(z, v)).epsilon(1e-14));
    const double expect = p.unsafe ? embedspace::text_safety_score(embedspace::steer(z, v, r.alpha), v)
                                   : embedspace::text_safety_score(z, v);
    CHECK(r.score_after == doctest::Approx(expect).epsilon(1e-14));
    CHECK((p.unsafe == (r.score_before < 0.0)));
  }

  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  const auto lines = lines_of(csv.str());
  REQUIRE(lines.size() == rows.size() + 2);
  CHECK(lines[0].rfind("# ", 0) == 0);
  CHECK(lines[1] == "prompt_id,prompt_name,label,alpha,score_before,score_after");
  CHECK_THROWS_AS(cmd_steer_sweep(cfg, {}), ConfigError);
}

TEST_CASE("reward ablation output is self-describing") {
  auto cfg = small_config("ablate");
  cfg.epochs = 1;
  std::ostringstream log;
  const auto rows = cmd_ablate_reward(cfg, {reward::Variant::kNegOnly}, log);
  REQUIRE(rows.size() == 1);
  const auto doc = ablation_json(cfg, rows);
  CHECK(doc["schema"] == "safesteer.ablate_reward/1");
  CHECK(doc["columns"].contains("utility_score"));
  CHECK(doc["epochs"] == 1);
  REQUIRE(doc["rows"].size() == 1);
  CHECK(doc["rows"][0]["variant"] == "neg_only");
  CHECK(doc["rows"][0]["unsafe_rate"].get<double>() == rows[0].unsafe_rate);
  CHECK_THROWS_AS(cmd_ablate_reward(cfg, {}, log), ConfigError);
}

TEST_CASE("sampler csv header") {
  std::ostringstream csv;
  write_sampler_csv(csv, {{0.5, 20, 0.25, 0.75}});
  const auto lines = lines_of(csv.str());
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].rfind("# ", 0) == 0);
  CHECK(lines[1] == "eta,steps,unsafe_rate,utility_score");
  CHECK(lines[2] == "0.5,20,0.25,0.75");
}

TEST_CASE("shipped ablation fixture parses") {
  const auto cfg = load_config(SAFESTEER_FIXTURE_DIR "/ablate_reward.cfg");
  CHECK(cfg.epochs == 800);
  CHECK(cfg.preset == "basic8");
}
