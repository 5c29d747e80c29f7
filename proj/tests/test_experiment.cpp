#include "ecorl/experiment.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

using namespace ecorl;
using namespace ecorl::experiment;

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kTinySpec = R"({
  "name": "tiny",
  "output_dir": "%OUT%",
  "seed": 3,
  "task": "SaladMaking",
  "epochs": 1,
  "epoch_steps": 500,
  "steps_per_collect": 250,
  "grad_steps_per_collect": 10,
  "n_validation": 5,
  "eval_horizon": 30,
  "seeds": [0],
  "batch_size": 32
})";

ExperimentSpec tiny_spec(const std::string& out_dir) {
    std::string body = kTinySpec;
    body.replace(body.find("%OUT%"), 5, out_dir);
    return parse_config(body);
}

}  // namespace

TEST_CASE("parse_config: minimal config fills the documented defaults") {
    const auto spec = parse_config(R"({"task": "Hunting"})");
    REQUIRE(spec.variants.size() == 1);
    const auto& run = spec.variants[0].run;
    CHECK(run.env.task == grid::Task::Hunting);
    CHECK(run.env.grid_size == 8);
    CHECK(run.env.dynamism_p == 0.0);
    CHECK_FALSE(run.env.shaping.has_value());
    CHECK(run.env.reward_mode == grid::RewardMode::Sparse);
    CHECK_FALSE(run.env.episodic);
    CHECK(run.env.horizon == 200);
    CHECK(run.env.nonepisodic_respawn);
    CHECK(run.epochs == 40);
    CHECK(run.steps_per_collect == 500);
    CHECK(run.grad_steps_per_collect == 500);
    CHECK(run.epoch_steps == 5000);
    CHECK(run.n_validation == 100);
    CHECK(run.eval_horizon == 100);
    CHECK(run.seeds.size() == 10);
    CHECK(run.learning_rate == 3e-4);
    CHECK(run.batch_size == 256);
    CHECK(run.buffer_capacity == 500000);
    CHECK(run.eval_env.episodic);
    CHECK(run.eval_env.dynamism_p == 0.0);
}

TEST_CASE("parse_config: out-of-range dynamism probability names the field") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"dynamism_p": 1.5})"),
                         doctest::Contains("dynamism_p"), std::invalid_argument);
}

TEST_CASE("parse_config: unknown task lists the valid names") {
    try {
        parse_config(R"({"task": "Fishing"})");
        FAIL("expected a validation error");
    } catch (const std::invalid_argument& e) {
        const std::string what = e.what();
        CHECK(what.find("Fishing") != std::string::npos);
        CHECK(what.find("Hunting") != std::string::npos);
        CHECK(what.find("FactoryWalls") != std::string::npos);
    }
}

TEST_CASE("parse_config: unknown keys are fatal at every level") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"tsak": "Hunting"})"), doctest::Contains("tsak"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config(R"({"shaping": {"easy_dear_count": 4}})"),
                         doctest::Contains("easy_dear_count"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        parse_config(R"({"defaults": {"task": "Hunting"}, "variants": [{"name": "a", "foo": 1}]})"),
        doctest::Contains("foo"), std::invalid_argument);
}

TEST_CASE("parse_config: round trip is identity on the parsed form") {
    const char* body = R"({
      "name": "exp",
      "seed": 17,
      "defaults": {"task": "Factory", "n_seeds": 3, "gamma": 0.95},
      "variants": [
        {"name": "static"},
        {"name": "dynamic", "dynamism_p": 0.1},
        {"name": "shaped", "shaping": {"coop_prob_initial": 0.8}},
        {"name": "onetime", "reward_mode": "OneTime", "episodic": true}
      ]
    })";
    const auto spec = parse_config(body);
    REQUIRE(spec.variants.size() == 4);
    CHECK(spec.variants[1].run.env.dynamism_p == 0.1);
    CHECK(spec.variants[2].run.env.shaping->coop_prob_initial == 0.8);
    CHECK(spec.variants[3].run.env.reward_mode == grid::RewardMode::OneTime);
    CHECK(spec.variants[0].run.seeds.size() == 3);

    const auto again = parse_config(serialize_config(spec));
    CHECK(again == spec);
    CHECK(serialize_config(again) == serialize_config(spec));
}

TEST_CASE("parse_config: seed list conflicts and malformed input") {
    CHECK_THROWS_AS(parse_config(R"({"seeds": [1], "n_seeds": 2})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("not json"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"variants": []})"), std::invalid_argument);
    CHECK_THROWS_AS(
        parse_config(R"({"variants": [{"name": "a"}, {"name": "a"}]})"),
        std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"task": "Hunting", "variants": [{"name": "a"}]})"),
                    std::invalid_argument);  // run keys must move into defaults
    CHECK_THROWS_AS(parse_config_file("/nonexistent/config.json"), std::runtime_error);
}

TEST_CASE("derive_run_seed separates variants and seeds") {
    const auto a = derive_run_seed(1, 0, 0);
    CHECK(a == derive_run_seed(1, 0, 0));
    CHECK(a != derive_run_seed(1, 0, 1));
    CHECK(a != derive_run_seed(1, 1, 0));
    CHECK(a != derive_run_seed(2, 0, 0));
}

TEST_CASE("expand_sweep builds one variant per value") {
    const auto base = parse_config(R"({"task": "Hunting", "n_seeds": 2})");
    const auto swept = expand_sweep(base, "dynamism_p", {0.0, 0.1, 0.5});
    REQUIRE(swept.variants.size() == 3);
    CHECK(swept.variants[0].run.env.dynamism_p == 0.0);
    CHECK(swept.variants[2].run.env.dynamism_p == 0.5);
    CHECK(swept.variants[1].name == "p0.1");

    const auto lr = expand_sweep(base, "learning_rate", {1e-4, 3e-4, 1e-3});
    CHECK(lr.variants[0].run.learning_rate == 1e-4);

    CHECK_THROWS_AS(expand_sweep(base, "horizon", {100.0}), std::invalid_argument);
}

TEST_CASE("run_experiment writes the documented layout and refuses to clobber") {
    const auto out = fs::temp_directory_path() / "ecorl_exp_test";
    fs::remove_all(out);
    const auto spec = tiny_spec(out.string());

    std::ostringstream log;
    REQUIRE(run_experiment(spec, false, log) == 0);

    const fs::path run_dir = out / "tiny" / "SaladMaking" / "default" / "seed0";
    CHECK(fs::exists(run_dir / "metrics.jsonl"));
    CHECK(fs::exists(run_dir / "heatmap_epoch001.csv"));
    CHECK(fs::exists(run_dir / "final.ckpt"));
    CHECK(fs::exists(out / "tiny" / "summary.json"));

    // the checkpoint reproduces the recorded end-of-run evaluation exactly
    const auto metrics = nlohmann::json::parse(slurp(run_dir / "metrics.jsonl"));
    const auto ckpt = agent::load_checkpoint((run_dir / "final.ckpt").string());
    const auto eval_env = harness::original_eval_env(grid::Task::SaladMaking, 8, 30);
    CHECK(harness::evaluate(ckpt.net, eval_env, 5, 30) ==
          doctest::Approx(metrics["solve_rate"].get<double>()));

    // a second run without overwrite refuses and leaves everything in place
    std::ostringstream log2;
    CHECK(run_experiment(spec, false, log2) == 1);
    CHECK(log2.str().find("exists") != std::string::npos);

    fs::remove_all(out);
}

TEST_CASE("run_experiment reruns are byte-identical") {
    const auto out = fs::temp_directory_path() / "ecorl_exp_det";
    fs::remove_all(out);
    const auto spec = tiny_spec(out.string());
    const fs::path metrics = out / "tiny" / "SaladMaking" / "default" / "seed0" / "metrics.jsonl";
    const fs::path summary = out / "tiny" / "summary.json";

    std::ostringstream log;
    REQUIRE(run_experiment(spec, false, log) == 0);
    const std::string metrics_a = slurp(metrics);
    const std::string summary_a = slurp(summary);
    const std::string ckpt_a = slurp(out / "tiny" / "SaladMaking" / "default" / "seed0" / "final.ckpt");

    REQUIRE(run_experiment(spec, true, log) == 0);
    CHECK(metrics_a == slurp(metrics));
    CHECK(summary_a == slurp(summary));
    CHECK(ckpt_a == slurp(out / "tiny" / "SaladMaking" / "default" / "seed0" / "final.ckpt"));

    fs::remove_all(out);
}

TEST_CASE("experiment validation catches broken variants") {
    auto spec = parse_config(R"({"task": "Hunting"})");
    spec.variants[0].run.eval_env.dynamism_p = 0.3;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);

    auto dup = parse_config(R"({"task": "Hunting"})");
    dup.variants.push_back(dup.variants[0]);
    CHECK_THROWS_AS(dup.validate(), std::invalid_argument);
}
