#include "ecorl/experiment.hpp"

#include "ecorl/rand.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace ecorl::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument("config: " + msg); }

void require_keys(const json& obj, const std::set<std::string>& allowed, const char* where) {
    for (const auto& [key, _] : obj.items())
        if (!allowed.contains(key))
            fail("unknown key '" + key + "' in " + where);
}

grid::ShapingSchedule parse_shaping(const json& j) {
    grid::ShapingSchedule s;
    if (j.is_boolean()) {
        if (!j.get<bool>()) fail("shaping: use null to disable, an object or true to enable");
        return s;
    }
    require_keys(j,
                 {"easy_deer_count", "spawn_dist_min", "spawn_dist_max", "ramp_steps",
                  "coop_prob_initial", "coop_decay_steps"},
                 "shaping");
    if (j.contains("easy_deer_count")) s.easy_deer_count = j["easy_deer_count"].get<int>();
    if (j.contains("spawn_dist_min")) s.spawn_dist_min = j["spawn_dist_min"].get<int>();
    if (j.contains("spawn_dist_max")) s.spawn_dist_max = j["spawn_dist_max"].get<int>();
    if (j.contains("ramp_steps")) s.ramp_steps = j["ramp_steps"].get<std::int64_t>();
    if (j.contains("coop_prob_initial")) s.coop_prob_initial = j["coop_prob_initial"].get<double>();
    if (j.contains("coop_decay_steps")) s.coop_decay_steps = j["coop_decay_steps"].get<std::int64_t>();
    s.validate();
    return s;
}

json shaping_to_json(const grid::ShapingSchedule& s) {
    return json{{"easy_deer_count", s.easy_deer_count},
                {"spawn_dist_min", s.spawn_dist_min},
                {"spawn_dist_max", s.spawn_dist_max},
                {"ramp_steps", s.ramp_steps},
                {"coop_prob_initial", s.coop_prob_initial},
                {"coop_decay_steps", s.coop_decay_steps}};
}

const std::set<std::string> kRunKeys = {
    "task",           "grid_size",       "dynamism_p",
    "shaping",        "reward_mode",     "episodic",
    "horizon",        "nonepisodic_respawn", "epochs",
    "steps_per_collect", "grad_steps_per_collect", "epoch_steps",
    "n_validation",   "eval_horizon",    "seeds",
    "n_seeds",        "rnd_enabled",     "learning_rate",
    "gamma",          "batch_size",      "buffer_capacity",
    "target_sync_every", "rnd_bonus_scale"};

void apply_run_keys(harness::RunConfig& cfg, const json& j) {
    if (j.contains("task")) cfg.env.task = grid::task_from_string(j["task"].get<std::string>());
    if (j.contains("grid_size")) cfg.env.grid_size = j["grid_size"].get<int>();
    if (j.contains("dynamism_p")) {
        const double p = j["dynamism_p"].get<double>();
        if (p < 0.0 || p > 1.0) fail("dynamism_p must lie in [0,1], got " + std::to_string(p));
        cfg.env.dynamism_p = p;
    }
    if (j.contains("shaping")) {
        const auto& s = j["shaping"];
        if (s.is_null() || (s.is_boolean() && !s.get<bool>()))
            cfg.env.shaping.reset();
        else
            cfg.env.shaping = parse_shaping(s);
    }
    if (j.contains("reward_mode"))
        cfg.env.reward_mode = grid::reward_mode_from_string(j["reward_mode"].get<std::string>());
    if (j.contains("episodic")) cfg.env.episodic = j["episodic"].get<bool>();
    if (j.contains("horizon")) cfg.env.horizon = j["horizon"].get<int>();
    if (j.contains("nonepisodic_respawn"))
        cfg.env.nonepisodic_respawn = j["nonepisodic_respawn"].get<bool>();

    if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
    if (j.contains("steps_per_collect")) cfg.steps_per_collect = j["steps_per_collect"].get<int>();
    if (j.contains("grad_steps_per_collect"))
        cfg.grad_steps_per_collect = j["grad_steps_per_collect"].get<int>();
    if (j.contains("epoch_steps")) cfg.epoch_steps = j["epoch_steps"].get<int>();
    if (j.contains("n_validation")) cfg.n_validation = j["n_validation"].get<int>();
    if (j.contains("eval_horizon")) cfg.eval_horizon = j["eval_horizon"].get<int>();
    if (j.contains("seeds") && j.contains("n_seeds")) fail("give either seeds or n_seeds, not both");
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("n_seeds")) {
        const int n = j["n_seeds"].get<int>();
        if (n < 1) fail("n_seeds must be >= 1");
        cfg.seeds.clear();
        for (int i = 0; i < n; ++i) cfg.seeds.push_back(static_cast<std::uint64_t>(i));
    }
    if (j.contains("rnd_enabled")) cfg.rnd_enabled = j["rnd_enabled"].get<bool>();
    if (j.contains("learning_rate")) cfg.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("gamma")) cfg.gamma = j["gamma"].get<double>();
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
    if (j.contains("buffer_capacity")) cfg.buffer_capacity = j["buffer_capacity"].get<std::uint64_t>();
    if (j.contains("target_sync_every")) cfg.target_sync_every = j["target_sync_every"].get<long>();
    if (j.contains("rnd_bonus_scale")) cfg.rnd_bonus_scale = j["rnd_bonus_scale"].get<double>();

    // keep the enforced evaluation environment in lockstep with the task
    cfg.eval_env = harness::original_eval_env(cfg.env.task, cfg.env.grid_size, cfg.eval_horizon);
    cfg.eval_env.horizon = cfg.eval_horizon;
}

json run_to_json(const harness::RunConfig& cfg) {
    json j;
    j["task"] = grid::to_string(cfg.env.task);
    j["grid_size"] = cfg.env.grid_size;
    j["dynamism_p"] = cfg.env.dynamism_p;
    j["shaping"] = cfg.env.shaping ? shaping_to_json(*cfg.env.shaping) : json(nullptr);
    j["reward_mode"] = grid::to_string(cfg.env.reward_mode);
    j["episodic"] = cfg.env.episodic;
    j["horizon"] = cfg.env.horizon;
    j["nonepisodic_respawn"] = cfg.env.nonepisodic_respawn;
    j["epochs"] = cfg.epochs;
    j["steps_per_collect"] = cfg.steps_per_collect;
    j["grad_steps_per_collect"] = cfg.grad_steps_per_collect;
    j["epoch_steps"] = cfg.epoch_steps;
    j["n_validation"] = cfg.n_validation;
    j["eval_horizon"] = cfg.eval_horizon;
    j["seeds"] = cfg.seeds;
    j["rnd_enabled"] = cfg.rnd_enabled;
    j["learning_rate"] = cfg.learning_rate;
    j["gamma"] = cfg.gamma;
    j["batch_size"] = cfg.batch_size;
    j["buffer_capacity"] = cfg.buffer_capacity;
    j["target_sync_every"] = cfg.target_sync_every;
    j["rnd_bonus_scale"] = cfg.rnd_bonus_scale;
    return j;
}

}  // namespace

void ExperimentSpec::validate() const {
    if (name.empty()) fail("name must not be empty");
    if (parallelism < 1) fail("parallelism must be >= 1");
    if (variants.empty()) fail("no variants");
    std::set<std::string> names;
    for (const auto& v : variants) {
        if (v.name.empty()) fail("variant with empty name");
        if (!names.insert(v.name).second) fail("duplicate variant name '" + v.name + "'");
        v.run.validate();
    }
}

ExperimentSpec parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(std::string("not valid JSON: ") + e.what());
    }
    if (!root.is_object()) fail("top level must be an object");

    std::set<std::string> allowed = {"name", "output_dir", "parallelism", "seed", "defaults",
                                     "variants"};
    allowed.insert(kRunKeys.begin(), kRunKeys.end());
    require_keys(root, allowed, "top level");

    ExperimentSpec spec;
    if (root.contains("name")) spec.name = root["name"].get<std::string>();
    if (root.contains("output_dir")) spec.output_dir = root["output_dir"].get<std::string>();
    if (root.contains("parallelism")) spec.parallelism = root["parallelism"].get<int>();
    if (root.contains("seed")) spec.seed = root["seed"].get<std::uint64_t>();

    harness::RunConfig base = harness::RunConfig::defaults(grid::EnvConfig{});
    json top_run = json::object();
    for (const auto& [key, value] : root.items())
        if (kRunKeys.contains(key)) top_run[key] = value;
    apply_run_keys(base, top_run);
    if (root.contains("defaults")) {
        const auto& d = root["defaults"];
        require_keys(d, kRunKeys, "defaults");
        apply_run_keys(base, d);
    }

    if (root.contains("variants")) {
        if (!top_run.empty()) fail("run keys must live in defaults/variants when variants given");
        const auto& vs = root["variants"];
        if (!vs.is_array() || vs.empty()) fail("variants must be a non-empty array");
        for (const auto& vj : vs) {
            std::set<std::string> vkeys = kRunKeys;
            vkeys.insert("name");
            require_keys(vj, vkeys, "variant");
            Variant v;
            if (!vj.contains("name")) fail("variant missing name");
            v.name = vj["name"].get<std::string>();
            v.run = base;
            apply_run_keys(v.run, vj);
            spec.variants.push_back(std::move(v));
        }
    } else {
        spec.variants.push_back(Variant{"default", base});
    }

    spec.validate();
    return spec;
}

ExperimentSpec parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const ExperimentSpec& spec) {
    json root;
    root["name"] = spec.name;
    root["output_dir"] = spec.output_dir;
    root["parallelism"] = spec.parallelism;
    root["seed"] = spec.seed;
    root["variants"] = json::array();
    for (const auto& v : spec.variants) {
        json vj = run_to_json(v.run);
        vj["name"] = v.name;
        root["variants"].push_back(std::move(vj));
    }
    return root.dump(2);
}

std::uint64_t derive_run_seed(std::uint64_t experiment_seed, int variant_index,
                              std::uint64_t seed_id) {
    return mix_seed(mix_seed(experiment_seed, 0x76000000ULL + static_cast<std::uint64_t>(variant_index)),
                    seed_id);
}

namespace {

struct RunUnit {
    int variant_idx;
    std::size_t seed_idx;
};

void write_run_outputs(const fs::path& dir, const harness::SeedResult& result,
                       const harness::RunConfig& cfg) {
    fs::create_directories(dir);
    harness::write_metrics_jsonl((dir / "metrics.jsonl").string(), result);
    for (std::size_t e = 0; e < result.heatmaps.size(); ++e) {
        char name[40];
        std::snprintf(name, sizeof(name), "heatmap_epoch%03zu.csv", e + 1);
        harness::write_heatmap_csv((dir / name).string(), result.heatmaps[e]);
    }
    agent::save_checkpoint((dir / "final.ckpt").string(), result.final_net, cfg.env.task,
                           result.env_steps);
}

}  // namespace

int run_experiment(const ExperimentSpec& spec, bool overwrite, std::ostream& log) {
    spec.validate();
    const fs::path root = fs::path(spec.output_dir) / spec.name;
    if (fs::exists(root)) {
        if (!overwrite) {
            log << "error: " << root.string() << " exists (pass --overwrite to replace)\n";
            return 1;
        }
        fs::remove_all(root);
    }
    fs::create_directories(root);

    std::vector<RunUnit> units;
    for (int v = 0; v < static_cast<int>(spec.variants.size()); ++v)
        for (std::size_t s = 0; s < spec.variants[v].run.seeds.size(); ++s)
            units.push_back({v, s});

    std::vector<std::vector<harness::SeedResult>> results(spec.variants.size());
    for (std::size_t v = 0; v < spec.variants.size(); ++v)
        results[v].resize(spec.variants[v].run.seeds.size());

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= units.size() || failed.load()) return;
            const RunUnit u = units[i];
            const auto& variant = spec.variants[u.variant_idx];
            const std::uint64_t seed_id = variant.run.seeds[u.seed_idx];
            const std::uint64_t run_seed = derive_run_seed(spec.seed, u.variant_idx, seed_id);
            try {
                results[u.variant_idx][u.seed_idx] =
                    harness::train_single_seed(variant.run, run_seed);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!failed.exchange(true)) first_error = e.what();
                return;
            }
        }
    };

    if (spec.parallelism <= 1 || units.size() == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int n = std::min<int>(spec.parallelism, static_cast<int>(units.size()));
        for (int i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failed.load()) {
        log << "error: " << first_error << '\n';
        return 1;
    }

    json summary;
    summary["schema"] = 1;
    summary["name"] = spec.name;
    summary["seed"] = spec.seed;
    summary["variants"] = json::array();

    for (std::size_t v = 0; v < spec.variants.size(); ++v) {
        const auto& variant = spec.variants[v];
        const fs::path vdir =
            root / grid::to_string(variant.run.env.task) / variant.name;
        harness::RunArtifacts artifacts;
        artifacts.per_seed = results[v];

        for (std::size_t s = 0; s < results[v].size(); ++s) {
            char seed_dir[32];
            std::snprintf(seed_dir, sizeof(seed_dir), "seed%llu",
                          static_cast<unsigned long long>(variant.run.seeds[s]));
            write_run_outputs(vdir / seed_dir, results[v][s], variant.run);
        }

        // aggregate across seeds in fixed order
        const int epochs = variant.run.epochs;
        json epochs_json = json::array();
        for (int e = 0; e < epochs; ++e) {
            double mean = 0.0;
            for (const auto& r : results[v]) mean += r.epochs[e].solve_rate;
            mean /= static_cast<double>(results[v].size());
            double var = 0.0;
            for (const auto& r : results[v]) {
                const double d = r.epochs[e].solve_rate - mean;
                var += d * d;
            }
            epochs_json.push_back({{"epoch", e + 1},
                                   {"env_steps", results[v][0].epochs[e].env_steps},
                                   {"solve_rate_mean", mean},
                                   {"solve_rate_std",
                                    std::sqrt(var / static_cast<double>(results[v].size()))}});
        }
        json vj;
        vj["name"] = variant.name;
        vj["task"] = grid::to_string(variant.run.env.task);
        vj["epochs"] = std::move(epochs_json);
        summary["variants"].push_back(std::move(vj));
        log << "variant " << variant.name << ": final solve_rate "
            << summary["variants"].back()["epochs"].back()["solve_rate_mean"].get<double>() << '\n';
    }

    std::ofstream os(root / "summary.json", std::ios::trunc);
    os << summary.dump(2) << '\n';
    return os ? 0 : 1;
}

ExperimentSpec expand_sweep(const ExperimentSpec& base, const std::string& param,
                            const std::vector<double>& values) {
    if (base.variants.size() != 1)
        throw std::invalid_argument("sweep: base config must have a single variant");
    if (values.empty()) throw std::invalid_argument("sweep: no values");
    ExperimentSpec out = base;
    out.variants.clear();
    for (double v : values) {
        Variant var = base.variants[0];
        std::ostringstream name;
        if (param == "dynamism_p") {
            var.run.env.dynamism_p = v;
            name << "p" << v;
        } else if (param == "learning_rate") {
            var.run.learning_rate = v;
            name << "lr" << v;
        } else {
            throw std::invalid_argument("sweep: unsupported parameter '" + param +
                                        "' (use dynamism_p or learning_rate)");
        }
        var.name = name.str();
        out.variants.push_back(std::move(var));
    }
    out.validate();
    return out;
}

}  // namespace ecorl::experiment
