#include "ecorl/experiment.hpp"
#include "ecorl/harness.hpp"
#include "ecorl/mdp.hpp"
#include "ecorl/rand.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

namespace fs = std::filesystem;
using namespace ecorl;

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    if (out.empty()) throw std::invalid_argument("empty value list");
    return out;
}

experiment::ExperimentSpec load_spec(const std::string& config_path, const std::string& task,
                                     const std::string& out_dir, std::uint64_t seed,
                                     bool seed_given) {
    experiment::ExperimentSpec spec;
    if (!config_path.empty()) {
        spec = experiment::parse_config_file(config_path);
    } else {
        std::string body = "{}";
        if (!task.empty()) body = "{\"task\": \"" + task + "\"}";
        spec = experiment::parse_config(body);
    }
    if (!out_dir.empty()) spec.output_dir = out_dir;
    if (seed_given) spec.seed = seed;
    return spec;
}

grid::EnvConfig env_of(const experiment::ExperimentSpec& spec) {
    return spec.variants.at(0).run.env;
}

int cmd_train(const std::string& config, const std::string& out, std::uint64_t seed,
              bool seed_given, bool overwrite, int parallelism) {
    auto spec = load_spec(config, "", out, seed, seed_given);
    if (parallelism > 0) spec.parallelism = parallelism;
    return experiment::run_experiment(spec, overwrite, std::cout);
}

int cmd_eval(const std::string& checkpoint, int n, int horizon, const std::string& dump_path) {
    const agent::Checkpoint ckpt = agent::load_checkpoint(checkpoint);
    const grid::EnvConfig eval_env = harness::original_eval_env(ckpt.task, 8, horizon);
    const double solve = harness::evaluate(ckpt.net, eval_env, n, horizon);
    std::cout << "task " << grid::to_string(ckpt.task) << " solve_rate " << solve << '\n';

    if (!dump_path.empty()) {
        std::ofstream os(dump_path, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + dump_path);
        grid::EnvConfig cfg = eval_env;
        cfg.seed = 0;
        grid::GridState state = grid::reset(cfg);
        grid::Observation obs = grid::encode_observation(state, cfg.task);
        for (int t = 0; t < horizon; ++t) {
            const auto a = static_cast<grid::Action>(agent::greedy_action(ckpt.net, obs));
            const grid::StepOutcome outcome = grid::step(state, a, cfg);
            grid::append_trajectory_record(os, state.step_count, state, a, outcome);
            if (outcome.task_completed) break;
            obs = outcome.observation;
        }
    }
    return 0;
}

int cmd_hitting_time(const std::string& config, const std::string& task, int runs, int cap,
                     std::uint64_t seed, const std::string& out) {
    const auto spec = load_spec(config, task, "", 0, false);
    const auto result = harness::hitting_time(env_of(spec), runs, cap, seed);
    std::cout << "hitting_time mean " << result.mean << " std " << result.stddev << " censored "
              << result.censored << " of " << runs << '\n';
    if (!out.empty()) {
        std::ofstream os(out, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + out);
        os << "run_id,steps\n";
        for (std::size_t i = 0; i < result.times.size(); ++i)
            os << i << ',' << result.times[i] << '\n';
    }
    return 0;
}

int cmd_entropy(const std::string& config, const std::string& task, long steps,
                const std::string& p_list, int n_seeds, std::uint64_t seed,
                const std::string& out) {
    const auto spec = load_spec(config, task, "", 0, false);
    const auto ps = parse_double_list(p_list);
    std::ostringstream csv;
    csv << "dynamism_p,seed,entropy_nats\n";
    for (double p : ps) {
        grid::EnvConfig cfg = env_of(spec);
        cfg.dynamism_p = p;
        double mean = 0.0;
        for (int s = 0; s < n_seeds; ++s) {
            const double h = harness::marginal_state_entropy(cfg, steps, mix_seed(seed, s));
            csv << p << ',' << s << ',' << h << '\n';
            mean += h;
        }
        std::cout << "p=" << p << " mean entropy " << mean / n_seeds << " nats\n";
    }
    if (!out.empty()) {
        std::ofstream os(out, std::ios::trunc);
        os << csv.str();
        if (!os) throw std::runtime_error("cannot write " + out);
    }
    return 0;
}

int cmd_heatmap(const std::string& config, const std::string& task, long steps, std::uint64_t seed,
                const std::string& out) {
    const auto spec = load_spec(config, task, "", 0, false);
    grid::EnvConfig cfg = env_of(spec);
    cfg.episodic = false;
    cfg.seed = mix_seed(seed, 0x6ea7ULL);

    auto rng = make_rng(seed, 0x6ea8ULL);
    std::uniform_int_distribution<int> actions(0, grid::kNumActions - 1);
    grid::GridState state = grid::reset(cfg);
    std::vector<grid::Pos> trajectory;
    trajectory.reserve(steps);
    for (long t = 0; t < steps; ++t) {
        grid::step(state, static_cast<grid::Action>(actions(rng)), cfg);
        trajectory.push_back(state.agent);
    }
    const auto heat = harness::visitation_heatmap(trajectory, cfg.grid_size);
    harness::write_heatmap_csv(out, heat);
    std::cout << "wrote " << out << " (" << heat.total() << " steps)\n";
    return 0;
}

int cmd_theory_verify(int trials, int states, int max_actions, std::uint64_t seed,
                      const std::string& out) {
    const auto rows = mdp::run_dynamism_fuzz(trials, states, max_actions, seed);
    int failures = 0;
    std::ofstream os;
    if (!out.empty()) {
        os.open(out, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + out);
        os << "trial_id,n_states,epsilon_mass,linf_before,linf_after,pass\n";
    }
    for (const auto& r : rows) {
        if (!r.pass) ++failures;
        if (os.is_open())
            os << r.trial_id << ',' << r.n_states << ',' << r.epsilon_mass << ',' << r.linf_before
               << ',' << r.linf_after << ',' << (r.pass ? "true" : "false") << '\n';
    }
    std::cout << "theory verify: " << trials << " trials, " << failures << " violations\n";
    return failures == 0 ? 0 : 1;
}

int cmd_sweep(const std::string& config, const std::string& param, const std::string& values,
              const std::string& out, std::uint64_t seed, bool seed_given, bool overwrite,
              int parallelism) {
    auto base = load_spec(config, "", out, seed, seed_given);
    if (parallelism > 0) base.parallelism = parallelism;
    const auto spec = experiment::expand_sweep(base, param, parse_double_list(values));
    return experiment::run_experiment(spec, overwrite, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reset-free gridworld RL laboratory"};
    app.require_subcommand(1);

    std::string config, out, task, checkpoint, dump, param, values, p_list = "0,0.01,0.05,0.1,0.5";
    std::uint64_t seed = 0;
    bool overwrite = false;
    int parallelism = 0, runs = 200, cap = 10000, n = 100, horizon = 100, n_seeds = 10;
    int trials = 1000, states = 4, max_actions = 3;
    long steps = 100000;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config, "JSON config file");
        cmd->add_option("--out", out, "output path / directory");
        cmd->add_option("--seed", seed, "base seed");
    };

    auto* train = app.add_subcommand("train", "run an experiment spec");
    add_common(train);
    train->add_flag("--overwrite", overwrite, "replace an existing experiment directory");
    train->add_option("--parallelism", parallelism, "concurrent runs");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the validation set");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--n", n, "validation environments");
    eval->add_option("--horizon", horizon, "evaluation horizon");
    eval->add_option("--dump-trajectory", dump, "write a greedy trajectory (jsonl)");

    auto* hit = app.add_subcommand("hitting-time", "uniform-policy first-reward hitting time");
    add_common(hit);
    hit->add_option("--task", task, "task name (alternative to --config)");
    hit->add_option("--runs", runs, "number of lifetimes");
    hit->add_option("--cap", cap, "censoring cap in steps");

    auto* ent = app.add_subcommand("entropy", "marginal state entropy over a dynamism grid");
    add_common(ent);
    ent->add_option("--task", task, "task name (alternative to --config)");
    ent->add_option("--steps", steps, "lifetime length");
    ent->add_option("--p", p_list, "comma-separated dynamism values");
    ent->add_option("--seeds", n_seeds, "seeds per value");

    auto* heat = app.add_subcommand("heatmap", "uniform-policy visitation heatmap CSV");
    add_common(heat);
    heat->add_option("--task", task, "task name (alternative to --config)");
    heat->add_option("--steps", steps, "lifetime length");

    auto* theory = app.add_subcommand("theory", "theory kit");
    auto* verify = theory->add_subcommand("verify", "fuzz the dynamism theorem, emit CSV");
    add_common(verify);
    verify->add_option("--trials", trials, "fuzz trials");
    verify->add_option("--states", states, "states per kernel");
    verify->add_option("--max-actions", max_actions, "actions drawn uniformly from 1..this");

    auto* sweep = app.add_subcommand("sweep", "expand a parameter grid into variants and train");
    add_common(sweep);
    sweep->add_option("--param", param, "dynamism_p or learning_rate")->required();
    sweep->add_option("--values", values, "comma-separated values")->required();
    sweep->add_flag("--overwrite", overwrite, "replace an existing experiment directory");
    sweep->add_option("--parallelism", parallelism, "concurrent runs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed())
            return cmd_train(config, out, seed, train->count("--seed") > 0, overwrite, parallelism);
        if (eval->parsed()) return cmd_eval(checkpoint, n, horizon, dump);
        if (hit->parsed()) return cmd_hitting_time(config, task, runs, cap, seed, out);
        if (ent->parsed()) return cmd_entropy(config, task, steps, p_list, n_seeds, seed, out);
        if (heat->parsed()) {
            if (out.empty()) throw std::invalid_argument("heatmap: --out is required");
            return cmd_heatmap(config, task, steps, seed, out);
        }
        if (theory->parsed()) {
            if (!verify->parsed()) throw std::invalid_argument("theory: expected 'verify'");
            return cmd_theory_verify(trials, states, max_actions, seed, out);
        }
        if (sweep->parsed())
            return cmd_sweep(config, param, values, out, seed, sweep->count("--seed") > 0,
                             overwrite, parallelism);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
