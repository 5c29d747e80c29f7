#pragma once

#include "ecorl/agent.hpp"
#include "ecorl/grid.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ecorl::harness {

/// Evaluation always happens on the original task: no shaping, no dynamism,
/// episodic, sparse reward.
grid::EnvConfig original_eval_env(grid::Task task, int grid_size, int horizon);

struct RunConfig {
    grid::EnvConfig env;
    grid::EnvConfig eval_env;
    int epochs = 40;
    int steps_per_collect = 500;
    int grad_steps_per_collect = 500;
    int epoch_steps = 5000;
    int n_validation = 100;
    int eval_horizon = 100;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    bool rnd_enabled = false;
    double learning_rate = 3e-4;
    double gamma = 0.99;
    int batch_size = 256;
    std::uint64_t buffer_capacity = 500000;
    long target_sync_every = 1000;
    double rnd_bonus_scale = 0.1;

    static RunConfig defaults(const grid::EnvConfig& env);

    /// Throws unless eval_env is the pristine original task (no shaping,
    /// dynamism_p = 0, episodic) and the cadence fields are consistent.
    void validate() const;

    bool operator==(const RunConfig&) const = default;
};

struct EpochRecord {
    int epoch = 0;                  // 1-based
    std::uint64_t env_steps = 0;    // cumulative for this seed
    double solve_rate = 0.0;
    double train_reward_rate = 0.0; // env reward per step this epoch, bonus excluded
    double epsilon = 0.0;
    double loss = 0.0;
};

struct Heatmap {
    int size = 0;
    std::vector<long> counts;  // size*size, row-major

    long& at(int x, int y) { return counts[static_cast<std::size_t>(y) * size + x]; }
    long at(int x, int y) const { return counts[static_cast<std::size_t>(y) * size + x]; }
    long total() const;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
    std::vector<Heatmap> heatmaps;  // one per epoch, training visitation
    std::uint64_t reset_count = 0;  // includes the initial reset
    std::uint64_t horizon_resets = 0;
    std::uint64_t completion_resets = 0;
    std::uint64_t completions = 0;
    std::uint64_t drop_events = 0;  // DroppedResource count over training
    std::uint64_t env_steps = 0;
    std::uint64_t grad_steps = 0;
    agent::QNetwork<float> final_net;
};

struct EpochAggregate {
    int epoch = 0;
    std::uint64_t env_steps = 0;
    double solve_rate_mean = 0.0;
    double solve_rate_std = 0.0;  // population std across seeds
    double train_reward_rate = 0.0;
    double epsilon = 0.0;
    double loss = 0.0;
};

struct RunArtifacts {
    std::vector<SeedResult> per_seed;
    std::vector<EpochAggregate> epochs;

    double final_solve_mean() const;
};

/// One training lifetime for one seed: alternating collect/gradient phases,
/// one reset total in non-episodic mode, per-epoch evaluation on the frozen
/// validation environments.
SeedResult train_single_seed(const RunConfig& cfg, std::uint64_t run_seed);

/// All seeds in cfg.seeds, optionally in parallel; aggregation is ordered by
/// seed index, independent of scheduling.
RunArtifacts run_training(const RunConfig& cfg, int parallelism = 1);

/// Greedy solve rate over the frozen validation set (env seeds 0..n-1).
double evaluate(const agent::QNetwork<float>& net, const grid::EnvConfig& eval_env,
                int n_validation, int eval_horizon);

struct HittingTimeResult {
    double mean = 0.0;
    double stddev = 0.0;  // sample std over uncensored runs
    int censored = 0;
    std::vector<int> times;  // uncensored first-reward step counts
};

/// Steps a uniform random policy takes in a fresh non-episodic lifetime until
/// the first completion; the first step that yields the reward counts as 1.
/// Runs that reach `cap` steps are censored and excluded from mean/std.
HittingTimeResult hitting_time(const grid::EnvConfig& env, int n_runs, int cap = 10000,
                               std::uint64_t seed = 0);

using SteppingPolicy =
    std::function<grid::Action(const grid::GridState&, std::mt19937_64&)>;

/// Shannon entropy (nats) of the empirical distribution of full world
/// configurations (agent, cells, inventory, worker stock) over one
/// non-episodic lifetime of T steps. Default policy: uniform random.
double marginal_state_entropy(const grid::EnvConfig& env, long steps, std::uint64_t seed,
                              const SteppingPolicy& policy = {});

Heatmap visitation_heatmap(const std::vector<grid::Pos>& trajectory, int grid_size);

void write_heatmap_csv(const std::string& path, const Heatmap& h);
/// One line-delimited record per epoch, schema-versioned.
void write_metrics_jsonl(const std::string& path, const SeedResult& result);

}  // namespace ecorl::harness
