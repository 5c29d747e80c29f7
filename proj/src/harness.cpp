#include "ecorl/harness.hpp"

#include "ecorl/rand.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace ecorl::harness {

grid::EnvConfig original_eval_env(grid::Task task, int grid_size, int horizon) {
    grid::EnvConfig cfg;
    cfg.task = task;
    cfg.grid_size = grid_size;
    cfg.dynamism_p = 0.0;
    cfg.shaping.reset();
    cfg.reward_mode = grid::RewardMode::Sparse;
    cfg.episodic = true;
    cfg.horizon = horizon;
    return cfg;
}

RunConfig RunConfig::defaults(const grid::EnvConfig& env) {
    RunConfig cfg;
    cfg.env = env;
    cfg.eval_env = original_eval_env(env.task, env.grid_size, cfg.eval_horizon);
    return cfg;
}

void RunConfig::validate() const {
    env.validate();
    eval_env.validate();
    if (eval_env.task != env.task || eval_env.grid_size != env.grid_size)
        throw std::invalid_argument("RunConfig: eval_env must be the training task");
    if (eval_env.shaping || eval_env.dynamism_p != 0.0 || !eval_env.episodic)
        throw std::invalid_argument(
            "RunConfig: eval_env must be the original task (no shaping, dynamism_p=0, episodic)");
    if (epochs < 1) throw std::invalid_argument("RunConfig: epochs < 1");
    if (steps_per_collect < 1 || grad_steps_per_collect < 0 || epoch_steps < 1)
        throw std::invalid_argument("RunConfig: bad collect/gradient cadence");
    if (epoch_steps % steps_per_collect != 0)
        throw std::invalid_argument("RunConfig: epoch_steps must be a multiple of steps_per_collect");
    if (n_validation < 1 || eval_horizon < 1)
        throw std::invalid_argument("RunConfig: bad evaluation settings");
    if (seeds.empty()) throw std::invalid_argument("RunConfig: seeds empty");
    if (learning_rate <= 0.0) throw std::invalid_argument("RunConfig: learning_rate <= 0");
    if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("RunConfig: gamma not in [0,1)");
    if (batch_size < 1 || buffer_capacity < static_cast<std::uint64_t>(batch_size))
        throw std::invalid_argument("RunConfig: bad replay settings");
}

long Heatmap::total() const { return std::accumulate(counts.begin(), counts.end(), 0L); }

double RunArtifacts::final_solve_mean() const {
    return epochs.empty() ? 0.0 : epochs.back().solve_rate_mean;
}

double evaluate(const agent::QNetwork<float>& net, const grid::EnvConfig& eval_env,
                int n_validation, int eval_horizon) {
    int solved = 0;
    for (int v = 0; v < n_validation; ++v) {
        grid::EnvConfig cfg = eval_env;
        cfg.seed = static_cast<std::uint64_t>(v);  // frozen validation set
        grid::GridState state = grid::reset(cfg);
        grid::Observation obs = grid::encode_observation(state, cfg.task);
        for (int t = 0; t < eval_horizon; ++t) {
            const int a = agent::greedy_action(net, obs);
            const grid::StepOutcome out = grid::step(state, static_cast<grid::Action>(a), cfg);
            if (out.task_completed) {
                ++solved;
                break;
            }
            obs = out.observation;
        }
    }
    return static_cast<double>(solved) / static_cast<double>(n_validation);
}

SeedResult train_single_seed(const RunConfig& cfg, std::uint64_t run_seed) {
    cfg.validate();

    grid::EnvConfig env_cfg = cfg.env;
    env_cfg.seed = mix_seed(run_seed, 1);
    auto init_rng = make_rng(run_seed, 2);
    auto expl_rng = make_rng(run_seed, 3);
    auto replay_rng = make_rng(run_seed, 4);
    auto rnd_rng = make_rng(run_seed, 5);

    const auto dims = agent::NetworkDims::for_task(env_cfg.task);
    agent::QNetwork<float> online = agent::QNetwork<float>::he_init(dims, init_rng);
    agent::QNetwork<float> target = online;
    auto opt = agent::AdamState<float>::make(dims, static_cast<float>(cfg.learning_rate));
    agent::ReplayBuffer replay(dims.grid_in, dims.inv_in, cfg.buffer_capacity);

    agent::NetworkDims rnd_dims = dims;
    rnd_dims.n_out = 32;
    std::optional<agent::RndPair<float>> rnd;
    if (cfg.rnd_enabled)
        rnd = agent::RndPair<float>::make(rnd_dims, static_cast<float>(cfg.learning_rate),
                                          static_cast<float>(cfg.rnd_bonus_scale), rnd_rng);

    SeedResult result;
    result.seed = run_seed;

    auto place_rng = grid::placement_stream(env_cfg);
    grid::GridState state = grid::reset_with(env_cfg, place_rng, 0);
    result.reset_count = 1;
    grid::Observation obs = grid::encode_observation(state, env_cfg.task);
    int episode_steps = 0;

    const int blocks = cfg.epoch_steps / cfg.steps_per_collect;
    const float gamma = static_cast<float>(cfg.gamma);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double reward_sum = 0.0;
        double loss_sum = 0.0;
        long loss_count = 0;
        Heatmap heat;
        heat.size = env_cfg.grid_size;
        heat.counts.assign(static_cast<std::size_t>(heat.size) * heat.size, 0);

        for (int block = 0; block < blocks; ++block) {
            for (int i = 0; i < cfg.steps_per_collect; ++i) {
                const int a = agent::act(online, obs, result.env_steps, expl_rng);
                const grid::StepOutcome out =
                    grid::step(state, static_cast<grid::Action>(a), env_cfg);
                ++result.env_steps;
                ++episode_steps;
                reward_sum += out.reward;
                result.drop_events += out.events.dropped.size();
                if (out.task_completed) ++result.completions;
                ++heat.at(state.agent.x, state.agent.y);

                float stored_reward = static_cast<float>(out.reward);
                if (rnd) stored_reward += agent::rnd_bonus(*rnd, out.observation);

                const bool boundary =
                    env_cfg.episodic &&
                    (out.task_completed || episode_steps >= env_cfg.horizon);
                replay.push(obs, a, stored_reward, out.observation, boundary);

                if (boundary) {
                    if (out.task_completed)
                        ++result.completion_resets;
                    else
                        ++result.horizon_resets;
                    state = grid::reset_with(env_cfg, place_rng, state.shaping_clock);
                    ++result.reset_count;
                    episode_steps = 0;
                    obs = grid::encode_observation(state, env_cfg.task);
                } else {
                    obs = out.observation;
                }
            }
            for (int g = 0; g < cfg.grad_steps_per_collect; ++g) {
                const auto batch = replay.sample<float>(cfg.batch_size, replay_rng);
                loss_sum += agent::double_dqn_update(online, target, opt, batch, gamma);
                ++loss_count;
                ++result.grad_steps;
                agent::sync_target(online, target, result.grad_steps, cfg.target_sync_every);
                if (rnd) agent::rnd_train_step(*rnd, batch.grid_n, batch.inv_n);
            }
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.env_steps = result.env_steps;
        rec.solve_rate = evaluate(online, cfg.eval_env, cfg.n_validation, cfg.eval_horizon);
        rec.train_reward_rate = reward_sum / static_cast<double>(cfg.epoch_steps);
        rec.epsilon = agent::epsilon_schedule(result.env_steps);
        rec.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
        result.epochs.push_back(rec);
        result.heatmaps.push_back(std::move(heat));
    }

    result.final_net = std::move(online);
    return result;
}

RunArtifacts run_training(const RunConfig& cfg, int parallelism) {
    cfg.validate();
    RunArtifacts artifacts;
    artifacts.per_seed.resize(cfg.seeds.size());

    if (parallelism <= 1 || cfg.seeds.size() == 1) {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
            artifacts.per_seed[i] = train_single_seed(cfg, cfg.seeds[i]);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= cfg.seeds.size()) return;
                artifacts.per_seed[i] = train_single_seed(cfg, cfg.seeds[i]);
            }
        };
        std::vector<std::thread> pool;
        const int n = std::min<int>(parallelism, static_cast<int>(cfg.seeds.size()));
        for (int i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    const std::size_t n_seeds = artifacts.per_seed.size();
    artifacts.epochs.resize(cfg.epochs);
    for (int e = 0; e < cfg.epochs; ++e) {
        EpochAggregate agg;
        agg.epoch = e + 1;
        agg.env_steps = artifacts.per_seed[0].epochs[e].env_steps;
        double mean = 0.0, reward = 0.0, loss = 0.0, eps = 0.0;
        for (const auto& s : artifacts.per_seed) {
            mean += s.epochs[e].solve_rate;
            reward += s.epochs[e].train_reward_rate;
            loss += s.epochs[e].loss;
            eps += s.epochs[e].epsilon;
        }
        mean /= static_cast<double>(n_seeds);
        double var = 0.0;
        for (const auto& s : artifacts.per_seed) {
            const double d = s.epochs[e].solve_rate - mean;
            var += d * d;
        }
        agg.solve_rate_mean = mean;
        agg.solve_rate_std = std::sqrt(var / static_cast<double>(n_seeds));
        agg.train_reward_rate = reward / static_cast<double>(n_seeds);
        agg.loss = loss / static_cast<double>(n_seeds);
        agg.epsilon = eps / static_cast<double>(n_seeds);
        artifacts.epochs[e] = agg;
    }
    return artifacts;
}

HittingTimeResult hitting_time(const grid::EnvConfig& env, int n_runs, int cap,
                               std::uint64_t seed) {
    if (n_runs < 1) throw std::invalid_argument("hitting_time: n_runs must be >= 1");
    grid::EnvConfig cfg = env;
    cfg.episodic = false;  // one lifetime per run

    HittingTimeResult result;
    auto action_rng = make_rng(seed, 0xac7101ULL);
    std::uniform_int_distribution<int> actions(0, grid::kNumActions - 1);

    for (int run = 0; run < n_runs; ++run) {
        cfg.seed = mix_seed(seed, 0x1000 + static_cast<std::uint64_t>(run));
        grid::GridState state = grid::reset(cfg);
        bool hit = false;
        for (int t = 1; t <= cap; ++t) {
            const auto a = static_cast<grid::Action>(actions(action_rng));
            const grid::StepOutcome out = grid::step(state, a, cfg);
            if (out.task_completed) {
                result.times.push_back(t);
                hit = true;
                break;
            }
        }
        if (!hit) ++result.censored;
    }

    const auto n = static_cast<double>(result.times.size());
    if (n > 0) {
        double sum = 0.0;
        for (int t : result.times) sum += t;
        result.mean = sum / n;
        if (n > 1) {
            double var = 0.0;
            for (int t : result.times) {
                const double d = t - result.mean;
                var += d * d;
            }
            result.stddev = std::sqrt(var / (n - 1.0));
        }
    }
    return result;
}

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_world(const grid::GridState& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const std::int32_t agent[2] = {s.agent.x, s.agent.y};
    h = fnv1a(h, agent, sizeof(agent));
    h = fnv1a(h, s.cells.data(), s.cells.size() * sizeof(grid::ObjectKind));
    const std::uint8_t inv =
        s.inventory ? static_cast<std::uint8_t>(*s.inventory) : std::uint8_t{255};
    h = fnv1a(h, &inv, 1);
    for (const auto& w : s.workers) {
        const std::uint8_t stocked = w.regen_timer == 0 ? 1 : 0;
        h = fnv1a(h, &stocked, 1);
    }
    return h;
}

}  // namespace

double marginal_state_entropy(const grid::EnvConfig& env, long steps, std::uint64_t seed,
                              const SteppingPolicy& policy) {
    if (steps < 1) throw std::invalid_argument("marginal_state_entropy: steps must be >= 1");
    grid::EnvConfig cfg = env;
    cfg.episodic = false;
    cfg.seed = mix_seed(seed, 0xe47e0ULL);

    auto action_rng = make_rng(seed, 0xe47e1ULL);
    std::uniform_int_distribution<int> uniform_action(0, grid::kNumActions - 1);

    grid::GridState state = grid::reset(cfg);
    std::unordered_map<std::uint64_t, long> counts;
    counts.reserve(1 << 14);
    for (long t = 0; t < steps; ++t) {
        const grid::Action a = policy ? policy(state, action_rng)
                                      : static_cast<grid::Action>(uniform_action(action_rng));
        grid::step(state, a, cfg);
        ++counts[hash_world(state)];
    }

    double h = 0.0;
    const double total = static_cast<double>(steps);
    for (const auto& [_, c] : counts) {
        const double p = static_cast<double>(c) / total;
        h -= p * std::log(p);
    }
    return h;
}

Heatmap visitation_heatmap(const std::vector<grid::Pos>& trajectory, int grid_size) {
    if (grid_size < 1) throw std::invalid_argument("visitation_heatmap: bad grid size");
    Heatmap h;
    h.size = grid_size;
    h.counts.assign(static_cast<std::size_t>(grid_size) * grid_size, 0);
    for (const auto& p : trajectory) {
        if (p.x < 0 || p.y < 0 || p.x >= grid_size || p.y >= grid_size)
            throw std::invalid_argument("visitation_heatmap: position out of bounds");
        ++h.at(p.x, p.y);
    }
    return h;
}

void write_heatmap_csv(const std::string& path, const Heatmap& h) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    for (int y = 0; y < h.size; ++y) {
        for (int x = 0; x < h.size; ++x) {
            if (x) os << ',';
            os << h.at(x, y);
        }
        os << '\n';
    }
}

void write_metrics_jsonl(const std::string& path, const SeedResult& result) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    for (const auto& rec : result.epochs) {
        nlohmann::json line;
        line["schema"] = 1;
        line["epoch"] = rec.epoch;
        line["env_steps"] = rec.env_steps;
        line["solve_rate"] = rec.solve_rate;
        line["train_reward_rate"] = rec.train_reward_rate;
        line["epsilon"] = rec.epsilon;
        line["loss"] = rec.loss;
        os << line.dump() << '\n';
    }
}

}  // namespace ecorl::harness
