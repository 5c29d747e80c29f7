#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ecorl::grid {

enum class Task { Hunting, Scavenging, SaladMaking, Factory, FactoryWalls };

enum class ObjectKind : std::uint8_t {
    Empty,
    Wall,
    Axe,
    DeerHard,
    DeerEasy,
    Food,
    Predator,
    Lettuce,
    Carrot,
    Salad,
    Wood,
    Metal,
    WorkerWood,
    WorkerMetal,
};

enum class Action : std::uint8_t { Up, Down, Left, Right, PickUp, Drop };
inline constexpr int kNumActions = 6;

enum class RewardMode { Sparse, Subgoal, Distance, OneTime };

const char* to_string(Task t);
const char* to_string(ObjectKind k);
const char* to_string(Action a);
const char* to_string(RewardMode m);
Task task_from_string(const std::string& name);
RewardMode reward_mode_from_string(const std::string& name);
std::vector<std::string> task_names();
std::vector<std::string> reward_mode_names();

/// Curriculum knobs, all driven by the lifetime step clock. Distances ramp up
/// (resources spawn farther away over time) and worker cooperativeness decays.
struct ShapingSchedule {
    int easy_deer_count = 4;       // Hunting: docile deer added at reset
    int spawn_dist_min = 2;        // Scavenging / SaladMaking
    int spawn_dist_max = 14;
    std::int64_t ramp_steps = 100000;
    double coop_prob_initial = 0.9;  // Factory
    std::int64_t coop_decay_steps = 100000;

    int spawn_dist(std::uint64_t clock) const;
    double coop_prob(std::uint64_t clock) const;
    void validate() const;

    bool operator==(const ShapingSchedule&) const = default;
};

struct EnvConfig {
    Task task = Task::Hunting;
    int grid_size = 8;
    double dynamism_p = 0.0;
    std::optional<ShapingSchedule> shaping;
    RewardMode reward_mode = RewardMode::Sparse;
    bool episodic = false;
    int horizon = 200;
    bool nonepisodic_respawn = true;
    std::uint64_t seed = 0;

    void validate() const;

    bool operator==(const EnvConfig&) const = default;
};

struct Pos {
    int x = 0;
    int y = 0;
    bool operator==(const Pos&) const = default;
};

inline int manhattan(Pos a, Pos b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }
inline int chebyshev(Pos a, Pos b) {
    return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y));
}

/// Factory workers carry an internal restock timer; 0 means the resource is
/// available for pickup.
struct WorkerMeta {
    Pos pos;
    int regen_timer = 0;
    bool operator==(const WorkerMeta&) const = default;
};

struct GridState {
    int width = 8;
    int height = 8;
    std::vector<ObjectKind> cells;  // width * height, row-major
    Pos agent;
    std::optional<ObjectKind> inventory;
    std::uint64_t step_count = 0;
    std::mt19937_64 rng;
    std::uint64_t shaping_clock = 0;
    std::uint32_t one_time_flags = 0;  // bitmask over ObjectKind
    std::vector<WorkerMeta> workers;
    ObjectKind next_growth = ObjectKind::Lettuce;  // SaladMaking alternation

    ObjectKind at(Pos p) const { return cells[static_cast<std::size_t>(p.y) * width + p.x]; }
    void set(Pos p, ObjectKind k) { cells[static_cast<std::size_t>(p.y) * width + p.x] = k; }
    bool in_bounds(Pos p) const { return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height; }
    int count(ObjectKind k) const;

    bool operator==(const GridState&) const = default;
};

struct StepEvents {
    std::vector<ObjectKind> picked;
    std::vector<ObjectKind> dropped;
    std::vector<ObjectKind> combined;  // resulting kind
    int predator_catches = 0;

    bool empty() const {
        return picked.empty() && dropped.empty() && combined.empty() && predator_catches == 0;
    }
};

/// 5x5 egocentric one-hot window plus a one-hot inventory slot.
/// grid_view layout: cell-major (window row, then column), C channels per
/// cell; out-of-bounds cells light the Wall channel. inventory_view has the
/// task's C kind slots followed by the empty slot.
struct Observation {
    std::vector<float> grid_view;      // 25 * C
    std::vector<float> inventory_view;  // C + 1
};

struct StepOutcome {
    Observation observation;
    double reward = 0.0;
    bool task_completed = false;
    StepEvents events;
    int dist_to_next_subgoal = 0;
};

/// Frozen channel ordering per task; index in this list = observation channel.
const std::vector<ObjectKind>& task_channels(Task task);
int channel_count(Task task);
/// Total flattened observation length: 25*C + (C+1).
int observation_size(Task task);

/// Fresh lifetime: seeds the placement stream from config.seed and applies
/// the shaping schedule at clock 0. Deterministic in (config).
GridState reset(const EnvConfig& config);

/// The placement stream reset(config) starts from; a lifetime that resets at
/// episode boundaries keeps drawing from this one stream.
std::mt19937_64 placement_stream(const EnvConfig& config);

/// Episode boundary within a lifetime: placement randomness continues from
/// `rng` and the shaping clock carries over.
GridState reset_with(const EnvConfig& config, std::mt19937_64& rng, std::uint64_t shaping_clock);

/// Advances one step in place: agent phase, world phase, completion
/// detection, reward, and (non-episodic) respawn of consumed task objects.
StepOutcome step(GridState& state, Action action, const EnvConfig& config);

Observation encode_observation(const GridState& state, Task task);

/// Reward for one step's events under the given mode. OneTime first-pickup
/// bonuses consume bits in one_time_flags.
double compute_reward(const StepEvents& events, bool completed, int dist_to_next_subgoal,
                      RewardMode mode, std::uint32_t& one_time_flags);

int dist_to_next_subgoal(const GridState& state, Task task);

/// Flood fill from the agent; true when every non-wall cell is reachable.
bool fully_connected(const GridState& state);

/// One line-delimited trajectory record (step, agent_pos, action, reward,
/// events, inventory).
void append_trajectory_record(std::ostream& os, std::uint64_t step, const GridState& state,
                              Action action, const StepOutcome& outcome);

}  // namespace ecorl::grid
