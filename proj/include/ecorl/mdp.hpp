#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace ecorl::mdp {

/// Row-stochastic transition tensor P[s][a][s'], stored flat.
struct TransitionKernel {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> p;  // size n_states * n_actions * n_states

    double& at(int s, int a, int sp) {
        return p[(static_cast<std::size_t>(s) * n_actions + a) * n_states + sp];
    }
    double at(int s, int a, int sp) const {
        return p[(static_cast<std::size_t>(s) * n_actions + a) * n_states + sp];
    }
    std::span<const double> row(int s, int a) const {
        return {p.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states,
                static_cast<std::size_t>(n_states)};
    }
    std::span<double> row(int s, int a) {
        return {p.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states,
                static_cast<std::size_t>(n_states)};
    }

    static TransitionKernel zeros(int n_states, int n_actions);

    /// Throws std::invalid_argument if any row is not a distribution (1e-12).
    void validate() const;
};

/// Exact finite MDP {S, A, R, P, gamma, rho}.
struct TabularMdp {
    TransitionKernel transition;
    std::vector<double> reward;        // R[s][a], flat n_states * n_actions
    double gamma = 0.9;
    std::vector<double> initial_dist;  // rho[s]

    int n_states() const { return transition.n_states; }
    int n_actions() const { return transition.n_actions; }
    double reward_at(int s, int a) const {
        return reward[static_cast<std::size_t>(s) * n_actions() + a];
    }
    double& reward_at(int s, int a) {
        return reward[static_cast<std::size_t>(s) * n_actions() + a];
    }

    void validate() const;
};

/// Stochastic policy pi[s][a], rows are distributions.
struct PolicyTable {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> probs;

    double at(int s, int a) const {
        return probs[static_cast<std::size_t>(s) * n_actions + a];
    }
    double& at(int s, int a) {
        return probs[static_cast<std::size_t>(s) * n_actions + a];
    }

    static PolicyTable uniform(int n_states, int n_actions);
    /// Point-mass policy: action[s] gets probability 1.
    static PolicyTable deterministic(const std::vector<int>& action, int n_actions);

    void validate() const;
};

/// Discounted state-visitation density d (nonnegative, sums to 1 within 1e-9).
struct VisitationVector {
    std::vector<double> d;
    void validate() const;
};

/// Inputs for the staged-training iteration bound: delta bounds the first
/// environment's mismatch, n bounds the drift between consecutive
/// environments, k is the number of environments in the sequence.
struct ShapingBoundInputs {
    double delta = 1.0;
    double n = 1.0;
    int k = 1;
    double epsilon = 1.0;
    double gamma = 0.9;
    int n_states = 1;
    int n_actions = 1;

    void validate() const;
};

/// Policy-averaged kernel row P_pi(.|s) = sum_a pi(a|s) P(.|s,a).
std::vector<double> policy_row(const TransitionKernel& kernel, const PolicyTable& policy, int s);

/// d = (1-gamma) * sum_t gamma^t (P_pi^T)^t start, computed by solving
/// (I - gamma P_pi^T) x = (1-gamma) start. Throws on residual > 1e-8.
VisitationVector exact_visitation(const TabularMdp& mdp, const PolicyTable& policy,
                                  const std::vector<double>& start);

/// max_s d_star[s] / d_train[s] with 0/0 -> 0 and x/0 -> +infinity.
double mismatch_coefficient(const VisitationVector& d_star, const VisitationVector& d_train);

/// Projected-gradient iteration threshold:
/// 64 gamma |S||A| / ((1-gamma)^5 eps^2) * mismatch^2.
double iteration_bound(double gamma, int n_states, int n_actions, double epsilon,
                       double mismatch);

/// Staged variant of iteration_bound: same prefactor times (delta^2 + k n^2).
double shaping_bound(const ShapingBoundInputs& inp);

/// True when the staged bound beats training directly against the original
/// mismatch: delta^2 + k n^2 <= original_mismatch^2.
bool shaping_beneficial(const ShapingBoundInputs& inp, double original_mismatch);

/// Shannon entropy in nats, with 0 ln 0 = 0.
double row_entropy(std::span<const double> dist);
double row_entropy(const TransitionKernel& kernel, const PolicyTable& policy, int s);

/// True iff for every (s,a) the modified kernel has per-row max no larger,
/// min no smaller, and entropy no smaller than the original (tolerance 1e-12).
bool check_dynamism_assumptions(const TransitionKernel& p, const TransitionKernel& p_tilde);

struct UniformDistance {
    double linf = 0.0;  // max_s |v[s] - 1/m|
    double tv = 0.0;    // 0.5 * sum_s |v[s] - 1/m|
};
UniformDistance distance_to_uniform(std::span<const double> dist);

struct TheoremCase {
    double linf_before = 0.0;
    double linf_after = 0.0;
    bool pass = false;
};
struct TheoremReport {
    std::vector<TheoremCase> cases;
    bool all_pass = true;
};

/// For each start distribution rho, pushes rho one step through the policy
/// kernels of P and P_tilde and checks that the L-inf distance to uniform did
/// not increase (tolerance 1e-12). Throws std::invalid_argument unless
/// check_dynamism_assumptions(p, p_tilde) holds.
TheoremReport verify_dynamism_theorem(const TransitionKernel& p, const TransitionKernel& p_tilde,
                                      const PolicyTable& policy,
                                      const std::vector<std::vector<double>>& start_distributions);

/// Chain of k*H task states plus a goal and a failure sink. In every chain
/// state exactly one action (index s mod n_actions) advances; every other
/// action moves to the absorbing sink, so the goal is reached only by a fully
/// correct action sequence. Reward 1 at the goal, rho = delta_{state 0}.
/// Under the uniform policy the goal mismatch equals n_actions^(k*H) exactly,
/// while each of the k stages taken alone has mismatch n_actions^H.
TabularMdp build_subtask_chain(int k, int subtask_states, int n_actions, double gamma = 0.99);

int subtask_chain_goal(int k, int subtask_states);
PolicyTable subtask_chain_optimal_policy(int k, int subtask_states, int n_actions);

/// One fuzz trial for the dynamism theorem: a random kernel, the two-entry
/// mass move applied to every row, a random deterministic policy and a random
/// point-mass start state.
struct FuzzTrialRow {
    int trial_id = 0;
    int n_states = 0;
    double epsilon_mass = 0.0;  // mass moved on the row the start state exercises
    double linf_before = 0.0;
    double linf_after = 0.0;
    bool pass = false;
};

/// Runs `trials` randomized theorem checks. Every generated pair satisfies
/// check_dynamism_assumptions by construction: per row, mass
/// eps ~ U(0, 0.25 (max - min)) moves from the argmax entry to the argmin
/// entry, which lowers the max, raises the min and raises the entropy.
std::vector<FuzzTrialRow> run_dynamism_fuzz(int trials, int n_states, int max_actions,
                                            std::uint64_t seed);

inline constexpr double kInfiniteMismatch = std::numeric_limits<double>::infinity();

}  // namespace ecorl::mdp
