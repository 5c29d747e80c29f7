#include "ecorl/mdp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ecorl::mdp {

namespace {

constexpr double kRowTol = 1e-12;

void check_distribution(std::span<const double> v, double tol, const char* what) {
    double sum = 0.0;
    for (double x : v) {
        if (x < -tol) throw std::invalid_argument(std::string(what) + ": negative entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > tol)
        throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
}

}  // namespace

TransitionKernel TransitionKernel::zeros(int n_states, int n_actions) {
    TransitionKernel k;
    k.n_states = n_states;
    k.n_actions = n_actions;
    k.p.assign(static_cast<std::size_t>(n_states) * n_actions * n_states, 0.0);
    return k;
}

void TransitionKernel::validate() const {
    if (n_states <= 0 || n_actions <= 0)
        throw std::invalid_argument("TransitionKernel: nonpositive dimensions");
    if (p.size() != static_cast<std::size_t>(n_states) * n_actions * n_states)
        throw std::invalid_argument("TransitionKernel: storage size mismatch");
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) check_distribution(row(s, a), kRowTol, "P[s][a]");
}

void TabularMdp::validate() const {
    transition.validate();
    if (reward.size() != static_cast<std::size_t>(n_states()) * n_actions())
        throw std::invalid_argument("TabularMdp: reward size mismatch");
    if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("TabularMdp: gamma not in [0,1)");
    if (initial_dist.size() != static_cast<std::size_t>(n_states()))
        throw std::invalid_argument("TabularMdp: initial_dist size mismatch");
    check_distribution(initial_dist, kRowTol, "rho");
}

PolicyTable PolicyTable::uniform(int n_states, int n_actions) {
    PolicyTable pi;
    pi.n_states = n_states;
    pi.n_actions = n_actions;
    pi.probs.assign(static_cast<std::size_t>(n_states) * n_actions, 1.0 / n_actions);
    return pi;
}

PolicyTable PolicyTable::deterministic(const std::vector<int>& action, int n_actions) {
    PolicyTable pi;
    pi.n_states = static_cast<int>(action.size());
    pi.n_actions = n_actions;
    pi.probs.assign(static_cast<std::size_t>(pi.n_states) * n_actions, 0.0);
    for (int s = 0; s < pi.n_states; ++s) pi.at(s, action[s]) = 1.0;
    return pi;
}

void PolicyTable::validate() const {
    if (n_states <= 0 || n_actions <= 0)
        throw std::invalid_argument("PolicyTable: nonpositive dimensions");
    if (probs.size() != static_cast<std::size_t>(n_states) * n_actions)
        throw std::invalid_argument("PolicyTable: storage size mismatch");
    for (int s = 0; s < n_states; ++s)
        check_distribution({probs.data() + static_cast<std::size_t>(s) * n_actions,
                            static_cast<std::size_t>(n_actions)},
                           kRowTol, "pi[s]");
}

void VisitationVector::validate() const {
    double sum = 0.0;
    for (double x : d) {
        if (x < 0.0) throw std::invalid_argument("VisitationVector: negative entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("VisitationVector: does not sum to 1");
}

void ShapingBoundInputs::validate() const {
    if (delta < 1.0) throw std::invalid_argument("ShapingBoundInputs: delta < 1");
    if (n < 1.0) throw std::invalid_argument("ShapingBoundInputs: n < 1");
    if (k < 1) throw std::invalid_argument("ShapingBoundInputs: k < 1");
    if (epsilon <= 0.0) throw std::invalid_argument("ShapingBoundInputs: epsilon <= 0");
    if (gamma < 0.0 || gamma >= 1.0)
        throw std::invalid_argument("ShapingBoundInputs: gamma not in [0,1)");
    if (n_states < 1 || n_actions < 1)
        throw std::invalid_argument("ShapingBoundInputs: nonpositive state/action counts");
}

std::vector<double> policy_row(const TransitionKernel& kernel, const PolicyTable& policy, int s) {
    std::vector<double> out(kernel.n_states, 0.0);
    for (int a = 0; a < kernel.n_actions; ++a) {
        const double w = policy.at(s, a);
        if (w == 0.0) continue;
        auto row = kernel.row(s, a);
        for (int sp = 0; sp < kernel.n_states; ++sp) out[sp] += w * row[sp];
    }
    return out;
}

VisitationVector exact_visitation(const TabularMdp& mdp, const PolicyTable& policy,
                                  const std::vector<double>& start) {
    mdp.validate();
    policy.validate();
    if (policy.n_states != mdp.n_states() || policy.n_actions != mdp.n_actions())
        throw std::invalid_argument("exact_visitation: policy shape mismatch");
    if (start.size() != static_cast<std::size_t>(mdp.n_states()))
        throw std::invalid_argument("exact_visitation: start size mismatch");
    check_distribution(start, kRowTol, "start");

    const int n = mdp.n_states();
    Eigen::MatrixXd p_pi(n, n);  // p_pi(s, s')
    for (int s = 0; s < n; ++s) {
        auto row = policy_row(mdp.transition, policy, s);
        for (int sp = 0; sp < n; ++sp) p_pi(s, sp) = row[sp];
    }

    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - mdp.gamma * p_pi.transpose();
    Eigen::VectorXd b(n);
    for (int s = 0; s < n; ++s) b(s) = (1.0 - mdp.gamma) * start[s];

    Eigen::VectorXd x = system.partialPivLu().solve(b);
    const double residual = (system * x - b).lpNorm<Eigen::Infinity>();
    if (residual > 1e-8)
        throw std::runtime_error("exact_visitation: linear solve residual " +
                                 std::to_string(residual));

    VisitationVector out;
    out.d.resize(n);
    for (int s = 0; s < n; ++s) out.d[s] = std::max(x(s), 0.0);  // scrub solver noise
    out.validate();
    return out;
}

double mismatch_coefficient(const VisitationVector& d_star, const VisitationVector& d_train) {
    if (d_star.d.size() != d_train.d.size())
        throw std::invalid_argument("mismatch_coefficient: length mismatch");
    double worst = 0.0;
    for (std::size_t s = 0; s < d_star.d.size(); ++s) {
        const double num = d_star.d[s];
        const double den = d_train.d[s];
        double ratio;
        if (den > 0.0)
            ratio = num / den;
        else
            ratio = (num > 0.0) ? kInfiniteMismatch : 0.0;
        worst = std::max(worst, ratio);
    }
    return worst;
}

double iteration_bound(double gamma, int n_states, int n_actions, double epsilon,
                       double mismatch) {
    if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("iteration_bound: bad gamma");
    if (epsilon <= 0.0) throw std::invalid_argument("iteration_bound: bad epsilon");
    if (mismatch < 1.0) throw std::invalid_argument("iteration_bound: mismatch < 1");
    if (std::isinf(mismatch)) return kInfiniteMismatch;
    const double one_minus = 1.0 - gamma;
    const double prefactor = 64.0 * gamma * n_states * n_actions /
                             (std::pow(one_minus, 5) * epsilon * epsilon);
    return prefactor * mismatch * mismatch;
}

double shaping_bound(const ShapingBoundInputs& inp) {
    inp.validate();
    const double prefactor = 64.0 * inp.gamma * inp.n_states * inp.n_actions /
                             (std::pow(1.0 - inp.gamma, 5) * inp.epsilon * inp.epsilon);
    return prefactor * (inp.delta * inp.delta + inp.k * inp.n * inp.n);
}

bool shaping_beneficial(const ShapingBoundInputs& inp, double original_mismatch) {
    inp.validate();
    if (std::isinf(original_mismatch)) return true;
    return inp.delta * inp.delta + inp.k * inp.n * inp.n <=
           original_mismatch * original_mismatch;
}

double row_entropy(std::span<const double> dist) {
    double h = 0.0;
    for (double x : dist)
        if (x > 0.0) h -= x * std::log(x);
    return h;
}

double row_entropy(const TransitionKernel& kernel, const PolicyTable& policy, int s) {
    auto row = policy_row(kernel, policy, s);
    return row_entropy(row);
}

bool check_dynamism_assumptions(const TransitionKernel& p, const TransitionKernel& p_tilde) {
    if (p.n_states != p_tilde.n_states || p.n_actions != p_tilde.n_actions)
        throw std::invalid_argument("check_dynamism_assumptions: shape mismatch");
    p.validate();
    p_tilde.validate();
    for (int s = 0; s < p.n_states; ++s) {
        for (int a = 0; a < p.n_actions; ++a) {
            auto before = p.row(s, a);
            auto after = p_tilde.row(s, a);
            const auto [mn_b, mx_b] = std::minmax_element(before.begin(), before.end());
            const auto [mn_a, mx_a] = std::minmax_element(after.begin(), after.end());
            if (*mx_a > *mx_b + kRowTol) return false;
            if (*mn_a < *mn_b - kRowTol) return false;
            if (row_entropy(after) < row_entropy(before) - kRowTol) return false;
        }
    }
    return true;
}

UniformDistance distance_to_uniform(std::span<const double> dist) {
    const double mu = 1.0 / static_cast<double>(dist.size());
    UniformDistance out;
    double l1 = 0.0;
    for (double x : dist) {
        const double dev = std::abs(x - mu);
        out.linf = std::max(out.linf, dev);
        l1 += dev;
    }
    out.tv = 0.5 * l1;
    return out;
}

namespace {

std::vector<double> push_forward(const TransitionKernel& kernel, const PolicyTable& policy,
                                 const std::vector<double>& rho) {
    std::vector<double> out(kernel.n_states, 0.0);
    for (int s = 0; s < kernel.n_states; ++s) {
        if (rho[s] == 0.0) continue;
        auto row = policy_row(kernel, policy, s);
        for (int sp = 0; sp < kernel.n_states; ++sp) out[sp] += rho[s] * row[sp];
    }
    return out;
}

}  // namespace

TheoremReport verify_dynamism_theorem(const TransitionKernel& p, const TransitionKernel& p_tilde,
                                      const PolicyTable& policy,
                                      const std::vector<std::vector<double>>& start_distributions) {
    if (!check_dynamism_assumptions(p, p_tilde))
        throw std::invalid_argument(
            "verify_dynamism_theorem: inputs do not satisfy the dynamism assumptions");
    policy.validate();
    if (policy.n_states != p.n_states || policy.n_actions != p.n_actions)
        throw std::invalid_argument("verify_dynamism_theorem: policy shape mismatch");

    TheoremReport report;
    report.cases.reserve(start_distributions.size());
    for (const auto& rho : start_distributions) {
        if (rho.size() != static_cast<std::size_t>(p.n_states))
            throw std::invalid_argument("verify_dynamism_theorem: start length mismatch");
        check_distribution(rho, kRowTol, "start");
        const auto before = push_forward(p, policy, rho);
        const auto after = push_forward(p_tilde, policy, rho);
        TheoremCase c;
        c.linf_before = distance_to_uniform(before).linf;
        c.linf_after = distance_to_uniform(after).linf;
        c.pass = c.linf_after <= c.linf_before + kRowTol;
        report.all_pass = report.all_pass && c.pass;
        report.cases.push_back(c);
    }
    return report;
}

TabularMdp build_subtask_chain(int k, int subtask_states, int n_actions, double gamma) {
    if (k < 1 || subtask_states < 0 || n_actions < 2)
        throw std::invalid_argument("build_subtask_chain: require k >= 1, H >= 0, |A| >= 2");
    const int chain = k * subtask_states;
    const int goal = chain;
    const int sink = chain + 1;
    const int n = chain + 2;

    TabularMdp mdp;
    mdp.transition = TransitionKernel::zeros(n, n_actions);
    mdp.reward.assign(static_cast<std::size_t>(n) * n_actions, 0.0);
    mdp.gamma = gamma;
    mdp.initial_dist.assign(n, 0.0);
    mdp.initial_dist[0] = 1.0;

    for (int s = 0; s < chain; ++s) {
        const int advance = s % n_actions;
        for (int a = 0; a < n_actions; ++a)
            mdp.transition.at(s, a, a == advance ? s + 1 : sink) = 1.0;
    }
    for (int a = 0; a < n_actions; ++a) {
        mdp.transition.at(goal, a, goal) = 1.0;
        mdp.transition.at(sink, a, sink) = 1.0;
        mdp.reward_at(goal, a) = 1.0;
    }
    return mdp;
}

int subtask_chain_goal(int k, int subtask_states) { return k * subtask_states; }

PolicyTable subtask_chain_optimal_policy(int k, int subtask_states, int n_actions) {
    const int n = k * subtask_states + 2;
    std::vector<int> action(n, 0);
    for (int s = 0; s < k * subtask_states; ++s) action[s] = s % n_actions;
    return PolicyTable::deterministic(action, n_actions);
}

std::vector<FuzzTrialRow> run_dynamism_fuzz(int trials, int n_states, int max_actions,
                                            std::uint64_t seed) {
    if (trials < 1 || n_states < 2 || max_actions < 1)
        throw std::invalid_argument("run_dynamism_fuzz: bad arguments");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);

    std::vector<FuzzTrialRow> rows;
    rows.reserve(trials);
    for (int t = 0; t < trials; ++t) {
        const int n_actions = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_actions));
        TransitionKernel p = TransitionKernel::zeros(n_states, n_actions);
        TransitionKernel pt = TransitionKernel::zeros(n_states, n_actions);
        std::vector<double> eps_used(static_cast<std::size_t>(n_states) * n_actions, 0.0);

        for (int s = 0; s < n_states; ++s) {
            for (int a = 0; a < n_actions; ++a) {
                auto row = p.row(s, a);
                double sum = 0.0;
                for (int sp = 0; sp < n_states; ++sp) sum += (row[sp] = expo(rng));  // Dirichlet(1)
                for (int sp = 0; sp < n_states; ++sp) row[sp] /= sum;

                auto modified = pt.row(s, a);
                std::copy(row.begin(), row.end(), modified.begin());
                const auto mx = std::max_element(modified.begin(), modified.end());
                const auto mn = std::min_element(modified.begin(), modified.end());
                const double eps = unit(rng) * 0.25 * (*mx - *mn);
                *mx -= eps;
                *mn += eps;
                eps_used[static_cast<std::size_t>(s) * n_actions + a] = eps;
            }
        }

        std::vector<int> action(n_states);
        for (int s = 0; s < n_states; ++s)
            action[s] = static_cast<int>(rng() % static_cast<std::uint64_t>(n_actions));
        const PolicyTable policy = PolicyTable::deterministic(action, n_actions);

        // The proof covers point-mass starts; mixtures over states are out of
        // its scope, so the fuzz draws a random start state.
        const int s0 = static_cast<int>(rng() % static_cast<std::uint64_t>(n_states));
        std::vector<double> rho(n_states, 0.0);
        rho[s0] = 1.0;

        const auto report = verify_dynamism_theorem(p, pt, policy, {rho});
        FuzzTrialRow row;
        row.trial_id = t;
        row.n_states = n_states;
        row.epsilon_mass = eps_used[static_cast<std::size_t>(s0) * n_actions + action[s0]];
        row.linf_before = report.cases[0].linf_before;
        row.linf_after = report.cases[0].linf_after;
        row.pass = report.cases[0].pass;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace ecorl::mdp
