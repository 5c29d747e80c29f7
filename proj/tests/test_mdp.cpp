#include "ecorl/mdp.hpp"

#include "ecorl/rand.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

using namespace ecorl;
using namespace ecorl::mdp;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TabularMdp two_state_chain(double gamma) {
    // deterministic s0 -> s1, s1 -> s1, single action
    TabularMdp m;
    m.transition = TransitionKernel::zeros(2, 1);
    m.transition.at(0, 0, 1) = 1.0;
    m.transition.at(1, 0, 1) = 1.0;
    m.reward.assign(2, 0.0);
    m.gamma = gamma;
    m.initial_dist = {1.0, 0.0};
    return m;
}

/// Independent oracle: truncated power series
/// d ~= (1-gamma) sum_{t<T} gamma^t (P_pi^T)^t start.
std::vector<double> visitation_power_series(const TabularMdp& m, const PolicyTable& pi,
                                            const std::vector<double>& start, int terms) {
    const int n = m.n_states();
    std::vector<std::vector<double>> rows(n);
    for (int s = 0; s < n; ++s) rows[s] = policy_row(m.transition, pi, s);

    std::vector<double> current = start;
    std::vector<double> acc(n, 0.0);
    double discount = 1.0;
    for (int t = 0; t < terms; ++t) {
        for (int s = 0; s < n; ++s) acc[s] += discount * current[s];
        std::vector<double> next(n, 0.0);
        for (int s = 0; s < n; ++s)
            for (int sp = 0; sp < n; ++sp) next[sp] += current[s] * rows[s][sp];
        current = std::move(next);
        discount *= m.gamma;
    }
    for (double& x : acc) x *= (1.0 - m.gamma);
    return acc;
}

TabularMdp random_mdp(int n_states, int n_actions, double gamma, std::mt19937_64& rng) {
    std::exponential_distribution<double> expo(1.0);
    TabularMdp m;
    m.transition = TransitionKernel::zeros(n_states, n_actions);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) {
            auto row = m.transition.row(s, a);
            double sum = 0.0;
            for (int sp = 0; sp < n_states; ++sp) sum += (row[sp] = expo(rng));
            for (int sp = 0; sp < n_states; ++sp) row[sp] /= sum;
        }
    m.reward.assign(static_cast<std::size_t>(n_states) * n_actions, 0.0);
    m.gamma = gamma;
    m.initial_dist.assign(n_states, 0.0);
    m.initial_dist[0] = 1.0;
    return m;
}

PolicyTable random_policy(int n_states, int n_actions, std::mt19937_64& rng) {
    std::exponential_distribution<double> expo(1.0);
    PolicyTable pi;
    pi.n_states = n_states;
    pi.n_actions = n_actions;
    pi.probs.resize(static_cast<std::size_t>(n_states) * n_actions);
    for (int s = 0; s < n_states; ++s) {
        double sum = 0.0;
        for (int a = 0; a < n_actions; ++a) sum += (pi.at(s, a) = expo(rng));
        for (int a = 0; a < n_actions; ++a) pi.at(s, a) /= sum;
    }
    return pi;
}

}  // namespace

TEST_CASE("exact_visitation: one-state MDP is a point mass") {
    TabularMdp m;
    m.transition = TransitionKernel::zeros(1, 2);
    m.transition.at(0, 0, 0) = 1.0;
    m.transition.at(0, 1, 0) = 1.0;
    m.reward.assign(2, 0.0);
    m.gamma = 0.7;
    m.initial_dist = {1.0};
    const auto d = exact_visitation(m, PolicyTable::uniform(1, 2), {1.0});
    CHECK(d.d[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exact_visitation: deterministic 2-state chain matches geometric series") {
    const auto m = two_state_chain(0.9);
    const auto pi = PolicyTable::uniform(2, 1);
    const auto d = exact_visitation(m, pi, {1.0, 0.0});
    CHECK(d.d[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(d.d[1] == doctest::Approx(0.9).epsilon(1e-12));

    // cross-check against the 1000-term power iteration oracle
    const auto oracle = visitation_power_series(m, pi, {1.0, 0.0}, 1000);
    CHECK(std::abs(d.d[0] - oracle[0]) < 1e-10);
    CHECK(std::abs(d.d[1] - oracle[1]) < 1e-10);
}

TEST_CASE("exact_visitation: symmetric swap chain from uniform start") {
    TabularMdp m;
    m.transition = TransitionKernel::zeros(2, 1);
    m.transition.at(0, 0, 1) = 1.0;
    m.transition.at(1, 0, 0) = 1.0;
    m.reward.assign(2, 0.0);
    m.gamma = 0.8;
    m.initial_dist = {0.5, 0.5};
    const auto d = exact_visitation(m, PolicyTable::uniform(2, 1), {0.5, 0.5});
    CHECK(d.d[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(d.d[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("exact_visitation agrees with 2000-term power series on random MDPs") {
    auto rng = make_rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 19);  // up to 20 states
        const int a = 1 + static_cast<int>(rng() % 4);
        const double gamma = 0.5 + 0.45 * std::uniform_real_distribution<double>(0, 1)(rng);
        const auto m = random_mdp(n, a, gamma, rng);
        const auto pi = random_policy(n, a, rng);
        std::vector<double> start(n, 0.0);
        start[static_cast<int>(rng() % n)] = 1.0;

        const auto d = exact_visitation(m, pi, start);
        const auto oracle = visitation_power_series(m, pi, start, 2000);
        for (int s = 0; s < n; ++s) CHECK(std::abs(d.d[s] - oracle[s]) < 1e-8);
    }
}

TEST_CASE("mismatch_coefficient conventions") {
    const VisitationVector d{{0.9, 0.1}};
    CHECK(mismatch_coefficient(d, d) == doctest::Approx(1.0));
    CHECK(mismatch_coefficient({{0.9, 0.1}}, {{0.5, 0.5}}) == doctest::Approx(1.8));
    CHECK(mismatch_coefficient({{1.0, 0.0}}, {{0.0, 1.0}}) == kInf);
    CHECK(mismatch_coefficient({{0.0, 1.0}}, {{0.0, 1.0}}) == doctest::Approx(1.0));  // 0/0 -> 0
    CHECK_THROWS_AS(mismatch_coefficient({{1.0}}, {{0.5, 0.5}}), std::invalid_argument);
}

TEST_CASE("mismatch_coefficient(d,d) == 1 for random visitations") {
    auto rng = make_rng(12);
    std::exponential_distribution<double> expo(1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 16);
        VisitationVector d;
        d.d.resize(n);
        double sum = 0.0;
        for (double& x : d.d) sum += (x = expo(rng));
        for (double& x : d.d) x /= sum;
        CHECK(mismatch_coefficient(d, d) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("iteration_bound frozen examples") {
    CHECK(iteration_bound(0.9, 4, 6, 10.0, 2.0) == doctest::Approx(5529600.0).epsilon(1e-9));
    CHECK(iteration_bound(0.0, 4, 6, 10.0, 1.0) == doctest::Approx(0.0));
    CHECK(iteration_bound(0.9, 2, 2, 1.0, 1.0) == doctest::Approx(23040000.0).epsilon(1e-9));
    CHECK(iteration_bound(0.9, 4, 6, 10.0, kInf) == kInf);
}

TEST_CASE("shaping_bound and corollary comparator frozen examples") {
    ShapingBoundInputs inp;
    inp.delta = 2.0;
    inp.n = 1.0;
    inp.k = 3;
    inp.epsilon = 10.0;
    inp.gamma = 0.9;
    inp.n_states = 4;
    inp.n_actions = 6;
    CHECK(shaping_bound(inp) == doctest::Approx(9676800.0).epsilon(1e-9));
    CHECK(shaping_beneficial(inp, 10.0));  // 7 <= 100

    ShapingBoundInputs big;
    big.delta = 5.0;
    big.n = 4.0;
    big.k = 10;
    big.epsilon = 10.0;
    big.gamma = 0.9;
    big.n_states = 4;
    big.n_actions = 6;
    CHECK_FALSE(shaping_beneficial(big, 5.0));  // 185 > 25
}

TEST_CASE("bounds are monotone in mismatch, delta, n, k and gamma") {
    auto rng = make_rng(13);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double gamma = 0.99 * unit(rng);
        const double gamma2 = gamma + (0.99 - gamma) * unit(rng);
        const double eps = 0.1 + 10.0 * unit(rng);
        const double mismatch = 1.0 + 20.0 * unit(rng);
        const double mismatch2 = mismatch + 10.0 * unit(rng);

        CHECK(iteration_bound(gamma, 4, 6, eps, mismatch) <=
              iteration_bound(gamma, 4, 6, eps, mismatch2) + 1e-9);
        CHECK(iteration_bound(gamma, 4, 6, eps, mismatch) <=
              iteration_bound(gamma2, 4, 6, eps, mismatch) + 1e-9);

        ShapingBoundInputs inp;
        inp.delta = 1.0 + 5.0 * unit(rng);
        inp.n = 1.0 + 5.0 * unit(rng);
        inp.k = 1 + static_cast<int>(rng() % 10);
        inp.epsilon = eps;
        inp.gamma = gamma;
        inp.n_states = 4;
        inp.n_actions = 6;

        auto bumped = inp;
        bumped.delta += unit(rng);
        CHECK(shaping_bound(inp) <= shaping_bound(bumped) + 1e-9);
        bumped = inp;
        bumped.n += unit(rng);
        CHECK(shaping_bound(inp) <= shaping_bound(bumped) + 1e-9);
        bumped = inp;
        bumped.k += 1;
        CHECK(shaping_bound(inp) <= shaping_bound(bumped) + 1e-9);
        bumped = inp;
        bumped.gamma = gamma2;
        CHECK(shaping_bound(inp) <= shaping_bound(bumped) + 1e-9);
    }
}

TEST_CASE("row_entropy basics and maximizer") {
    CHECK(row_entropy(std::vector<double>{1.0, 0.0, 0.0}) == doctest::Approx(0.0));
    CHECK(row_entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(row_entropy(std::vector<double>{0.5, 0.5, 0.0, 0.0}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    auto rng = make_rng(14);
    std::exponential_distribution<double> expo(1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int m = 2 + static_cast<int>(rng() % 8);
        std::vector<double> v(m);
        double sum = 0.0;
        for (double& x : v) sum += (x = expo(rng));
        for (double& x : v) x /= sum;
        CHECK(row_entropy(v) <= std::log(static_cast<double>(m)) + 1e-12);

        // zero exactly on deterministic rows
        std::vector<double> det(m, 0.0);
        det[static_cast<int>(rng() % m)] = 1.0;
        CHECK(row_entropy(det) == 0.0);
    }
}

TEST_CASE("check_dynamism_assumptions on the documented examples") {
    auto make_row_kernel = [](std::vector<double> row) {
        TransitionKernel k = TransitionKernel::zeros(2, 1);
        k.at(0, 0, 0) = row[0];
        k.at(0, 0, 1) = row[1];
        k.at(1, 0, 0) = 0.5;
        k.at(1, 0, 1) = 0.5;
        return k;
    };
    const auto p = make_row_kernel({0.9, 0.1});
    CHECK(check_dynamism_assumptions(p, p));                              // identity
    CHECK(check_dynamism_assumptions(p, make_row_kernel({0.7, 0.3})));    // toward uniform
    CHECK_FALSE(check_dynamism_assumptions(p, make_row_kernel({1.0, 0.0})));  // max grew
}

TEST_CASE("distance_to_uniform examples") {
    const auto uniform = distance_to_uniform(std::vector<double>{0.25, 0.25, 0.25, 0.25});
    CHECK(uniform.linf == doctest::Approx(0.0));
    CHECK(uniform.tv == doctest::Approx(0.0));

    const auto point = distance_to_uniform(std::vector<double>{1.0, 0.0});
    CHECK(point.linf == doctest::Approx(0.5));
    CHECK(point.tv == doctest::Approx(0.5));

    const auto skew = distance_to_uniform(std::vector<double>{0.7, 0.3});
    CHECK(skew.linf == doctest::Approx(0.2));
    CHECK(skew.tv == doctest::Approx(0.2));
}

TEST_CASE("verify_dynamism_theorem: equal kernels give equal distances") {
    auto rng = make_rng(15);
    const auto m = random_mdp(4, 2, 0.9, rng);
    const auto pi = random_policy(4, 2, rng);
    const std::vector<std::vector<double>> starts = {
        {1.0, 0.0, 0.0, 0.0}, {0.25, 0.25, 0.25, 0.25}, {0.1, 0.2, 0.3, 0.4}};
    const auto report = verify_dynamism_theorem(m.transition, m.transition, pi, starts);
    CHECK(report.all_pass);
    for (const auto& c : report.cases) CHECK(c.linf_before == doctest::Approx(c.linf_after));
}

TEST_CASE("verify_dynamism_theorem: two-state hand example") {
    TransitionKernel p = TransitionKernel::zeros(2, 1);
    p.at(0, 0, 0) = 0.9;
    p.at(0, 0, 1) = 0.1;
    p.at(1, 0, 0) = 0.5;
    p.at(1, 0, 1) = 0.5;
    TransitionKernel pt = p;
    pt.at(0, 0, 0) = 0.7;
    pt.at(0, 0, 1) = 0.3;

    const auto pi = PolicyTable::uniform(2, 1);
    const auto report = verify_dynamism_theorem(p, pt, pi, {{1.0, 0.0}});
    REQUIRE(report.cases.size() == 1);
    CHECK(report.cases[0].linf_before == doctest::Approx(0.4));
    CHECK(report.cases[0].linf_after == doctest::Approx(0.2));
    CHECK(report.all_pass);
}

TEST_CASE("verify_dynamism_theorem refuses inputs violating the assumptions") {
    TransitionKernel p = TransitionKernel::zeros(2, 1);
    p.at(0, 0, 0) = 0.9;
    p.at(0, 0, 1) = 0.1;
    p.at(1, 0, 0) = 0.5;
    p.at(1, 0, 1) = 0.5;
    TransitionKernel bad = p;
    bad.at(0, 0, 0) = 1.0;
    bad.at(0, 0, 1) = 0.0;
    CHECK_THROWS_AS(verify_dynamism_theorem(p, bad, PolicyTable::uniform(2, 1), {{1.0, 0.0}}),
                    std::invalid_argument);
}

TEST_CASE("dynamism fuzz: 1000 kernels x 100 point-mass starts, zero violations") {
    const auto rows = run_dynamism_fuzz(100000, 4, 3, 20260810);
    REQUIRE(rows.size() == 100000);
    for (const auto& r : rows) {
        CHECK(r.pass);
        CHECK(r.linf_after <= r.linf_before + 1e-12);
    }
}

TEST_CASE("subtask chain: single-stage mismatch in the expected band") {
    const auto chain = build_subtask_chain(1, 1, 2, 0.9);
    const int goal = subtask_chain_goal(1, 1);
    const auto opt = subtask_chain_optimal_policy(1, 1, 2);
    const auto unif = PolicyTable::uniform(chain.n_states(), 2);

    const auto d_opt = exact_visitation(chain, opt, chain.initial_dist);
    const auto d_unif = exact_visitation(chain, unif, chain.initial_dist);
    const double mismatch = d_opt.d[goal] / d_unif.d[goal];
    CHECK(mismatch >= 1.0);   // |A|^H * 0.5
    CHECK(mismatch <= 4.0);   // |A|^H * 2
    CHECK(mismatch == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("subtask chain: staged mismatches beat the unshaped goal mismatch") {
    const int k = 3, H = 2, A = 2;
    const auto chain = build_subtask_chain(k, H, A, 0.99);
    const int goal = subtask_chain_goal(k, H);
    const auto opt = subtask_chain_optimal_policy(k, H, A);
    const auto unif = PolicyTable::uniform(chain.n_states(), A);

    const auto d_opt = exact_visitation(chain, opt, chain.initial_dist);
    const auto d_unif = exact_visitation(chain, unif, chain.initial_dist);
    const double unshaped = d_opt.d[goal] / d_unif.d[goal];
    CHECK(unshaped == doctest::Approx(std::pow(A, k * H)).epsilon(1e-6));  // 64

    double staged_sum = 0.0;
    for (int stage = 0; stage < k; ++stage) {
        std::vector<double> start(chain.n_states(), 0.0);
        start[stage * H] = 1.0;
        const int stage_goal = (stage + 1) * H;
        const auto so = exact_visitation(chain, opt, start);
        const auto su = exact_visitation(chain, unif, start);
        const double stage_mismatch = so.d[stage_goal] / su.d[stage_goal];
        CHECK(stage_mismatch == doctest::Approx(std::pow(A, H)).epsilon(1e-6));  // 4
        staged_sum += stage_mismatch;
    }
    CHECK(unshaped > staged_sum);
    CHECK(unshaped >= 2.0 * staged_sum);  // 64 vs 12
}

TEST_CASE("subtask chain: degenerate H=0 has mismatch 1") {
    const auto chain = build_subtask_chain(1, 0, 2, 0.9);
    const int goal = subtask_chain_goal(1, 0);
    const auto opt = subtask_chain_optimal_policy(1, 0, 2);
    const auto unif = PolicyTable::uniform(chain.n_states(), 2);
    const auto d_opt = exact_visitation(chain, opt, chain.initial_dist);
    const auto d_unif = exact_visitation(chain, unif, chain.initial_dist);
    CHECK(d_opt.d[goal] / d_unif.d[goal] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("type invariants reject malformed inputs") {
    TransitionKernel k = TransitionKernel::zeros(2, 1);
    k.at(0, 0, 0) = 0.6;
    k.at(0, 0, 1) = 0.6;  // sums to 1.2
    k.at(1, 0, 1) = 1.0;
    CHECK_THROWS_AS(k.validate(), std::invalid_argument);

    TabularMdp m = two_state_chain(0.9);
    m.gamma = 1.0;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);

    ShapingBoundInputs inp;
    inp.epsilon = 0.0;
    CHECK_THROWS_AS(inp.validate(), std::invalid_argument);
}
