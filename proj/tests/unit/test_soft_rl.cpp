#include "oracles.hpp"

#include "tvirl/bench.hpp"
#include "tvirl/rng.hpp"
#include "tvirl/soft_rl.hpp"

#include <doctest.h>

#include <cmath>

using namespace tvirl;

namespace {

MdpModel random_model(Index m, Index n, Index horizon, double gamma, std::uint64_t seed) {
    return MdpModel(random_transitions(m, n, seed), Vec::Constant(n, 1.0 / static_cast<double>(n)), gamma, horizon);
}

Mat random_reward(Index rows, Index horizon, std::uint64_t seed, double scale = 1.0) {
    return scale * oracle::random_matrix(rows, horizon, seed);
}

Policy random_positive_policy(Index m, Index n, Index horizon, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Mat> tables;
    for (Index t = 0; t < horizon; ++t) {
        Mat tab(m, n);
        for (Index i = 0; i < tab.size(); ++i) tab(i) = rng.uniform(0.05, 1.0);
        for (Index s = 0; s < n; ++s) tab.col(s) /= tab.col(s).sum();
        tables.push_back(tab);
    }
    return Policy::unchecked(std::move(tables));
}

ValueFunction random_values(Index n, Index horizon, std::uint64_t seed) {
    Rng rng(seed);
    Mat v = Mat::Zero(n, horizon + 1);
    for (Index t = 0; t < horizon; ++t)
        for (Index s = 0; s < n; ++s) v(s, t) = rng.normal();
    return ValueFunction(v);
}

// Deterministic chain: state s moves to s+1 (capped), one action keeps it put.
MdpModel chain_model(Index n, Index horizon) {
    Mat forward = Mat::Zero(n, n), stay = Mat::Identity(n, n);
    for (Index s = 0; s < n; ++s) forward(s, std::min(s + 1, n - 1)) = 1.0;
    Vec mu = Vec::Zero(n);
    mu(0) = 1.0;
    return MdpModel({forward, stay}, mu, 1.0, horizon);
}

}  // namespace

TEST_CASE("soft_backward: one state, two actions, zero reward") {
    const MdpModel model({Mat::Ones(1, 1), Mat::Ones(1, 1)}, Vec::Ones(1), 0.9, 1);
    const SoftSolution sol = soft_backward(model, TimeVaryingReward::zeros(2, 1));
    CHECK(sol.q[0](0, 0) == 0.0);
    CHECK(sol.q[0](1, 0) == 0.0);
    CHECK(sol.v.at(0)(0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(sol.policy.prob(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(sol.policy.prob(0, 1, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("soft_backward: constant reward gives a geometric value") {
    const Index m = 5, n = 4, horizon = 3;
    const double gamma = 0.9, c = 1.0;
    const MdpModel model = random_model(m, n, horizon, gamma, 11);
    const SoftSolution sol = soft_backward(model, TimeVaryingReward(Mat::Constant(m * n, horizon, c)));
    for (Index t = 0; t < horizon; ++t) {
        double expected = 0.0;
        for (Index k = 0; k <= horizon - 1 - t; ++k) expected += std::pow(gamma, static_cast<double>(k)) * (c + std::log(5.0));
        for (Index s = 0; s < n; ++s) {
            CHECK(sol.v.at(t)(s) == doctest::Approx(expected).epsilon(1e-13));
            for (Index a = 0; a < m; ++a) CHECK(sol.policy.prob(t, a, s) == doctest::Approx(0.2).epsilon(1e-13));
        }
    }
    CHECK(sol.v.at(horizon).isZero(0.0));
}

TEST_CASE("soft_backward agrees with the scalar-loop recursion") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const MdpModel model = random_model(2, 2, 4, 0.9, seed);
        const Mat r = random_reward(4, 4, seed + 500);
        const SoftSolution sol = soft_backward(model, TimeVaryingReward(r));
        const auto q = oracle::soft_q(model, r);
        double worst = 0.0;
        for (Index t = 0; t < 4; ++t)
            for (Index a = 0; a < 2; ++a)
                for (Index s = 0; s < 2; ++s) worst = std::max(worst, std::abs(q[t][a][s] - sol.q[t](a, s)));
        CHECK(worst <= 1e-12);
    }
}

TEST_CASE("SoftSolution invariants") {
    const MdpModel model = random_model(3, 4, 5, 0.95, 3);
    const SoftSolution sol = soft_backward(model, TimeVaryingReward(random_reward(12, 5, 4, 2.0)));
    CHECK(sol.policy.strictly_positive());
    for (Index t = 0; t < 5; ++t)
        for (Index s = 0; s < 4; ++s) {
            double sum = 0.0;
            for (Index a = 0; a < 3; ++a) sum += std::exp(sol.q[t](a, s));
            CHECK(std::abs(sol.v.at(t)(s) - std::log(sum)) <= 1e-9);
            for (Index a = 0; a < 3; ++a)
                CHECK(std::abs(sol.policy.prob(t, a, s) - std::exp(sol.q[t](a, s) - sol.v.at(t)(s))) <= 1e-9);
            CHECK(std::abs(sol.policy.table(t).col(s).sum() - 1.0) <= 1e-12);
        }
}

TEST_CASE("soft_backward stays finite for rewards of order 1e3") {
    const MdpModel model = random_model(3, 3, 6, 1.0, 5);
    const SoftSolution sol = soft_backward(model, TimeVaryingReward(random_reward(9, 6, 6, 1e3)));
    for (const Mat& q : sol.q) CHECK(q.allFinite());
    CHECK(sol.v.matrix().allFinite());
    for (Index t = 0; t < 6; ++t) CHECK(sol.policy.table(t).allFinite());
}

TEST_CASE("soft_backward rejects bad rewards") {
    const MdpModel model = random_model(2, 2, 3, 0.9, 1);
    CHECK_THROWS_AS(soft_backward(model, TimeVaryingReward::zeros(4, 2)), std::invalid_argument);
    CHECK_THROWS_AS(soft_backward(model, TimeVaryingReward::zeros(3, 3)), std::invalid_argument);
    TimeVaryingReward r = TimeVaryingReward::zeros(4, 3);
    r.matrix()(2, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(soft_backward(model, r), std::invalid_argument);
}

TEST_CASE("reward_from_policy examples") {
    const Index m = 3, n = 4, horizon = 4;
    SUBCASE("uniform policy and zero values") {
        const MdpModel model = random_model(m, n, horizon, 0.9, 2);
        const TimeVaryingReward r = reward_from_policy(model, Policy::uniform(m, n, horizon), ValueFunction(n, horizon));
        CHECK((r.matrix().array() - std::log(1.0 / 3.0)).abs().maxCoeff() <= 1e-15);
    }
    SUBCASE("uniform policy, unit values, gamma one") {
        const MdpModel model = random_model(m, n, horizon, 1.0, 2);
        Mat v = Mat::Ones(n, horizon + 1);
        v.col(horizon).setZero();
        const TimeVaryingReward r = reward_from_policy(model, Policy::uniform(m, n, horizon), ValueFunction(v));
        for (Index t = 0; t + 1 < horizon; ++t)
            CHECK((r.step(t).array() - std::log(1.0 / 3.0)).abs().maxCoeff() <= 1e-12);
        CHECK((r.step(horizon - 1).array() - (std::log(1.0 / 3.0) + 1.0)).abs().maxCoeff() <= 1e-12);
    }
    SUBCASE("zero policy entry is rejected") {
        const MdpModel model = random_model(2, 1, 1, 0.9, 2);
        Mat tab(2, 1);
        tab << 1.0, 0.0;
        CHECK_THROWS_AS(reward_from_policy(model, Policy({tab}), ValueFunction(1, 1)), std::domain_error);
    }
}

TEST_CASE("inverse-map round trip on random instances") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const Index m = 2 + static_cast<Index>(seed % 3), n = 2 + static_cast<Index>(seed % 2), horizon = 5;
        const MdpModel model = random_model(m, n, horizon, seed % 2 ? 1.0 : 0.9, seed);
        const Policy pi = random_positive_policy(m, n, horizon, seed + 77);
        const ValueFunction nu = random_values(n, horizon, seed + 99);
        const SoftSolution sol = soft_backward(model, reward_from_policy(model, pi, nu));
        CHECK(policy_distance(sol.policy, pi) <= 1e-8);
        CHECK((sol.v.matrix() - nu.matrix()).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("with gamma zero a per-state constant changes V but no other state's policy") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Index m = 3, n = 3, horizon = 4;
        const MdpModel myopic = random_model(m, n, horizon, 0.0, seed);
        const Mat r = random_reward(m * n, horizon, seed + 1);
        Mat bumped = r;
        for (Index a = 0; a < m; ++a) bumped(FlatIndex::flatten(a, 1, n), 2) += 3.0;
        const SoftSolution p0 = soft_backward(myopic, TimeVaryingReward(r));
        const SoftSolution p1 = soft_backward(myopic, TimeVaryingReward(bumped));
        CHECK(policy_distance(p0.policy, p1.policy) <= 1e-14);
        CHECK(std::abs(p1.v.at(2)(1) - p0.v.at(2)(1) - 3.0) <= 1e-12);
    }
}

TEST_CASE("shifting the final step by gamma E[nu_o - V] restores the target policy") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Index m = 3, n = 3, horizon = 5;
        const MdpModel model = random_model(m, n, horizon, 0.9, seed + 40);
        const Policy pi = random_positive_policy(m, n, horizon, seed + 41);
        const ValueFunction nu = random_values(n, horizon, seed + 42);
        Rng rng(seed + 43);
        Vec nu_o(n);
        for (Index s = 0; s < n; ++s) nu_o(s) = rng.normal();
        // (r, nu) explains pi with boundary value nu_o at step T; the shift moves the boundary to V_T = 0.
        Mat r = reward_from_policy(model, pi, nu).matrix();
        for (Index a = 0; a < m; ++a) {
            const Vec cont = model.gamma() * model.transition(a) * nu_o;
            for (Index s = 0; s < n; ++s) r(FlatIndex::flatten(a, s, n), horizon - 1) -= cont(s);
        }
        Mat r_shift = r;
        for (Index a = 0; a < m; ++a) {
            const Vec cont = model.gamma() * model.transition(a) * nu_o;
            for (Index s = 0; s < n; ++s) r_shift(FlatIndex::flatten(a, s, n), horizon - 1) += cont(s);
        }
        const SoftSolution shifted = soft_backward(model, TimeVaryingReward(r_shift));
        CHECK(policy_distance(shifted.policy, pi) <= 1e-10);
        CHECK((shifted.v.matrix() - nu.matrix()).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("sample_trajectories") {
    SUBCASE("degenerate distributions give the unique path") {
        const MdpModel model = chain_model(4, 5);
        Mat tab = Mat::Zero(2, 4);
        tab.row(0).setOnes();
        const Policy always_forward(std::vector<Mat>(5, tab));
        const TrajectorySet set = sample_trajectories(model, always_forward, 20, 3);
        for (Index i = 0; i < set.size(); ++i) {
            for (Index t = 0; t <= 5; ++t) CHECK(set.state(i, t) == std::min<Index>(t, 3));
            for (Index t = 0; t < 5; ++t) CHECK(set.action(i, t) == 0);
        }
    }
    SUBCASE("action frequencies of a fair coin") {
        const MdpModel model({Mat::Ones(1, 1), Mat::Ones(1, 1)}, Vec::Ones(1), 1.0, 1);
        const TrajectorySet set = sample_trajectories(model, Policy::uniform(2, 1, 1), 100000, 2024);
        double zeros = 0.0;
        for (Index i = 0; i < set.size(); ++i) zeros += set.action(i, 0) == 0 ? 1.0 : 0.0;
        const double freq = zeros / 100000.0;
        CHECK(freq >= 0.495);
        CHECK(freq <= 0.505);
    }
    SUBCASE("same seed, same set; different seed, different set") {
        const MdpModel model = random_model(3, 4, 6, 0.9, 8);
        const Policy pi = soft_backward(model, TimeVaryingReward(random_reward(12, 6, 9))).policy;
        const TrajectorySet a = sample_trajectories(model, pi, 200, 77);
        const TrajectorySet b = sample_trajectories(model, pi, 200, 77);
        const TrajectorySet c = sample_trajectories(model, pi, 200, 78);
        CHECK(a == b);
        CHECK_FALSE(a == c);
        CHECK(a.seed() == 77);
        CHECK_NOTHROW(a.validate(4, 3));
    }
    SUBCASE("count must be positive") {
        const MdpModel model = random_model(2, 2, 2, 0.9, 1);
        CHECK_THROWS_AS(sample_trajectories(model, Policy::uniform(2, 2, 2), 0, 1), std::invalid_argument);
    }
}

TEST_CASE("mean_action_loglik") {
    SUBCASE("uniform policy over five actions") {
        const MdpModel model = random_model(5, 3, 4, 0.9, 1);
        const Policy uniform = Policy::uniform(5, 3, 4);
        const TrajectorySet set = sample_trajectories(model, uniform, 50, 3);
        CHECK(mean_action_loglik(uniform, set).value == doctest::Approx(-std::log(5.0)).epsilon(1e-14));
    }
    SUBCASE("point-mass policy along its own path") {
        const MdpModel model = chain_model(3, 4);
        Mat tab = Mat::Zero(2, 3);
        tab.row(1).setOnes();
        const Policy stay(std::vector<Mat>(4, tab));
        const TrajectorySet set = sample_trajectories(model, stay, 5, 1);
        const LogLikelihood ll = mean_action_loglik(stay, set);
        CHECK(ll.value == 0.0);
        CHECK_FALSE(ll.zero_probability_visit);

        Mat other = Mat::Zero(2, 3);
        other.row(0).setOnes();
        const LogLikelihood bad = mean_action_loglik(Policy(std::vector<Mat>(4, other)), set);
        CHECK(bad.zero_probability_visit);
        CHECK(std::isinf(bad.value));
        CHECK(bad.value < 0.0);
    }
    SUBCASE("gridworld policy on its own samples matches a scalar recomputation") {
        const GridSpec spec = open_grid_spec();
        const MdpModel model = make_gridworld(spec, 0.9, 10);
        const auto [r, labels] = random_piecewise_reward(model.flat_size(), 10, 2, 0.1, 0.4, 5);
        const Policy pi = soft_backward(model, r).policy;
        const TrajectorySet set = sample_trajectories(model, pi, 500, 6);
        double total = 0.0;
        for (Index i = 0; i < set.size(); ++i)
            for (Index t = 0; t < 10; ++t) total += std::log(pi.table(t)(set.action(i, t), set.state(i, t)));
        const double value = mean_action_loglik(pi, set).value;
        CHECK(value == doctest::Approx(total / 5000.0).epsilon(1e-12));
        CHECK(value < 0.0);
        CHECK(value > -std::log(5.0) - 1e-9);
    }
    SUBCASE("horizon mismatch") {
        const MdpModel model = random_model(2, 2, 3, 0.9, 1);
        const TrajectorySet set = sample_trajectories(model, Policy::uniform(2, 2, 3), 4, 1);
        CHECK_THROWS_AS(mean_action_loglik(Policy::uniform(2, 2, 2), set), std::invalid_argument);
    }
}

TEST_CASE("policy_distance") {
    const Policy a = random_positive_policy(3, 4, 5, 1);
    CHECK(policy_distance(a, a) == 0.0);
    Policy b = a;
    b.table(2)(1, 3) += 0.1;
    CHECK(policy_distance(a, b) == doctest::Approx(0.1).epsilon(1e-12));
    const Policy c = random_positive_policy(3, 4, 5, 2);
    double worst = 0.0;
    for (Index t = 0; t < 5; ++t)
        for (Index act = 0; act < 3; ++act)
            for (Index s = 0; s < 4; ++s) worst = std::max(worst, std::abs(a.prob(t, act, s) - c.prob(t, act, s)));
    CHECK(policy_distance(a, c) == worst);
    CHECK_THROWS_AS(policy_distance(a, Policy::uniform(3, 4, 4)), std::invalid_argument);
}

TEST_CASE("Rng draws are reproducible and well spread") {
    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng r(9);
    double sum = 0.0, sq = 0.0;
    const int count = 200000;
    for (int i = 0; i < count; ++i) {
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / count) < 0.01);
    CHECK(std::abs(sq / count - 1.0) < 0.02);
    for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
    CHECK(substream_seed(1, "a", 0) != substream_seed(1, "b", 0));
    CHECK(substream_seed(1, "a", 0) != substream_seed(1, "a", 1));
    CHECK(substream_seed(1, "a", 0) == substream_seed(1, "a", 0));
}
