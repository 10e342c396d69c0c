#include "tvirl/soft_rl.hpp"

#include "tvirl/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tvirl {

TrajectorySet::TrajectorySet(Index count, Index horizon, std::uint64_t seed)
    : count_(count),
      horizon_(horizon),
      seed_(seed),
      states_(static_cast<std::size_t>(count * (horizon + 1)), 0),
      actions_(static_cast<std::size_t>(count * horizon), 0) {
    if (count < 0 || horizon < 1) throw std::invalid_argument("TrajectorySet: invalid shape");
}

void TrajectorySet::validate(Index n_states, Index n_actions) const {
    for (Index i = 0; i < count_; ++i) {
        for (Index t = 0; t <= horizon_; ++t) {
            const auto s = state(i, t);
            if (s < 0 || s >= n_states)
                throw std::invalid_argument("trajectory " + std::to_string(i) + ": state index out of range at t=" +
                                            std::to_string(t));
            if (t < horizon_) {
                const auto a = action(i, t);
                if (a < 0 || a >= n_actions)
                    throw std::invalid_argument("trajectory " + std::to_string(i) +
                                                ": action index out of range at t=" + std::to_string(t));
            }
        }
    }
}

SoftSolution soft_backward(const MdpModel& model, const TimeVaryingReward& reward) {
    const Index n = model.n_states();
    const Index m = model.n_actions();
    const Index horizon = model.horizon();
    if (reward.horizon() != horizon || reward.flat_size() != model.flat_size())
        throw std::invalid_argument("soft_backward: reward shape does not match the model");
    if (!reward.matrix().allFinite()) throw std::invalid_argument("soft_backward: reward has non-finite entries");

    SoftSolution out;
    out.q.assign(static_cast<std::size_t>(horizon), Mat(m, n));
    Mat v = Mat::Zero(n, horizon + 1);
    std::vector<Mat> tables(static_cast<std::size_t>(horizon), Mat(m, n));

    for (Index t = horizon - 1; t >= 0; --t) {
        Mat& q = out.q[static_cast<std::size_t>(t)];
        for (Index a = 0; a < m; ++a) {
            const Vec cont = model.transition(a) * v.col(t + 1);
            for (Index s = 0; s < n; ++s)
                q(a, s) = reward(t, FlatIndex::flatten(a, s, n)) + model.gamma() * cont(s);
        }
        Mat& pi = tables[static_cast<std::size_t>(t)];
        for (Index s = 0; s < n; ++s) {
            const double top = q.col(s).maxCoeff();
            const double total = (q.col(s).array() - top).exp().sum();
            v(s, t) = top + std::log(total);
            pi.col(s) = (q.col(s).array() - v(s, t)).exp();
        }
    }
    out.v = ValueFunction(std::move(v));
    out.policy = Policy::unchecked(std::move(tables));
    return out;
}

TimeVaryingReward reward_from_policy(const MdpModel& model, const Policy& policy, const ValueFunction& nu) {
    const Index n = model.n_states();
    const Index m = model.n_actions();
    const Index horizon = model.horizon();
    if (policy.horizon() != horizon || policy.n_states() != n || policy.n_actions() != m)
        throw std::invalid_argument("reward_from_policy: policy shape does not match the model");
    if (nu.horizon() != horizon || nu.n_states() != n)
        throw std::invalid_argument("reward_from_policy: value function shape does not match the model");

    Mat r(model.flat_size(), horizon);
    for (Index t = 0; t < horizon; ++t) {
        const Vec log_pi = policy.log_vector(t);
        for (Index a = 0; a < m; ++a) {
            const Vec cont = model.transition(a) * nu.at(t + 1);
            for (Index s = 0; s < n; ++s) {
                const Index k = FlatIndex::flatten(a, s, n);
                r(k, t) = log_pi(k) - model.gamma() * cont(s) + nu.at(t)(s);
            }
        }
    }
    return TimeVaryingReward(std::move(r));
}

TrajectorySet sample_trajectories(const MdpModel& model, const Policy& policy, Index count, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("sample_trajectories: count must be positive");
    const Index horizon = model.horizon();
    const Index n = model.n_states();
    if (policy.horizon() != horizon || policy.n_states() != n || policy.n_actions() != model.n_actions())
        throw std::invalid_argument("sample_trajectories: policy shape does not match the model");

    TrajectorySet out(count, horizon, seed);
    const Vec& mu0 = model.mu0();
    for (Index i = 0; i < count; ++i) {
        Rng rng(substream_seed(seed, "trajectory", static_cast<std::uint64_t>(i)));
        Index s = rng.categorical(n, [&](long k) { return mu0(k); });
        out.set_state(i, 0, static_cast<std::int32_t>(s));
        for (Index t = 0; t < horizon; ++t) {
            const Mat& tab = policy.table(t);
            const Index a = rng.categorical(tab.rows(), [&](long k) { return tab(k, s); });
            const Mat& p = model.transition(a);
            s = rng.categorical(n, [&](long k) { return p(s, k); });
            out.set_action(i, t, static_cast<std::int32_t>(a));
            out.set_state(i, t + 1, static_cast<std::int32_t>(s));
        }
    }
    return out;
}

LogLikelihood mean_action_loglik(const Policy& policy, const TrajectorySet& trajectories) {
    if (policy.horizon() != trajectories.horizon())
        throw std::invalid_argument("mean_action_loglik: policy horizon " + std::to_string(policy.horizon()) +
                                    " does not match trajectory horizon " +
                                    std::to_string(trajectories.horizon()));
    if (trajectories.size() == 0) throw std::invalid_argument("mean_action_loglik: no trajectories");
    trajectories.validate(policy.n_states(), policy.n_actions());

    LogLikelihood out;
    double total = 0.0;
    for (Index i = 0; i < trajectories.size(); ++i) {
        for (Index t = 0; t < trajectories.horizon(); ++t) {
            const double p = policy.prob(t, trajectories.action(i, t), trajectories.state(i, t));
            if (!(p > 0.0)) {
                out.zero_probability_visit = true;
                out.value = -std::numeric_limits<double>::infinity();
                return out;
            }
            total += std::log(p);
        }
    }
    out.value = total / static_cast<double>(trajectories.size() * trajectories.horizon());
    return out;
}

double policy_distance(const Policy& lhs, const Policy& rhs) {
    if (lhs.horizon() != rhs.horizon() || lhs.n_actions() != rhs.n_actions() || lhs.n_states() != rhs.n_states())
        throw std::invalid_argument("policy_distance: shape mismatch");
    double out = 0.0;
    for (Index t = 0; t < lhs.horizon(); ++t)
        out = std::max(out, (lhs.table(t) - rhs.table(t)).cwiseAbs().maxCoeff());
    return out;
}

}  // namespace tvirl
