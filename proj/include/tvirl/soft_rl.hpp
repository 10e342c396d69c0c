#pragma once

#include "tvirl/mdp.hpp"

#include <cstdint>
#include <vector>

namespace tvirl {

/// Soft Q tables, soft values and the induced MaxEnt policy.
struct SoftSolution {
    std::vector<Mat> q;  // T tables, m x n
    ValueFunction v;
    Policy policy;
};

/**
 * N sampled trajectories (s_0, a_0, ..., s_{T-1}, a_{T-1}, s_T), stored
 * row-major: state(i, t) for t in [0, T], action(i, t) for t in [0, T).
 */
class TrajectorySet {
public:
    TrajectorySet() = default;
    TrajectorySet(Index count, Index horizon, std::uint64_t seed);

    Index size() const { return count_; }
    Index horizon() const { return horizon_; }
    std::uint64_t seed() const { return seed_; }

    std::int32_t state(Index i, Index t) const { return states_[static_cast<std::size_t>(i * (horizon_ + 1) + t)]; }
    std::int32_t action(Index i, Index t) const { return actions_[static_cast<std::size_t>(i * horizon_ + t)]; }
    void set_state(Index i, Index t, std::int32_t s) { states_[static_cast<std::size_t>(i * (horizon_ + 1) + t)] = s; }
    void set_action(Index i, Index t, std::int32_t a) { actions_[static_cast<std::size_t>(i * horizon_ + t)] = a; }

    /// Throws std::invalid_argument if an index is outside [0, n) or [0, m).
    void validate(Index n_states, Index n_actions) const;

    bool operator==(const TrajectorySet&) const = default;

private:
    Index count_ = 0;
    Index horizon_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<std::int32_t> states_;
    std::vector<std::int32_t> actions_;
};

/// Backward soft Bellman recursion in log-sum-exp form.
SoftSolution soft_backward(const MdpModel& model, const TimeVaryingReward& reward);

/// The unique reward under which `policy` is MaxEnt-optimal with soft values `nu`.
TimeVaryingReward reward_from_policy(const MdpModel& model, const Policy& policy, const ValueFunction& nu);

/// i.i.d. trajectories; trajectory i draws from its own substream of `seed`.
TrajectorySet sample_trajectories(const MdpModel& model, const Policy& policy, Index count, std::uint64_t seed);

struct LogLikelihood {
    double value = 0.0;
    /// A visited (t, s, a) had probability zero; value is -infinity.
    bool zero_probability_visit = false;
};

/// Mean per-step action log-likelihood (1/(N T)) sum_i sum_t log pi_t(a_t | s_t).
LogLikelihood mean_action_loglik(const Policy& policy, const TrajectorySet& trajectories);

/// Max-norm distance over all (t, a, s).
double policy_distance(const Policy& lhs, const Policy& rhs);

}  // namespace tvirl
