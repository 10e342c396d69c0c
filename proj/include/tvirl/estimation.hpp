#pragma once

#include "tvirl/mdp.hpp"
#include "tvirl/soft_rl.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace tvirl {

/// Default confidence level for the per-entry log-deviation bounds.
inline constexpr double kDefaultDelta = 0.9999;

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Visit counts: state_visits(t, s) = n(t,s); action_counts[t](a, s) = #{i : s_t = s, a_t = a}.
struct CountTable {
    CountMatrix state_visits;
    std::vector<CountMatrix> action_counts;

    Index horizon() const { return state_visits.rows(); }
    std::int64_t visits(Index t, Index s) const { return state_visits(t, s); }
};

/// Elementwise log-deviation bounds in time-block FlatIndex order; +inf drops the row.
struct BoundVector {
    Vec b;
    /// epsilon(t, s) stored as a T x n matrix; +inf where n(t, s) = 0.
    Mat epsilon;

    Index finite_count() const;
};

/// Relative action frequencies per (t, s). Unvisited states get a uniform placeholder column.
std::pair<Policy, CountTable> estimate_policy(const TrajectorySet& trajectories, Index n_actions, Index n_states);

/// sqrt(log(2 / (1 - delta)) / (2 count)); nullopt when count is zero.
std::optional<double> epsilon_radius(std::int64_t count, double delta);

/// b(t,a,s) = eps(t,s) / (pi_hat - eps(t,s)) where pi_hat > eps and n(t,s) > 0, else +inf.
BoundVector build_bound_vector(const Policy& pi_hat, const CountTable& counts, double delta = kDefaultDelta);

}  // namespace tvirl
