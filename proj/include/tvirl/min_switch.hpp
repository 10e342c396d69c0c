#pragma once

#include "tvirl/mdp.hpp"
#include "tvirl/reward_sets.hpp"

#include <vector>

namespace tvirl {

/**
 * Minimally switching reward: ascending switch times in (0, T), one
 * time-invariant reward per interval (earliest first), and the value
 * functions nu_0..nu_T certifying that the assembled reward induces the
 * target policy.
 */
struct Partition {
    std::vector<Index> switch_times;
    std::vector<Vec> interval_rewards;
    ValueFunction boundary_values;

    // diagnostics
    long oracle_calls = 0;
    /// Max violation of the full-horizon set by the assembled reward and boundary_values.
    double residual = 0.0;
    double tol = 0.0;
};

/**
 * Greedy interval partitioning with bisection.
 *
 * Walks backward from T. For the current interval end tau it bisects on the
 * start j, asking whether one time-invariant reward explains the policy over
 * [j, tau) given the committed values V_tau. When the search closes
 * (u = l + 1) it records a switch at u, commits the cached value blocks over
 * [u, tau) and restarts with tau = u, l = -1. The returned switch count is
 * the minimum over all rewards that induce the target.
 *
 * Throws SolverStalled from the oracle and std::logic_error if a single-step
 * interval is reported infeasible.
 */
Partition greedy_partition(const MdpModel& model, const LogPolicyBand& target, double tol);
Partition greedy_partition(const MdpModel& model, const Policy& policy, double tol = kExactFeasibilityTol);

/// Piecewise-constant expansion of a partition over [0, horizon).
TimeVaryingReward assemble_reward(const Partition& partition, Index horizon);

/// Number of t in [0, T-2] with max|r_{t+1} - r_t| > zero_tol.
Index count_switches(const TimeVaryingReward& reward, double zero_tol = 1e-6);

}  // namespace tvirl
