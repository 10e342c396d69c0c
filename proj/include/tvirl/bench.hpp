#pragma once

#include "tvirl/mdp.hpp"
#include "tvirl/soft_rl.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace tvirl {

struct Cell {
    Index row = 0;
    Index col = 0;
    bool operator==(const Cell&) const = default;
};

/// Gridworld actions, in index order.
enum GridAction : Index { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };
inline constexpr Index kGridActions = 5;

/**
 * Rectangular gridworld. State index = row * width + col, row 0 at the top.
 * walls block movement across an edge between two adjacent cells in both
 * directions; sticky cells hold the agent in place with probability 0.8.
 */
struct GridSpec {
    Index width = 5;
    Index height = 5;
    double wind_prob = 0.1;
    std::vector<std::pair<Cell, Cell>> walls;
    std::vector<Cell> sticky_cells;
    std::map<std::string, Cell> landmarks;

    Index state_of(Cell c) const { return c.row * width + c.col; }
    Index n_states() const { return width * height; }
    /// Throws std::invalid_argument on out-of-grid or non-adjacent references.
    void validate() const;
};

/// Open 5x5 grid with home at the top-left and water at the bottom-middle.
GridSpec open_grid_spec(Index width = 5, Index height = 5, double wind_prob = 0.1);
/// Open grid plus a wall below the middle row that leaves only the two rightmost columns open.
GridSpec blocked_grid_spec(Index width = 5, Index height = 5, double wind_prob = 0.1);
/// Open grid plus sticky cells along the direct home-water route.
GridSpec sticky_grid_spec(Index width = 5, Index height = 5, double wind_prob = 0.1);

GridSpec grid_spec_from_json(const nlohmann::json& doc);
nlohmann::json grid_spec_to_json(const GridSpec& spec);

/**
 * Intended move succeeds with probability 1 - p_w; with probability p_w the
 * wind pushes toward one of the four cardinal directions, p_w/4 each. A move
 * off the grid or through a wall leaves the agent in place. In sticky cells
 * the agent stays with probability 0.8 and the remaining 0.2 follows the
 * rule above. The initial distribution is uniform over cells.
 */
MdpModel make_gridworld(const GridSpec& spec, double gamma, Index horizon);

/// Interval id for every time step; nondecreasing.
struct LabeledPartition {
    std::vector<Index> labels;
    bool operator==(const LabeledPartition&) const = default;
};

LabeledPartition labels_from_switches(const std::vector<Index>& switch_times, Index horizon);

/**
 * k distinct switch times drawn uniformly from {1, ..., T-1}; interval 0
 * reward ~ U[0,1]^{mn}; interval i adds U[0, beta_i]^{mn} with beta_i
 * linearly spaced over [beta_lo, beta_hi].
 */
std::pair<TimeVaryingReward, LabeledPartition> random_piecewise_reward(Index flat_size, Index horizon, Index switches,
                                                                       double beta_lo, double beta_hi,
                                                                       std::uint64_t seed);

/// alpha_0 ~ N(0, I), alpha_{t+1} = alpha_t + N(0, sigma^2 I), r_t = u_basis alpha_t.
std::pair<TimeVaryingReward, Mat> random_walk_feature_reward(const Mat& u_basis, Index horizon, double sigma,
                                                             std::uint64_t seed);

/// u_k(s, a) = 1 when s is the k-th cell, for every action.
Mat indicator_features(const GridSpec& spec, const std::vector<Cell>& cells);

/// Hubert-Arabie adjusted Rand index from the contingency table.
double adjusted_rand_index(const LabeledPartition& a, const LabeledPartition& b);

/// Mean action log-likelihood of the samples under the reward's MaxEnt policy in target_model.
double transfer_eval(const TimeVaryingReward& reward, const MdpModel& target_model,
                     const TrajectorySet& reference_samples);

}  // namespace tvirl
