#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tvirl {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Tolerance used when validating probability vectors at construction.
inline constexpr double kStochasticTol = 1e-12;

/**
 * Position of a (state, action) pair in every flat vector of length m*n.
 *
 * The layout is action-major and state-minor: all states of action 0 come
 * first, then all states of action 1, and so on. Every module goes through
 * this type instead of writing the arithmetic by hand.
 */
struct FlatIndex {
    Index action = 0;
    Index state = 0;

    static constexpr Index flatten(Index action, Index state, Index n_states) {
        return action * n_states + state;
    }
    constexpr Index flat(Index n_states) const { return flatten(action, state, n_states); }
    static constexpr FlatIndex unflatten(Index flat, Index n_states) {
        return FlatIndex{flat / n_states, flat % n_states};
    }
};

/**
 * Finite-horizon MDP without a reward.
 *
 * transitions[a](i, j) is the probability of moving from state i to state j
 * under action a. Construction validates stochasticity and throws
 * std::invalid_argument naming the offending entry; nothing is renormalized.
 */
class MdpModel {
public:
    MdpModel(std::vector<Mat> transitions, Vec mu0, double gamma, Index horizon);

    Index n_states() const { return n_; }
    Index n_actions() const { return m_; }
    Index flat_size() const { return m_ * n_; }
    Index horizon() const { return horizon_; }
    double gamma() const { return gamma_; }
    const Vec& mu0() const { return mu0_; }
    const Mat& transition(Index action) const { return transitions_[static_cast<std::size_t>(action)]; }
    const std::vector<Mat>& transitions() const { return transitions_; }

    /// Same dynamics, different horizon.
    MdpModel with_horizon(Index horizon) const;

private:
    std::vector<Mat> transitions_;
    Vec mu0_;
    double gamma_;
    Index horizon_;
    Index n_;
    Index m_;
};

/// T reward vectors of length m*n stored as the columns of an (m*n) x T matrix.
class TimeVaryingReward {
public:
    TimeVaryingReward() = default;
    explicit TimeVaryingReward(Mat values);
    static TimeVaryingReward zeros(Index flat_size, Index horizon);

    Index horizon() const { return values_.cols(); }
    Index flat_size() const { return values_.rows(); }
    auto step(Index t) const { return values_.col(t); }
    auto step(Index t) { return values_.col(t); }
    double operator()(Index t, Index flat) const { return values_(flat, t); }
    const Mat& matrix() const { return values_; }
    Mat& matrix() { return values_; }

private:
    Mat values_;
};

/**
 * Time-varying stochastic policy. table(t) is m x n and column s is the
 * action distribution at state s.
 */
class Policy {
public:
    Policy() = default;
    /// Validates that every column sums to one within kStochasticTol.
    explicit Policy(std::vector<Mat> tables);
    /// Skips validation; used for empirical estimates that carry placeholder columns.
    static Policy unchecked(std::vector<Mat> tables);
    static Policy uniform(Index n_actions, Index n_states, Index horizon);

    Index horizon() const { return static_cast<Index>(tables_.size()); }
    Index n_actions() const { return tables_.empty() ? 0 : tables_.front().rows(); }
    Index n_states() const { return tables_.empty() ? 0 : tables_.front().cols(); }
    const Mat& table(Index t) const { return tables_[static_cast<std::size_t>(t)]; }
    Mat& table(Index t) { return tables_[static_cast<std::size_t>(t)]; }
    double prob(Index t, Index action, Index state) const { return table(t)(action, state); }

    bool strictly_positive() const;
    /// log pi_t in FlatIndex order; throws if an entry is zero.
    Vec log_vector(Index t) const;

private:
    std::vector<Mat> tables_;
};

/// Soft values nu_0..nu_T with nu_T fixed to zero.
class ValueFunction {
public:
    ValueFunction() = default;
    ValueFunction(Index n_states, Index horizon);
    /// values has T+1 columns; the last one must be exactly zero.
    explicit ValueFunction(Mat values);

    Index horizon() const { return values_.cols() - 1; }
    Index n_states() const { return values_.rows(); }
    auto at(Index t) const { return values_.col(t); }
    auto at(Index t) { return values_.col(t); }
    const Mat& matrix() const { return values_; }

private:
    Mat values_;
};

/// P: row FlatIndex(a, s) is row s of transition matrix a.
Mat build_transition_stack(const MdpModel& model);

/// E = 1_m kron I_n.
Mat build_E(Index n_actions, Index n_states);

/// Block bidiagonal Phi_k: -E on the diagonal, gamma*P on the superdiagonal.
Mat build_phi(const MdpModel& model, Index blocks);

/// Dense row-stochastic random transitions, used by tests and generators.
std::vector<Mat> random_transitions(Index n_actions, Index n_states, std::uint64_t seed);

}  // namespace tvirl
