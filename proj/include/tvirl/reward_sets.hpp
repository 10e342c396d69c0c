#pragma once

#include "tvirl/mdp.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tvirl {

/// Default feasibility tolerance for equality systems built from an exact policy.
inline constexpr double kExactFeasibilityTol = 1e-7;
/// Default for interval systems; the slack already lives in the bound vector.
inline constexpr double kRobustFeasibilityTol = 0.0;

struct VarBlock {
    std::string name;
    Index offset = 0;
    Index size = 0;
};

/// Named column ranges that partition the variable vector.
class VarLayout {
public:
    VarLayout& add(std::string name, Index size);
    const std::vector<VarBlock>& blocks() const { return blocks_; }
    Index total() const;
    /// Throws std::out_of_range for an unknown name.
    const VarBlock& find(const std::string& name) const;

private:
    std::vector<VarBlock> blocks_;
};

/// How the rows of a ConstraintSet were assembled.
enum class SetStructure {
    Generic,
    /// [I_{Tmn} Phi_T] over (r, nu) for the whole horizon.
    FullHorizon,
    /// One shared reward block and a chain of value blocks; see build_invariant_set.
    InvariantChain,
};

struct ChainShape {
    Index flat_size = 0;
    Index n_states = 0;
    Index blocks = 0;
    Index first_step = 0;
};

/**
 * lower <= a_matrix x <= upper, with equal bounds encoding equalities and
 * infinite bounds dropping a side.
 */
struct ConstraintSet {
    Mat a_matrix;
    Vec lower;
    Vec upper;
    VarLayout layout;
    SetStructure structure = SetStructure::Generic;
    ChainShape chain;

    Index rows() const { return a_matrix.rows(); }
    Index cols() const { return a_matrix.cols(); }
    bool is_equality() const;
    /// Throws std::invalid_argument when shapes, bounds or the layout are inconsistent.
    void validate() const;
};

struct FeasiblePoint {
    Vec x;
    Vec r;
    Vec nu;
    /// Max violation of the set at x, recomputed from a_matrix.
    double residual = 0.0;
};

/**
 * Per-step bounds on the log-policy vector, (m*n) x T each. An exact policy
 * gives lower == upper == log pi; an estimate with a bound vector b gives
 * log pi_hat -+ b, with infinite b entries dropping the row.
 */
class LogPolicyBand {
public:
    static LogPolicyBand exact(const Policy& policy);
    /// bound is length T*m*n in time-block order, entries >= 0 or +inf.
    static LogPolicyBand robust(const Policy& pi_hat, const Vec& bound);

    const Mat& lower() const { return lower_; }
    const Mat& upper() const { return upper_; }
    Index horizon() const { return lower_.cols(); }
    Index flat_size() const { return lower_.rows(); }
    bool is_exact() const { return exact_; }

private:
    Mat lower_;
    Mat upper_;
    bool exact_ = true;
};

/// [I Phi_T][r; nu] = Xi for the exact policy.
ConstraintSet build_exact_set(const MdpModel& model, const Policy& policy);

/// Xi_hat - b <= [I Phi_T][r; nu] <= Xi_hat + b.
ConstraintSet build_robust_set(const MdpModel& model, const Policy& pi_hat, const Vec& bound);

ConstraintSet build_full_set(const MdpModel& model, const LogPolicyBand& band);

/**
 * Time-invariant reward over steps [first, last): one shared reward block,
 * value blocks nu_first..nu_{last-1}, and nu_boundary (= nu_last) folded into
 * the right-hand side of the final block row.
 */
ConstraintSet build_invariant_set(const MdpModel& model, const LogPolicyBand& band, Index first, Index last,
                                  const Vec& nu_boundary);
ConstraintSet build_invariant_set(const MdpModel& model, const Policy& policy, Index first, Index last,
                                  const Vec& nu_boundary);

/// Largest bound violation of a_matrix x (zero when x is inside the set, +inf when a_matrix x is not finite).
double max_violation(const ConstraintSet& cs, const Vec& x);

/**
 * Feasibility oracle.
 *
 * Equality systems use the minimum-norm least-squares point and are feasible
 * when its max residual is <= tol. Invariant chains are first reduced to the
 * reward block alone: the action-0 rows give each value block as an affine
 * function of the reward, computed backward from the boundary, and the other
 * actions' rows minus the action-0 row leave an (L (m-1) n) x (m n) system.
 * Interval systems run the phase-1 LP and are feasible when its optimum is
 * <= tol (plus a 1e-10 rounding floor).
 *
 * Throws SolverStalled if the LP runs out of iterations.
 */
std::optional<FeasiblePoint> check_feasible(const ConstraintSet& cs, double tol);

/// Largest residual check_feasible accepts for cs at tolerance tol.
double feasibility_threshold(const ConstraintSet& cs, double tol);

/// Minimum-norm least-squares point of an equality system, feasible or not.
FeasiblePoint least_squares_point(const ConstraintSet& cs);

/// Max violation of the full-horizon band by (reward, nu), without forming the dense matrix.
double band_violation(const MdpModel& model, const LogPolicyBand& band, const TimeVaryingReward& reward,
                      const ValueFunction& nu);

/// "rows cols" header, dense rows, then a lower line and an upper line.
void write_constraint_set(std::ostream& out, const ConstraintSet& cs);
/// Reads the dump format back as a Generic set with a single "x" block.
ConstraintSet read_constraint_set(std::istream& in);

}  // namespace tvirl
