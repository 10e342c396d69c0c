#pragma once

#include "tvirl/mdp.hpp"

#include <stdexcept>
#include <string>

namespace tvirl {

/// The LP hit its iteration limit. Never to be read as "infeasible".
class SolverStalled : public std::runtime_error {
public:
    explicit SolverStalled(const std::string& what) : std::runtime_error(what) {}
};

struct SimplexOptions {
    long max_iterations = 0;  // 0 picks 50 * (rows + columns)
    double optimality_tol = 1e-10;
    double pivot_tol = 1e-9;
    int refactor_every = 100;
    int degenerate_before_bland = 50;
};

struct Phase1Result {
    /// Optimal value of min t s.t. lower - t <= a x <= upper + t, t >= 0.
    double violation = 0.0;
    Vec x;
    long iterations = 0;
    bool used_bland = false;
    /// Refactorizations that found a singular basis and rebuilt it.
    long repairs = 0;
};

/**
 * Phase-1 feasibility LP for the interval system lower <= a x <= upper with
 * free x. Infinite bounds drop the corresponding side. The LP dual (one
 * nonnegative variable per finite bound, a^T (y - z) = 0, sum <= 1) is solved
 * with a dense revised simplex; x and t are read off its simplex multipliers.
 * Dantzig pricing, switching to Bland's rule after a run of degenerate pivots.
 * Optimality is confirmed on a fresh factorization; a numerically singular
 * basis is rebuilt from its independent columns plus artificials.
 * Throws SolverStalled when the iteration limit is reached.
 */
Phase1Result phase1_feasibility(const Mat& a, const Vec& lower, const Vec& upper, const SimplexOptions& options = {});

}  // namespace tvirl
