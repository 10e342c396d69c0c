#pragma once

#include "tvirl/mdp.hpp"
#include "tvirl/reward_sets.hpp"

#include <array>
#include <vector>

namespace tvirl {

struct AdmmParams {
    double rho = 1.0;
    long max_iter = 5000;
    double primal_tol = 1e-6;
    double dual_tol = 1e-6;
    /// Residual balancing: scale rho by 2 when one residual exceeds the other tenfold.
    bool adapt_rho = true;
    double ridge = 1e-10;

    void validate() const;
};

struct AdmmDiagnostics {
    long iterations = 0;
    bool converged = false;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double final_rho = 0.0;
    double nuclear_norm = 0.0;
    /// Max violation of the input constraint set at the returned point.
    double constraint_violation = 0.0;
    /// Moving-average windows in which the combined residual went up.
    long residual_increases = 0;
    /// (iteration, primal, dual) sampled every `trace_stride` iterations.
    std::vector<std::array<double, 3>> trace;
    long trace_stride = 1;
};

struct NuclearSolution {
    TimeVaryingReward reward;
    Vec nu;
    AdmmDiagnostics diagnostics;
};

struct FeatureDecomposition {
    /// (m n) x K, orthonormal columns.
    Mat u_basis;
    /// K x T, column t is alpha_t.
    Mat weights;
    double rank_tol_used = 0.0;
    Vec singular_values;

    Index rank() const { return u_basis.cols(); }
};

struct AlignedFeatures {
    /// u_basis * G.
    Mat basis;
    /// Rows of G^{-1} * weights, each standardized to zero mean and unit variance.
    Mat weights;
    Mat change_of_basis;
};

/// Sum of singular values.
double nuclear_norm(const Mat& matrix);

/// Prox of threshold * nuclear norm: singular values shrunk by threshold and clipped at zero.
Mat svt(const Mat& matrix, double threshold);

/**
 * Nuclear-norm minimization of the reward matrix over a constraint set whose
 * columns start with the T*(m n) reward block ("r") followed by value blocks.
 *
 * Scaled ADMM on min ||M||_* s.t. mat(r) = M, A x = z, lower <= z <= upper:
 * a joint (r, nu) least-squares step with a ridge, then singular value
 * thresholding for M and clipping for z. The (r, nu) normal matrix does not
 * depend on rho, so it is factored once. When the reward columns of A are an
 * identity block the solve goes through the Schur complement on nu.
 * A run that hits max_iter is returned with converged = false.
 */
NuclearSolution solve_nuclear(const ConstraintSet& cs, Index flat_size, Index horizon, const AdmmParams& params = {});

/// K = #{sigma_i > rank_tol * sigma_1}; u_basis the leading left singular vectors, weights = u_basis^T rm.
FeatureDecomposition decompose(const Mat& reward_matrix, double rank_tol = 1e-4);

/**
 * Change of basis G minimizing ||u_basis G - u_ref||_F, then standardized
 * weight rows. When ref_weights (K x T) is non-empty each row's sign is chosen
 * to correlate positively with it. Throws std::runtime_error listing the
 * principal angles if G is numerically singular.
 */
AlignedFeatures align_to_reference(const FeatureDecomposition& fd, const Mat& u_ref, const Mat& ref_weights = Mat());

/// Principal angles (radians, ascending) between the column spans of a and b.
Vec principal_angles(const Mat& a, const Mat& b);

/// Largest principal angle computed from sines, accurate for small angles.
double largest_principal_angle(const Mat& a, const Mat& b);

/// Pearson correlation of two equal-length vectors.
double correlation(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& y);

}  // namespace tvirl
