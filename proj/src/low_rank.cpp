#include "tvirl/low_rank.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tvirl {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

Mat orthonormal_basis(const Mat& a) {
    Eigen::HouseholderQR<Mat> qr(a);
    return qr.householderQ() * Mat::Identity(a.rows(), a.cols());
}

// (S^T S + A^T A + ridge I)^{-1}, where S selects the reward block.
class NormalSolver {
public:
    NormalSolver(const Mat& a, Index reward_size, double ridge) : reward_size_(reward_size), ridge_(ridge) {
        const Index rows = a.rows();
        schur_ = rows == reward_size && a.leftCols(reward_size).isIdentity(0.0);
        if (schur_) {
            coupling_ = a.rightCols(a.cols() - reward_size).sparseView();
            const Mat btb = Mat(coupling_.transpose() * coupling_);
            const double d = 2.0 + ridge;
            Mat k = btb * ((1.0 + ridge) / d);
            k.diagonal().array() += ridge;
            ldlt_.compute(k);
        } else {
            Mat h = a.transpose() * a;
            h.diagonal().head(reward_size).array() += 1.0;
            h.diagonal().array() += ridge;
            ldlt_.compute(h);
        }
        if (ldlt_.info() != Eigen::Success) throw std::runtime_error("solve_nuclear: normal equations factorization failed");
    }

    Vec solve(const Vec& g) const {
        if (!schur_) return ldlt_.solve(g);
        const double d = 2.0 + ridge_;
        const auto gr = g.head(reward_size_);
        const auto gn = g.tail(g.size() - reward_size_);
        Vec x(g.size());
        const Vec nu = ldlt_.solve(Vec(gn - coupling_.transpose() * gr / d));
        x.tail(nu.size()) = nu;
        x.head(reward_size_) = (gr - coupling_ * nu) / d;
        return x;
    }

private:
    Index reward_size_;
    double ridge_;
    bool schur_ = false;
    SpMat coupling_;
    Eigen::LDLT<Mat> ldlt_;
};

Vec clip(const Vec& v, const Vec& lower, const Vec& upper) { return v.cwiseMax(lower).cwiseMin(upper); }

}  // namespace

void AdmmParams::validate() const {
    if (!(rho > 0.0) || max_iter < 1 || !(primal_tol > 0.0) || !(dual_tol > 0.0) || !(ridge >= 0.0))
        throw std::invalid_argument("AdmmParams: rho, max_iter and tolerances must be positive");
}

double nuclear_norm(const Mat& matrix) {
    if (matrix.size() == 0) return 0.0;
    return Eigen::BDCSVD<Mat>(matrix).singularValues().sum();
}

Mat svt(const Mat& matrix, double threshold) {
    if (!(threshold >= 0.0)) throw std::invalid_argument("svt: threshold must be nonnegative");
    if (matrix.size() == 0) return matrix;
    Eigen::BDCSVD<Mat> svd(matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) throw std::runtime_error("svt: SVD failed");
    const Vec shrunk = (svd.singularValues().array() - threshold).max(0.0).matrix();
    Index keep = 0;
    while (keep < shrunk.size() && shrunk(keep) > 0.0) ++keep;
    if (keep == 0) return Mat::Zero(matrix.rows(), matrix.cols());
    return svd.matrixU().leftCols(keep) * shrunk.head(keep).asDiagonal() * svd.matrixV().leftCols(keep).transpose();
}

NuclearSolution solve_nuclear(const ConstraintSet& cs, Index flat_size, Index horizon, const AdmmParams& params) {
    params.validate();
    cs.validate();
    const Index reward_size = flat_size * horizon;
    const VarBlock& rblock = cs.layout.find("r");
    if (rblock.offset != 0 || rblock.size != reward_size)
        throw std::invalid_argument("solve_nuclear: constraint set reward block does not match (m n) x T = " +
                                    std::to_string(flat_size) + " x " + std::to_string(horizon));

    const Mat& a = cs.a_matrix;
    const SpMat a_sparse = a.sparseView();
    const SpMat a_sparse_t = a_sparse.transpose();
    const NormalSolver normal(a, reward_size, params.ridge);

    double rho = params.rho;
    Vec x = Vec::Zero(cs.cols());
    Mat big_m = Mat::Zero(flat_size, horizon);
    Vec z = clip(Vec::Zero(cs.rows()), cs.lower, cs.upper);
    Mat dual_m = Mat::Zero(flat_size, horizon);  // scaled duals
    Vec dual_z = Vec::Zero(cs.rows());

    NuclearSolution out;
    AdmmDiagnostics& diag = out.diagnostics;
    diag.trace_stride = std::max<long>(1, params.max_iter / 200);
    constexpr std::size_t kWindow = 50;
    std::deque<double> window;
    double window_sum = 0.0;
    double prev_avg = std::numeric_limits<double>::infinity();

    Vec g(cs.cols());
    for (long iter = 1; iter <= params.max_iter; ++iter) {
        g.setZero();
        g.head(reward_size) = (big_m - dual_m).reshaped();
        g.noalias() += a_sparse_t * (z - dual_z);
        x = normal.solve(g);

        const auto r_mat = x.head(reward_size).reshaped(flat_size, horizon);
        const Vec ax = a_sparse * x;
        const Mat m_new = svt(r_mat + dual_m, 1.0 / rho);
        const Vec z_new = clip(ax + dual_z, cs.lower, cs.upper);

        const Mat res_m = r_mat - m_new;
        const Vec res_z = ax - z_new;
        dual_m += res_m;
        dual_z += res_z;

        const double primal = std::max(res_m.cwiseAbs().maxCoeff(), res_z.size() ? res_z.cwiseAbs().maxCoeff() : 0.0);
        Vec dual_vec = a_sparse_t * (z_new - z);
        dual_vec.head(reward_size) += (m_new - big_m).reshaped();
        const double dual = rho * dual_vec.cwiseAbs().maxCoeff();
        big_m = m_new;
        z = z_new;

        diag.iterations = iter;
        diag.primal_residual = primal;
        diag.dual_residual = dual;
        if (iter % diag.trace_stride == 0) diag.trace.push_back({static_cast<double>(iter), primal, dual});

        window.push_back(primal + dual);
        window_sum += primal + dual;
        if (window.size() > kWindow) {
            window_sum -= window.front();
            window.pop_front();
        }
        if (window.size() == kWindow && iter % kWindow == 0) {
            const double avg = window_sum / static_cast<double>(kWindow);
            if (avg > prev_avg) ++diag.residual_increases;
            prev_avg = avg;
        }

        if (primal <= params.primal_tol && dual <= params.dual_tol) {
            diag.converged = true;
            break;
        }
        if (params.adapt_rho && iter % 10 == 0) {
            if (primal > 10.0 * dual) {
                rho *= 2.0;
                dual_m /= 2.0;
                dual_z /= 2.0;
            } else if (dual > 10.0 * primal) {
                rho /= 2.0;
                dual_m *= 2.0;
                dual_z *= 2.0;
            }
        }
    }

    diag.final_rho = rho;
    out.reward = TimeVaryingReward(Mat(x.head(reward_size).reshaped(flat_size, horizon)));
    out.nu = x.tail(cs.cols() - reward_size);
    diag.nuclear_norm = nuclear_norm(out.reward.matrix());
    diag.constraint_violation = max_violation(cs, x);
    return out;
}

FeatureDecomposition decompose(const Mat& reward_matrix, double rank_tol) {
    if (!(rank_tol > 0.0)) throw std::invalid_argument("decompose: rank_tol must be positive");
    FeatureDecomposition fd;
    fd.rank_tol_used = rank_tol;
    if (reward_matrix.size() == 0) {
        fd.u_basis = Mat(reward_matrix.rows(), 0);
        fd.weights = Mat(0, reward_matrix.cols());
        return fd;
    }
    Eigen::JacobiSVD<Mat> svd(reward_matrix, Eigen::ComputeThinU);
    fd.singular_values = svd.singularValues();
    const double top = fd.singular_values(0);
    Index k = 0;
    if (top > 0.0)
        while (k < fd.singular_values.size() && fd.singular_values(k) > rank_tol * top) ++k;
    fd.u_basis = svd.matrixU().leftCols(k);
    fd.weights = fd.u_basis.transpose() * reward_matrix;
    return fd;
}

Vec principal_angles(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("principal_angles: row mismatch");
    const Mat qa = orthonormal_basis(a);
    const Mat qb = orthonormal_basis(b);
    const Vec cosines = Eigen::JacobiSVD<Mat>(qa.transpose() * qb).singularValues();
    Vec angles(cosines.size());
    for (Index i = 0; i < cosines.size(); ++i) angles(i) = std::acos(std::clamp(cosines(i), -1.0, 1.0));
    return angles;  // cosines descend, so angles ascend
}

double largest_principal_angle(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("largest_principal_angle: row mismatch");
    if (a.cols() != b.cols())
        return std::numbers::pi / 2;  // subspaces of different dimension are never aligned
    const Mat qa = orthonormal_basis(a);
    const Mat qb = orthonormal_basis(b);
    const Mat residual = qb - qa * (qa.transpose() * qb);
    const double sine = Eigen::JacobiSVD<Mat>(residual).singularValues()(0);
    return std::asin(std::clamp(sine, 0.0, 1.0));
}

double correlation(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("correlation: need equal lengths >= 2");
    const Vec xc = x.array() - x.mean();
    const Vec yc = y.array() - y.mean();
    const double denom = xc.norm() * yc.norm();
    return denom > 0.0 ? xc.dot(yc) / denom : 0.0;
}

AlignedFeatures align_to_reference(const FeatureDecomposition& fd, const Mat& u_ref, const Mat& ref_weights) {
    const Index k = fd.rank();
    if (u_ref.cols() != k || u_ref.rows() != fd.u_basis.rows())
        throw std::invalid_argument("align_to_reference: reference has " + std::to_string(u_ref.cols()) +
                                    " columns, decomposition has rank " + std::to_string(k));
    if (ref_weights.size() != 0 && (ref_weights.rows() != k || ref_weights.cols() != fd.weights.cols()))
        throw std::invalid_argument("align_to_reference: reference weights have the wrong shape");

    AlignedFeatures out;
    // least squares with orthonormal columns: G = U^T U_ref
    out.change_of_basis = fd.u_basis.transpose() * u_ref;
    const Vec sv = Eigen::JacobiSVD<Mat>(out.change_of_basis).singularValues();
    const double scale = u_ref.colwise().norm().maxCoeff();
    if (k > 0 && !(sv(k - 1) > 1e-8 * std::max(scale, 1.0))) {
        const Vec angles = principal_angles(fd.u_basis, u_ref);
        std::ostringstream msg;
        msg << "align_to_reference: change of basis is singular; principal angles (rad):";
        for (Index i = 0; i < angles.size(); ++i) msg << ' ' << angles(i);
        msg << " (smallest " << angles.minCoeff() << ", largest " << angles.maxCoeff() << ")";
        throw std::runtime_error(msg.str());
    }
    out.basis = fd.u_basis * out.change_of_basis;
    out.weights = out.change_of_basis.partialPivLu().solve(fd.weights);

    for (Index i = 0; i < k; ++i) {
        auto row = out.weights.row(i);
        row.array() -= row.mean();
        const double sd = std::sqrt(row.squaredNorm() / static_cast<double>(std::max<Index>(row.size(), 1)));
        if (sd > 0.0) row /= sd;
        if (ref_weights.size() != 0 && correlation(row.transpose(), ref_weights.row(i).transpose()) < 0.0) {
            row *= -1.0;
            out.basis.col(i) *= -1.0;
        }
    }
    return out;
}

}  // namespace tvirl
