#include "tvirl/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace tvirl {

namespace {

struct DualColumn {
    Index row;    // constraint row of a
    double sign;  // +1 for a lower bound, -1 for an upper bound
    double cost;
};

}  // namespace

Phase1Result phase1_feasibility(const Mat& a, const Vec& lower, const Vec& upper, const SimplexOptions& options) {
    if (lower.size() != a.rows() || upper.size() != a.rows())
        throw std::invalid_argument("phase1_feasibility: bound vectors do not match the matrix");
    const Index n_x = a.cols();
    const Index p = n_x + 1;  // equality rows of the dual: a^T (y - z) = 0 and the simplex row

    std::vector<DualColumn> cols;
    for (Index i = 0; i < a.rows(); ++i) {
        if (std::isfinite(lower(i))) cols.push_back({i, 1.0, lower(i)});
        if (std::isfinite(upper(i))) cols.push_back({i, -1.0, -upper(i)});
    }
    const Index n_struct = static_cast<Index>(cols.size());
    const Index slack = n_struct;  // sigma, the slack of sum(y + z) <= 1
    auto column = [&](Index j, Vec& out) {
        out.setZero(p);
        if (j == slack) {
            out(n_x) = 1.0;
            return;
        }
        const DualColumn& c = cols[static_cast<std::size_t>(j)];
        out.head(n_x) = c.sign * a.row(c.row).transpose();
        out(n_x) = 1.0;
    };
    auto cost = [&](Index j) { return j == slack ? 0.0 : cols[static_cast<std::size_t>(j)].cost; };

    // basis[k] >= 0 is a structural column; -1 marks the fixed-at-zero artificial of row k
    std::vector<Index> basis(static_cast<std::size_t>(p), -1);
    basis[static_cast<std::size_t>(n_x)] = slack;
    std::vector<char> in_basis(static_cast<std::size_t>(n_struct + 1), 0);
    in_basis[static_cast<std::size_t>(slack)] = 1;

    Mat binv = Mat::Identity(p, p);
    Vec xb = Vec::Zero(p);
    xb(n_x) = 1.0;
    Vec rhs = Vec::Zero(p);
    rhs(n_x) = 1.0;

    const long max_iter = options.max_iterations > 0 ? options.max_iterations : 50L * (p + n_struct + 1);
    Phase1Result result;
    Vec cb(p), pi(p), alpha(p), col(p);
    int degenerate_run = 0;
    int since_refactor = 0;

    auto basis_matrix = [&]() {
        Mat b = Mat::Zero(p, p);
        for (Index k = 0; k < p; ++k) {
            const Index j = basis[static_cast<std::size_t>(k)];
            if (j < 0) {
                b(k, k) = 1.0;
            } else {
                column(j, col);
                b.col(k) = col;
            }
        }
        return b;
    };

    // Drops dependent structural columns and fills the freed rank with
    // artificials on rows chosen by a pivoted LU of the kept columns.
    auto repair = [&]() {
        std::vector<Index> structural;
        for (Index k = 0; k < p; ++k)
            if (basis[static_cast<std::size_t>(k)] >= 0) structural.push_back(basis[static_cast<std::size_t>(k)]);
        Mat s_cols(p, static_cast<Index>(structural.size()));
        for (std::size_t i = 0; i < structural.size(); ++i) {
            column(structural[i], col);
            s_cols.col(static_cast<Index>(i)) = col;
        }
        Eigen::ColPivHouseholderQR<Mat> qr(s_cols);
        qr.setThreshold(options.pivot_tol);
        const Index rank = qr.rank();
        std::vector<Index> kept;
        for (Index i = 0; i < rank; ++i) kept.push_back(structural[static_cast<std::size_t>(qr.colsPermutation().indices()(i))]);
        Mat kept_cols(p, rank);
        for (Index i = 0; i < rank; ++i) kept_cols.col(i) = s_cols.col(qr.colsPermutation().indices()(i));
        // rows of kept_cols forming a nonsingular block; the rest get artificials
        Eigen::FullPivLU<Mat> lu(kept_cols.transpose());
        std::vector<char> pivot_row(static_cast<std::size_t>(p), 0);
        for (Index i = 0; i < rank; ++i) pivot_row[static_cast<std::size_t>(lu.permutationQ().indices()(i))] = 1;
        std::fill(in_basis.begin(), in_basis.end(), 0);
        std::size_t next = 0;
        for (Index k = 0; k < p; ++k) {
            if (!pivot_row[static_cast<std::size_t>(k)]) {
                basis[static_cast<std::size_t>(k)] = -1;
            } else {
                basis[static_cast<std::size_t>(k)] = kept[next++];
                in_basis[static_cast<std::size_t>(basis[static_cast<std::size_t>(k)])] = 1;
            }
        }
        ++result.repairs;
    };

    auto refactor = [&]() {
        Eigen::FullPivLU<Mat> lu(basis_matrix());
        lu.setThreshold(options.pivot_tol);
        if (!lu.isInvertible()) {
            repair();
            lu.compute(basis_matrix());
        }
        binv = lu.inverse();
        xb = binv * rhs;
        for (Index k = 0; k < p; ++k) {
            if (basis[static_cast<std::size_t>(k)] < 0) xb(k) = 0.0;
            else if (xb(k) < 0.0) xb(k) = 0.0;
        }
        since_refactor = 0;
    };

    for (long iter = 0;; ++iter) {
        if (iter >= max_iter)
            throw SolverStalled("phase-1 simplex stalled after " + std::to_string(iter) + " iterations (" +
                                std::to_string(a.rows()) + " rows, " + std::to_string(n_x) + " columns)");
        for (Index k = 0; k < p; ++k) {
            const Index j = basis[static_cast<std::size_t>(k)];
            cb(k) = j < 0 ? 0.0 : cost(j);
        }
        pi.noalias() = binv.transpose() * cb;
        const Vec activity = a * pi.head(n_x);

        const bool bland = degenerate_run >= options.degenerate_before_bland;
        result.used_bland = result.used_bland || bland;
        Index entering = -1;
        double best = options.optimality_tol;
        for (Index j = 0; j <= n_struct; ++j) {
            if (in_basis[static_cast<std::size_t>(j)]) continue;
            double d;
            if (j == slack) {
                d = -pi(n_x);
            } else {
                const DualColumn& c = cols[static_cast<std::size_t>(j)];
                d = c.cost - (c.sign * activity(c.row) + pi(n_x));
            }
            if (d > best) {
                entering = j;
                if (bland) break;
                best = d;
            }
        }
        if (entering < 0 && since_refactor > 0) {
            // confirm optimality against a fresh factorization
            refactor();
            continue;
        }
        if (entering < 0) {
            if (!pi.allFinite())
                throw SolverStalled("phase-1 simplex lost numerical accuracy (" + std::to_string(a.rows()) + " rows, " +
                                    std::to_string(n_x) + " columns)");
            result.iterations = iter;
            result.x = pi.head(n_x);
            result.violation = std::max(0.0, cb.dot(xb));
            return result;
        }

        column(entering, col);
        alpha.noalias() = binv * col;
        Index leave = -1;
        double ratio = std::numeric_limits<double>::infinity();
        double leave_pivot = 0.0;
        for (Index k = 0; k < p; ++k) {
            const bool artificial = basis[static_cast<std::size_t>(k)] < 0;
            double r;
            if (artificial) {
                if (std::abs(alpha(k)) <= options.pivot_tol) continue;
                r = 0.0;
            } else {
                if (alpha(k) <= options.pivot_tol) continue;
                r = std::max(0.0, xb(k)) / alpha(k);
            }
            bool take = false;
            if (r < ratio - 1e-14) {
                take = true;
            } else if (r <= ratio + 1e-14) {
                if (bland) {
                    // smallest variable index; artificials count as lowest
                    const Index cur = leave < 0 ? std::numeric_limits<Index>::max() : basis[static_cast<std::size_t>(leave)];
                    take = basis[static_cast<std::size_t>(k)] < cur;
                } else {
                    take = std::abs(alpha(k)) > std::abs(leave_pivot);
                }
            }
            if (take) {
                leave = k;
                ratio = std::min(ratio, r);
                leave_pivot = alpha(k);
            }
        }
        if (leave < 0) throw std::logic_error("phase1_feasibility: unbounded dual, which cannot happen");

        degenerate_run = ratio > 0.0 ? 0 : degenerate_run + 1;
        xb -= ratio * alpha;
        xb(leave) = ratio;
        const Vec pivot_row = binv.row(leave) / alpha(leave);
        for (Index k = 0; k < p; ++k) {
            if (k == leave) continue;
            if (alpha(k) != 0.0) binv.row(k) -= alpha(k) * pivot_row;
        }
        binv.row(leave) = pivot_row;

        const Index old = basis[static_cast<std::size_t>(leave)];
        if (old >= 0) in_basis[static_cast<std::size_t>(old)] = 0;
        basis[static_cast<std::size_t>(leave)] = entering;
        in_basis[static_cast<std::size_t>(entering)] = 1;
        for (Index k = 0; k < p; ++k)
            if (xb(k) < 0.0) xb(k) = 0.0;

        if (++since_refactor >= options.refactor_every) refactor();
    }
}

}  // namespace tvirl
