#pragma once

#include "tvirl/mdp.hpp"

namespace tvirl {

struct LeastSquaresSolution {
    Vec x;
    Index rank = 0;
};

/**
 * Minimum-norm least-squares solution of a x = b through a complete
 * orthogonal decomposition (QR with column pivoting followed by an RZ step).
 * Pivots at or below eps * max(rows, cols) * |largest pivot| count as zero.
 */
LeastSquaresSolution min_norm_least_squares(const Mat& a, const Vec& b);

}  // namespace tvirl
