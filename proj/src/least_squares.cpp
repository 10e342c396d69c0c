#include "tvirl/least_squares.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace tvirl {

LeastSquaresSolution min_norm_least_squares(const Mat& a, const Vec& b) {
    if (a.rows() != b.size()) throw std::invalid_argument("min_norm_least_squares: dimension mismatch");
    LeastSquaresSolution out;
    if (a.cols() == 0) {
        out.x = Vec(0);
        return out;
    }
    Eigen::CompleteOrthogonalDecomposition<Mat> cod;
    cod.setThreshold(std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(a.rows(), a.cols())));
    cod.compute(a);
    out.rank = cod.rank();
    out.x = out.rank == 0 ? Vec::Zero(a.cols()) : Vec(cod.solve(b));
    return out;
}

}  // namespace tvirl
