#include "oracles.hpp"

#include "tvirl/bench.hpp"
#include "tvirl/low_rank.hpp"
#include "tvirl/rng.hpp"
#include "tvirl/soft_rl.hpp"

#include <doctest.h>

#include <cmath>

using namespace tvirl;

namespace {

Mat svt_reference(const Mat& a, double threshold) {
    Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec shrunk = (svd.singularValues().array() - threshold).cwiseMax(0.0);
    return svd.matrixU() * shrunk.asDiagonal() * svd.matrixV().transpose();
}

// Inverse-map point with nu = 0: r_t = log pi_t.
Mat log_policy_matrix(const Policy& pi) {
    Mat out(pi.n_actions() * pi.n_states(), pi.horizon());
    for (Index t = 0; t < pi.horizon(); ++t) out.col(t) = pi.log_vector(t);
    return out;
}

}  // namespace

TEST_CASE("svt") {
    Mat d = Mat::Zero(2, 2);
    d(0, 0) = 3.0;
    d(1, 1) = 1.0;
    Mat expected = Mat::Zero(2, 2);
    expected(0, 0) = 1.0;
    CHECK((svt(d, 2.0) - expected).cwiseAbs().maxCoeff() <= 1e-14);

    const Mat a = oracle::random_matrix(7, 5, 1);
    CHECK((svt(a, 0.0) - a).cwiseAbs().maxCoeff() <= 1e-12);

    const Mat b = oracle::random_matrix(6, 4, 2);
    const Vec sigma = oracle::singular_values(b);
    const double expected_nn = (sigma.array() - 0.5).cwiseMax(0.0).sum();
    CHECK(std::abs(nuclear_norm(svt(b, 0.5)) - expected_nn) <= 1e-10);
    CHECK(std::abs(nuclear_norm(b) - sigma.sum()) <= 1e-10);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Mat m = oracle::random_matrix(3 + static_cast<Index>(seed % 5), 2 + static_cast<Index>(seed % 4), seed + 10);
        for (double thr : {0.1, 0.7, 2.0, 100.0}) CHECK((svt(m, thr) - svt_reference(m, thr)).cwiseAbs().maxCoeff() <= 1e-10);
    }
    CHECK(svt(b, 1e6).isZero(0.0));
    CHECK_THROWS_AS(svt(b, -1.0), std::invalid_argument);
}

TEST_CASE("solve_nuclear: zero reward is admissible") {
    const MdpModel model(random_transitions(3, 3, 4), Vec::Constant(3, 1.0 / 3), 0.9, 5);
    const Policy pi = soft_backward(model, TimeVaryingReward::zeros(9, 5)).policy;
    const NuclearSolution sol = solve_nuclear(build_exact_set(model, pi), 9, 5);
    CHECK(sol.diagnostics.converged);
    CHECK(sol.diagnostics.nuclear_norm <= 1e-5);
    CHECK(sol.diagnostics.constraint_violation <= 1e-6);
}

TEST_CASE("solve_nuclear: rank-one state-indicator reward on a two-state model") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const Index m = 2, n = 2, horizon = 4;
        const MdpModel model(random_transitions(m, n, seed), Vec::Constant(n, 0.5), 0.9, horizon);
        Vec u(m * n);
        u << 1, 0, 1, 0;
        u.normalize();
        Rng rng(seed + 100);
        Mat alpha(1, horizon);
        for (Index t = 0; t < horizon; ++t) alpha(0, t) = rng.uniform(0.5, 2.0);
        const Policy pi = soft_backward(model, TimeVaryingReward(u * alpha)).policy;
        const ConstraintSet cs = build_exact_set(model, pi);
        const NuclearSolution sol = solve_nuclear(cs, m * n, horizon);
        CHECK(sol.diagnostics.converged);
        const Vec sigma = oracle::singular_values(sol.reward.matrix());
        CHECK(sigma(1) / sigma(0) <= 1e-5);
        CHECK(sol.diagnostics.constraint_violation <= 1e-6);
        Vec x(cs.cols());
        x << sol.reward.matrix().reshaped(), sol.nu;
        CHECK(max_violation(cs, x) == doctest::Approx(sol.diagnostics.constraint_violation).epsilon(1e-12));
    }
}

TEST_CASE("solve_nuclear: rank-two indicator features on a 3x3 grid") {
    const GridSpec spec = open_grid_spec(3, 3);
    const Index horizon = 15;
    const MdpModel model = make_gridworld(spec, 0.9, horizon);
    const Mat u = indicator_features(spec, {spec.landmarks.at("home"), spec.landmarks.at("water")});
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto [r, w] = random_walk_feature_reward(u, horizon, 0.15, seed);
        const Policy pi = soft_backward(model, r).policy;
        const ConstraintSet cs = build_exact_set(model, pi);
        const NuclearSolution sol = solve_nuclear(cs, model.flat_size(), horizon);
        CHECK(sol.diagnostics.converged);
        CHECK(sol.diagnostics.constraint_violation <= 1e-6);
        const FeatureDecomposition fd = decompose(sol.reward.matrix(), 1e-4);
        CHECK(fd.rank() == 2);
        CHECK(policy_distance(soft_backward(model, sol.reward).policy, pi) <= 1e-5);

        // relaxation sanity against the baseline feasible points
        CHECK(sol.diagnostics.nuclear_norm <= nuclear_norm(log_policy_matrix(pi)));
        CHECK(sol.diagnostics.nuclear_norm <= nuclear_norm(r.matrix()) * (1.0 + 1e-6));
        const FeasiblePoint ls = least_squares_point(cs);
        CHECK(sol.diagnostics.nuclear_norm <= nuclear_norm(ls.r.reshaped(model.flat_size(), horizon)) * (1.0 + 1e-6));
    }
}

TEST_CASE("solve_nuclear: robust interval constraints") {
    const GridSpec spec = open_grid_spec(2, 2);
    const Index horizon = 6;
    const MdpModel model = make_gridworld(spec, 0.9, horizon);
    const Mat u = indicator_features(spec, {Cell{0, 0}});
    const auto [r, w] = random_walk_feature_reward(u, horizon, 0.15, 3);
    const Policy pi = soft_backward(model, r).policy;
    const Vec b = Vec::Constant(horizon * model.flat_size(), 0.05);
    const ConstraintSet cs = build_robust_set(model, pi, b);
    const NuclearSolution sol = solve_nuclear(cs, model.flat_size(), horizon);
    CHECK(sol.diagnostics.converged);
    CHECK(sol.diagnostics.constraint_violation <= 1e-6);
    CHECK(sol.diagnostics.nuclear_norm <= nuclear_norm(solve_nuclear(build_exact_set(model, pi), model.flat_size(), horizon)
                                                          .reward.matrix()) +
                                              1e-6);
}

TEST_CASE("solve_nuclear diagnostics and errors") {
    const MdpModel model(random_transitions(2, 3, 1), Vec::Constant(3, 1.0 / 3), 0.9, 4);
    const Policy pi = soft_backward(model, TimeVaryingReward(oracle::random_matrix(6, 4, 2))).policy;
    const ConstraintSet cs = build_exact_set(model, pi);
    AdmmParams few;
    few.max_iter = 3;
    const NuclearSolution early = solve_nuclear(cs, 6, 4, few);
    CHECK_FALSE(early.diagnostics.converged);
    CHECK(early.diagnostics.iterations == 3);

    const NuclearSolution full = solve_nuclear(cs, 6, 4);
    CHECK(full.diagnostics.converged);
    CHECK(full.diagnostics.primal_residual <= 1e-6);
    CHECK(full.diagnostics.dual_residual <= 1e-6);
    CHECK(full.diagnostics.constraint_violation <= 1e-6);
    CHECK_FALSE(full.diagnostics.trace.empty());
    CHECK(full.diagnostics.residual_increases >= 0);
    CHECK(full.diagnostics.final_rho > 0.0);

    CHECK_THROWS_AS(solve_nuclear(cs, 6, 3), std::invalid_argument);
    AdmmParams bad;
    bad.rho = 0.0;
    CHECK_THROWS_AS(solve_nuclear(cs, 6, 4, bad), std::invalid_argument);
}

TEST_CASE("decompose") {
    const FeatureDecomposition zero = decompose(Mat::Zero(6, 4), 1e-4);
    CHECK(zero.rank() == 0);
    CHECK(zero.weights.rows() == 0);

    Vec u = oracle::random_matrix(6, 1, 3).col(0);
    u.normalize();
    const Vec alpha = oracle::random_matrix(5, 1, 4).col(0);
    const FeatureDecomposition one = decompose(u * alpha.transpose(), 1e-4);
    REQUIRE(one.rank() == 1);
    const double sign = one.u_basis.col(0).dot(u) > 0 ? 1.0 : -1.0;
    CHECK((sign * one.u_basis.col(0) - u).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((sign * one.weights.row(0).transpose() - alpha).cwiseAbs().maxCoeff() <= 1e-12);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Mat r = oracle::random_matrix(12, 3, seed) * oracle::random_matrix(3, 9, seed + 1);
        const FeatureDecomposition fd = decompose(r, 1e-4);
        CHECK(fd.rank() == 3);
        CHECK((fd.u_basis * fd.weights - r).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((fd.u_basis.transpose() * fd.u_basis - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-10);
    }
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        // full-rank input: reconstruction error bounded by the dropped spectrum
        const Mat r = oracle::random_matrix(8, 6, seed + 20);
        const double tol = 0.3;
        const FeatureDecomposition fd = decompose(r, tol);
        const double bound = tol * fd.singular_values(0) * std::sqrt(6.0);
        CHECK((fd.u_basis * fd.weights - r).norm() <= bound);
        CHECK(fd.rank_tol_used == tol);
    }
    CHECK_THROWS_AS(decompose(Mat::Ones(2, 2), 0.0), std::invalid_argument);
}

TEST_CASE("align_to_reference") {
    const GridSpec spec = open_grid_spec();
    const Mat u_ref = indicator_features(spec, {spec.landmarks.at("home"), spec.landmarks.at("water")});
    const Mat weights = oracle::random_matrix(2, 10, 5);

    SUBCASE("identical basis") {
        FeatureDecomposition fd;
        Mat q = u_ref;
        q.col(0).normalize();
        q.col(1).normalize();
        fd.u_basis = q;
        fd.weights = weights;
        const AlignedFeatures al = align_to_reference(fd, q, weights);
        CHECK((al.change_of_basis - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
        for (Index i = 0; i < 2; ++i) {
            CHECK(correlation(al.weights.row(i).transpose(), weights.row(i).transpose()) == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(std::abs(al.weights.row(i).mean()) <= 1e-12);
            CHECK(std::abs(al.weights.row(i).squaredNorm() / 10.0 - 1.0) <= 1e-12);
        }
    }
    SUBCASE("swapped columns") {
        Mat q = u_ref;
        q.col(0).normalize();
        q.col(1).normalize();
        FeatureDecomposition fd;
        fd.u_basis = Mat(q.rows(), 2);
        fd.u_basis << q.col(1), q.col(0);
        fd.weights = Mat(2, 10);
        fd.weights << weights.row(1), weights.row(0);
        const AlignedFeatures al = align_to_reference(fd, q);
        Mat perm(2, 2);
        perm << 0, 1, 1, 0;
        CHECK((al.change_of_basis - perm).cwiseAbs().maxCoeff() <= 1e-12);
        for (Index i = 0; i < 2; ++i)
            CHECK(correlation(al.weights.row(i).transpose(), weights.row(i).transpose()) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("rotated ground-truth basis") {
        Eigen::HouseholderQR<Mat> qr(u_ref);
        const Mat q = qr.householderQ() * Mat::Identity(u_ref.rows(), 2);
        const double angle = 0.7;
        Mat rot(2, 2);
        rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
        FeatureDecomposition fd;
        fd.u_basis = q * rot;
        const Mat ref_w = oracle::random_matrix(2, 10, 6);
        fd.weights = fd.u_basis.transpose() * (u_ref * ref_w);
        const AlignedFeatures al = align_to_reference(fd, u_ref, ref_w);
        CHECK((al.basis - u_ref).cwiseAbs().maxCoeff() <= 1e-8);
        for (Index i = 0; i < 2; ++i)
            CHECK(correlation(al.weights.row(i).transpose(), ref_w.row(i).transpose()) == doctest::Approx(1.0).epsilon(1e-10));
    }
    SUBCASE("misaligned subspaces are reported with their angles") {
        FeatureDecomposition fd;
        fd.u_basis = indicator_features(spec, {Cell{2, 2}, Cell{1, 3}});
        fd.u_basis.col(0).normalize();
        fd.u_basis.col(1).normalize();
        fd.weights = weights;
        try {
            align_to_reference(fd, u_ref);
            FAIL("expected an exception");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("principal angles") != std::string::npos);
        }
        CHECK_THROWS_AS(align_to_reference(fd, u_ref.leftCols(1)), std::invalid_argument);
    }
}

TEST_CASE("principal angles") {
    const Mat a = oracle::random_matrix(8, 3, 1);
    CHECK(largest_principal_angle(a, a * oracle::random_matrix(3, 3, 2)) <= 1e-7);
    Mat e = Mat::Zero(3, 1), f = Mat::Zero(3, 1);
    e(0) = 1.0;
    f(0) = std::cos(0.3);
    f(1) = std::sin(0.3);
    CHECK(largest_principal_angle(e, f) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(principal_angles(e, f)(0) == doctest::Approx(0.3).epsilon(1e-12));
}

// Forward-generated rank-K rewards built from state indicators: is the
// feature subspace itself what the nuclear-norm solve returns?
TEST_CASE("subspace recovery on forward-generated rank-K instances") {
    const GridSpec spec = open_grid_spec(3, 3);
    const Index horizon = 15;
    const MdpModel model = make_gridworld(spec, 0.9, horizon);
    const std::vector<Cell> cells = {Cell{0, 0}, Cell{2, 1}, Cell{1, 2}};
    for (std::size_t k = 1; k <= 3; ++k) {
        const Mat u = indicator_features(spec, std::vector<Cell>(cells.begin(), cells.begin() + static_cast<long>(k)));
        const auto [r, w] = random_walk_feature_reward(u, horizon, 0.15, 7 + k);
        const Policy pi = soft_backward(model, r).policy;
        const NuclearSolution sol = solve_nuclear(build_exact_set(model, pi), model.flat_size(), horizon);
        const FeatureDecomposition fd = decompose(sol.reward.matrix(), 1e-4);
        CAPTURE(k);
        CAPTURE(fd.rank());
        CHECK(largest_principal_angle(fd.u_basis, u) <= 1e-3);
    }
}
