#include "tvirl/estimation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tvirl {

Index BoundVector::finite_count() const { return (b.array() < std::numeric_limits<double>::infinity()).count(); }

std::pair<Policy, CountTable> estimate_policy(const TrajectorySet& trajectories, Index n_actions, Index n_states) {
    if (trajectories.size() < 1) throw std::invalid_argument("estimate_policy: no trajectories");
    trajectories.validate(n_states, n_actions);
    const Index horizon = trajectories.horizon();

    CountTable counts;
    counts.state_visits = CountMatrix::Zero(horizon, n_states);
    counts.action_counts.assign(static_cast<std::size_t>(horizon), CountMatrix::Zero(n_actions, n_states));
    for (Index i = 0; i < trajectories.size(); ++i) {
        for (Index t = 0; t < horizon; ++t) {
            const Index s = trajectories.state(i, t);
            ++counts.state_visits(t, s);
            ++counts.action_counts[static_cast<std::size_t>(t)](trajectories.action(i, t), s);
        }
    }

    std::vector<Mat> tables(static_cast<std::size_t>(horizon), Mat(n_actions, n_states));
    for (Index t = 0; t < horizon; ++t) {
        Mat& tab = tables[static_cast<std::size_t>(t)];
        for (Index s = 0; s < n_states; ++s) {
            const auto visits = counts.state_visits(t, s);
            if (visits == 0) {
                tab.col(s).setConstant(1.0 / static_cast<double>(n_actions));
                continue;
            }
            for (Index a = 0; a < n_actions; ++a)
                tab(a, s) = static_cast<double>(counts.action_counts[static_cast<std::size_t>(t)](a, s)) /
                            static_cast<double>(visits);
        }
    }
    return {Policy::unchecked(std::move(tables)), std::move(counts)};
}

std::optional<double> epsilon_radius(std::int64_t count, double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("epsilon_radius: delta must lie in (0, 1)");
    if (count < 0) throw std::invalid_argument("epsilon_radius: negative count");
    if (count == 0) return std::nullopt;
    return std::sqrt(std::log(2.0 / (1.0 - delta)) / (2.0 * static_cast<double>(count)));
}

BoundVector build_bound_vector(const Policy& pi_hat, const CountTable& counts, double delta) {
    const Index horizon = pi_hat.horizon();
    const Index n = pi_hat.n_states();
    const Index m = pi_hat.n_actions();
    if (counts.horizon() != horizon || counts.state_visits.cols() != n)
        throw std::invalid_argument("build_bound_vector: counts do not match the policy");
    constexpr double inf = std::numeric_limits<double>::infinity();

    BoundVector out;
    out.b = Vec::Constant(horizon * m * n, inf);
    out.epsilon = Mat::Constant(horizon, n, inf);
    for (Index t = 0; t < horizon; ++t) {
        for (Index s = 0; s < n; ++s) {
            const auto eps = epsilon_radius(counts.visits(t, s), delta);
            if (!eps) continue;
            out.epsilon(t, s) = *eps;
            for (Index a = 0; a < m; ++a) {
                const double p = pi_hat.prob(t, a, s);
                if (p > *eps) out.b(t * m * n + FlatIndex::flatten(a, s, n)) = *eps / (p - *eps);
            }
        }
    }
    return out;
}

}  // namespace tvirl
