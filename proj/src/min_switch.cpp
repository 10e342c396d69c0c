#include "tvirl/min_switch.hpp"

#include <optional>
#include <stdexcept>

namespace tvirl {

namespace {

Index floor_half(Index value) { return value >= 0 ? value / 2 : -((-value + 1) / 2); }

struct CachedPick {
    Index first = 0;
    Index last = 0;
    FeasiblePoint point;
};

void commit_values(Mat& values, const CachedPick& pick, Index n) {
    for (Index t = pick.first; t < pick.last; ++t) values.col(t) = pick.point.nu.segment((t - pick.first) * n, n);
}

}  // namespace

Partition greedy_partition(const MdpModel& model, const LogPolicyBand& target, double tol) {
    const Index horizon = model.horizon();
    const Index n = model.n_states();
    if (target.horizon() != horizon || target.flat_size() != model.flat_size())
        throw std::invalid_argument("greedy_partition: target does not match the model");

    Partition out;
    out.tol = tol;
    std::vector<Index> switches;  // built by prepending, so kept in reverse
    std::vector<Vec> rewards;
    Mat values = Mat::Zero(n, horizon + 1);

    Index lo = -1, up = horizon, j = horizon - 1, tau = horizon;
    std::optional<CachedPick> cached;

    auto require_pick = [&](const char* where) -> const CachedPick& {
        if (!cached || cached->first != up || cached->last != tau)
            throw std::logic_error(std::string("greedy_partition: no feasible time-invariant reward cached at ") + where +
                                   " (interval [" + std::to_string(up) + ", " + std::to_string(tau) + "))");
        const ConstraintSet recheck = build_invariant_set(model, target, cached->first, cached->last, values.col(tau));
        const double residual = max_violation(recheck, cached->point.x);
        if (!(residual <= feasibility_threshold(recheck, tol)))
            throw std::logic_error("greedy_partition: cached pick on [" + std::to_string(up) + ", " +
                                   std::to_string(tau) + ") has residual " + std::to_string(residual) +
                                   " above tolerance");
        return *cached;
    };

    while (j >= 0) {
        const ConstraintSet cs = build_invariant_set(model, target, j, tau, values.col(tau));
        ++out.oracle_calls;
        if (auto point = check_feasible(cs, tol)) {
            up = j;
            cached = CachedPick{j, tau, std::move(*point)};
        } else {
            lo = j;
            if (up == lo + 1) {
                const CachedPick& pick = require_pick("a switch");
                switches.push_back(up);
                rewards.push_back(pick.point.r);
                commit_values(values, pick, n);
                tau = up;
                lo = -1;
                cached.reset();
            }
        }
        j = floor_half(lo + up);
    }
    // up == 0 here, so the last query covered [0, tau)
    const CachedPick& pick = require_pick("the first interval");
    rewards.push_back(pick.point.r);
    commit_values(values, pick, n);

    out.switch_times.assign(switches.rbegin(), switches.rend());
    out.interval_rewards.assign(rewards.rbegin(), rewards.rend());
    out.boundary_values = ValueFunction(std::move(values));
    out.residual = band_violation(model, target, assemble_reward(out, horizon), out.boundary_values);
    return out;
}

Partition greedy_partition(const MdpModel& model, const Policy& policy, double tol) {
    return greedy_partition(model, LogPolicyBand::exact(policy), tol);
}

TimeVaryingReward assemble_reward(const Partition& partition, Index horizon) {
    const auto& sw = partition.switch_times;
    if (partition.interval_rewards.size() != sw.size() + 1)
        throw std::invalid_argument("assemble_reward: need one reward per interval");
    if (partition.interval_rewards.empty()) throw std::invalid_argument("assemble_reward: no intervals");
    for (std::size_t k = 0; k < sw.size(); ++k) {
        if (sw[k] <= 0 || sw[k] >= horizon || (k > 0 && sw[k] <= sw[k - 1]))
            throw std::invalid_argument("assemble_reward: switch times must be strictly increasing in (0, T)");
    }
    const Index mn = partition.interval_rewards.front().size();
    Mat r(mn, horizon);
    std::size_t interval = 0;
    for (Index t = 0; t < horizon; ++t) {
        if (interval < sw.size() && t == sw[interval]) ++interval;
        r.col(t) = partition.interval_rewards[interval];
    }
    return TimeVaryingReward(std::move(r));
}

Index count_switches(const TimeVaryingReward& reward, double zero_tol) {
    Index count = 0;
    for (Index t = 0; t + 1 < reward.horizon(); ++t)
        if ((reward.step(t + 1) - reward.step(t)).cwiseAbs().maxCoeff() > zero_tol) ++count;
    return count;
}

}  // namespace tvirl
