#include "tvirl/bench.hpp"

#include "tvirl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace tvirl {

namespace {

bool in_grid(const GridSpec& spec, Cell c) { return c.row >= 0 && c.row < spec.height && c.col >= 0 && c.col < spec.width; }

bool adjacent(Cell a, Cell b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col) == 1; }

bool blocked(const GridSpec& spec, Cell from, Cell to) {
    for (const auto& [a, b] : spec.walls)
        if ((a == from && b == to) || (a == to && b == from)) return true;
    return false;
}

Cell displaced(Cell c, Index action) {
    switch (action) {
        case kUp: return {c.row - 1, c.col};
        case kDown: return {c.row + 1, c.col};
        case kLeft: return {c.row, c.col - 1};
        case kRight: return {c.row, c.col + 1};
        default: return c;
    }
}

// where a displacement actually lands: off-grid or walled moves stay put
Cell land(const GridSpec& spec, Cell from, Index direction) {
    const Cell to = displaced(from, direction);
    if (!in_grid(spec, to) || (!(to == from) && blocked(spec, from, to))) return from;
    return to;
}

double choose2(double k) { return k * (k - 1.0) / 2.0; }

nlohmann::json cell_json(Cell c) { return nlohmann::json::array({c.row, c.col}); }

Cell cell_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2) throw std::invalid_argument("grid spec: a cell is a [row, col] pair");
    return Cell{j[0].get<Index>(), j[1].get<Index>()};
}

bool same_partition(const std::vector<Index>& a, const std::vector<Index>& b) {
    std::map<Index, Index> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto [it1, new1] = ab.emplace(a[i], b[i]);
        auto [it2, new2] = ba.emplace(b[i], a[i]);
        if ((!new1 && it1->second != b[i]) || (!new2 && it2->second != a[i])) return false;
    }
    return true;
}

}  // namespace

void GridSpec::validate() const {
    if (width < 1 || height < 1) throw std::invalid_argument("grid spec: width and height must be positive");
    if (!(wind_prob >= 0.0 && wind_prob < 1.0)) throw std::invalid_argument("grid spec: wind_prob must lie in [0, 1)");
    for (const auto& [a, b] : walls) {
        if (!in_grid(*this, a) || !in_grid(*this, b) || !adjacent(a, b))
            throw std::invalid_argument("grid spec: wall between (" + std::to_string(a.row) + "," + std::to_string(a.col) +
                                        ") and (" + std::to_string(b.row) + "," + std::to_string(b.col) +
                                        ") must join adjacent in-grid cells");
    }
    for (const Cell& c : sticky_cells)
        if (!in_grid(*this, c)) throw std::invalid_argument("grid spec: sticky cell outside the grid");
    for (const auto& [name, c] : landmarks)
        if (!in_grid(*this, c)) throw std::invalid_argument("grid spec: landmark '" + name + "' outside the grid");
}

GridSpec open_grid_spec(Index width, Index height, double wind_prob) {
    GridSpec spec;
    spec.width = width;
    spec.height = height;
    spec.wind_prob = wind_prob;
    spec.landmarks["home"] = Cell{0, 0};
    spec.landmarks["water"] = Cell{height - 1, width / 2};
    return spec;
}

GridSpec blocked_grid_spec(Index width, Index height, double wind_prob) {
    GridSpec spec = open_grid_spec(width, height, wind_prob);
    // horizontal barrier below the middle row, open on the right
    const Index row = height / 2;
    for (Index c = 0; c + 2 < width; ++c) spec.walls.push_back({Cell{row, c}, Cell{row + 1, c}});
    return spec;
}

GridSpec sticky_grid_spec(Index width, Index height, double wind_prob) {
    GridSpec spec = open_grid_spec(width, height, wind_prob);
    const Index mid = height / 2;
    spec.sticky_cells = {Cell{std::min<Index>(1, height - 1), std::min<Index>(1, width - 1)},
                         Cell{mid, std::min<Index>(1, width - 1)}, Cell{std::min(mid + 1, height - 1), width / 2}};
    return spec;
}

GridSpec grid_spec_from_json(const nlohmann::json& doc) {
    GridSpec spec;
    spec.width = doc.at("width").get<Index>();
    spec.height = doc.at("height").get<Index>();
    spec.wind_prob = doc.value("wind_prob", 0.1);
    if (doc.contains("walls"))
        for (const auto& w : doc.at("walls")) {
            if (!w.is_array() || w.size() != 2) throw std::invalid_argument("grid spec: a wall is a pair of cells");
            spec.walls.push_back({cell_from_json(w[0]), cell_from_json(w[1])});
        }
    if (doc.contains("sticky"))
        for (const auto& c : doc.at("sticky")) spec.sticky_cells.push_back(cell_from_json(c));
    if (doc.contains("landmarks")) {
        for (const auto& [name, c] : doc.at("landmarks").items()) spec.landmarks[name] = cell_from_json(c);
    } else {
        spec.landmarks["home"] = Cell{0, 0};
        spec.landmarks["water"] = Cell{spec.height - 1, spec.width / 2};
    }
    spec.validate();
    return spec;
}

nlohmann::json grid_spec_to_json(const GridSpec& spec) {
    nlohmann::json doc;
    doc["width"] = spec.width;
    doc["height"] = spec.height;
    doc["wind_prob"] = spec.wind_prob;
    doc["walls"] = nlohmann::json::array();
    for (const auto& [a, b] : spec.walls) doc["walls"].push_back(nlohmann::json::array({cell_json(a), cell_json(b)}));
    doc["sticky"] = nlohmann::json::array();
    for (const Cell& c : spec.sticky_cells) doc["sticky"].push_back(cell_json(c));
    doc["landmarks"] = nlohmann::json::object();
    for (const auto& [name, c] : spec.landmarks) doc["landmarks"][name] = cell_json(c);
    return doc;
}

MdpModel make_gridworld(const GridSpec& spec, double gamma, Index horizon) {
    spec.validate();
    const Index n = spec.n_states();
    constexpr double kStick = 0.8;
    std::vector<Mat> transitions(static_cast<std::size_t>(kGridActions), Mat::Zero(n, n));
    for (Index a = 0; a < kGridActions; ++a) {
        Mat& p = transitions[static_cast<std::size_t>(a)];
        for (Index r = 0; r < spec.height; ++r) {
            for (Index c = 0; c < spec.width; ++c) {
                const Cell from{r, c};
                const Index s = spec.state_of(from);
                Vec row = Vec::Zero(n);
                row(spec.state_of(land(spec, from, a))) += 1.0 - spec.wind_prob;
                for (Index d = kUp; d <= kRight; ++d) row(spec.state_of(land(spec, from, d))) += spec.wind_prob / 4.0;
                const bool sticky = std::find(spec.sticky_cells.begin(), spec.sticky_cells.end(), from) !=
                                    spec.sticky_cells.end();
                if (sticky) {
                    row *= 1.0 - kStick;
                    row(s) += kStick;
                }
                p.row(s) = row.transpose();
            }
        }
    }
    return MdpModel(std::move(transitions), Vec::Constant(n, 1.0 / static_cast<double>(n)), gamma, horizon);
}

LabeledPartition labels_from_switches(const std::vector<Index>& switch_times, Index horizon) {
    LabeledPartition out;
    out.labels.resize(static_cast<std::size_t>(horizon));
    Index label = 0;
    std::size_t next = 0;
    for (Index t = 0; t < horizon; ++t) {
        while (next < switch_times.size() && switch_times[next] == t) {
            ++label;
            ++next;
        }
        out.labels[static_cast<std::size_t>(t)] = label;
    }
    return out;
}

std::pair<TimeVaryingReward, LabeledPartition> random_piecewise_reward(Index flat_size, Index horizon, Index switches,
                                                                       double beta_lo, double beta_hi,
                                                                       std::uint64_t seed) {
    if (switches < 0 || switches > horizon - 1)
        throw std::invalid_argument("random_piecewise_reward: need 0 <= k <= T-1, got k = " + std::to_string(switches));
    if (!(beta_lo >= 0.0 && beta_hi >= beta_lo)) throw std::invalid_argument("random_piecewise_reward: bad beta range");
    Rng rng(substream_seed(seed, "piecewise-reward"));

    // partial Fisher-Yates over {1, ..., T-1}
    std::vector<Index> pool(static_cast<std::size_t>(horizon - 1));
    std::iota(pool.begin(), pool.end(), Index{1});
    for (Index i = 0; i < switches; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(pool.size() - static_cast<std::size_t>(i));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    std::vector<Index> times(pool.begin(), pool.begin() + switches);
    std::sort(times.begin(), times.end());

    std::vector<Vec> intervals;
    Vec current(flat_size);
    for (Index k = 0; k < flat_size; ++k) current(k) = rng.uniform();
    intervals.push_back(current);
    for (Index i = 1; i <= switches; ++i) {
        const double beta =
            switches == 1 ? beta_lo
                          : beta_lo + (beta_hi - beta_lo) * static_cast<double>(i - 1) / static_cast<double>(switches - 1);
        for (Index k = 0; k < flat_size; ++k) current(k) += rng.uniform(0.0, beta);
        intervals.push_back(current);
    }

    Mat r(flat_size, horizon);
    LabeledPartition labels = labels_from_switches(times, horizon);
    for (Index t = 0; t < horizon; ++t) r.col(t) = intervals[static_cast<std::size_t>(labels.labels[static_cast<std::size_t>(t)])];
    return {TimeVaryingReward(std::move(r)), std::move(labels)};
}

std::pair<TimeVaryingReward, Mat> random_walk_feature_reward(const Mat& u_basis, Index horizon, double sigma,
                                                             std::uint64_t seed) {
    if (!(sigma > 0.0)) throw std::invalid_argument("random_walk_feature_reward: sigma must be positive");
    Rng rng(substream_seed(seed, "feature-walk"));
    const Index k = u_basis.cols();
    Mat weights(k, horizon);
    for (Index i = 0; i < k; ++i) weights(i, 0) = rng.normal();
    for (Index t = 1; t < horizon; ++t)
        for (Index i = 0; i < k; ++i) weights(i, t) = weights(i, t - 1) + sigma * rng.normal();
    return {TimeVaryingReward(u_basis * weights), std::move(weights)};
}

Mat indicator_features(const GridSpec& spec, const std::vector<Cell>& cells) {
    const Index n = spec.n_states();
    Mat u = Mat::Zero(kGridActions * n, static_cast<Index>(cells.size()));
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const Index s = spec.state_of(cells[k]);
        for (Index a = 0; a < kGridActions; ++a) u(FlatIndex::flatten(a, s, n), static_cast<Index>(k)) = 1.0;
    }
    return u;
}

double adjusted_rand_index(const LabeledPartition& a, const LabeledPartition& b) {
    if (a.labels.size() != b.labels.size())
        throw std::invalid_argument("adjusted_rand_index: partitions have different lengths");
    const double total = static_cast<double>(a.labels.size());
    std::map<std::pair<Index, Index>, double> joint;
    std::map<Index, double> rows, cols;
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        joint[{a.labels[i], b.labels[i]}] += 1.0;
        rows[a.labels[i]] += 1.0;
        cols[b.labels[i]] += 1.0;
    }
    double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [key, count] : joint) index += choose2(count);
    for (const auto& [key, count] : rows) sum_rows += choose2(count);
    for (const auto& [key, count] : cols) sum_cols += choose2(count);
    const double pairs = choose2(total);
    const double expected = pairs > 0.0 ? sum_rows * sum_cols / pairs : 0.0;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return same_partition(a.labels, b.labels) ? 1.0 : 0.0;
    return (index - expected) / (max_index - expected);
}

double transfer_eval(const TimeVaryingReward& reward, const MdpModel& target_model,
                     const TrajectorySet& reference_samples) {
    if (reward.horizon() != target_model.horizon() || reference_samples.horizon() != target_model.horizon())
        throw std::invalid_argument("transfer_eval: horizon mismatch");
    const SoftSolution sol = soft_backward(target_model, reward);
    return mean_action_loglik(sol.policy, reference_samples).value;
}

}  // namespace tvirl
