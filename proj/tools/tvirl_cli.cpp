// Batch runner: gen, minswitch, lowrank, estimate, ari, transfer.
//
// Every run resolves its configuration as defaults < --config file < flags,
// writes its outputs under --out and finishes with <out>/manifest.json. A
// manifest passed back through --config replays the run.

#include "tvirl/bench.hpp"
#include "tvirl/estimation.hpp"
#include "tvirl/low_rank.hpp"
#include "tvirl/min_switch.hpp"
#include "tvirl/parallel.hpp"
#include "tvirl/reward_sets.hpp"
#include "tvirl/rng.hpp"
#include "tvirl/soft_rl.hpp"
#include "tvirl/text_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tvirl;

namespace {

constexpr int kExitError = 1;
constexpr int kExitNonConverged = 2;

/// Error tagged with the pipeline stage that raised it.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what) : std::runtime_error(what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

template <class F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

/// Files written by the current run; removed again when a stage fails.
class OutputDir {
public:
    explicit OutputDir(fs::path root) : root_(std::move(root)) {}

    const fs::path& root() const { return root_; }

    void text(const std::string& rel, const std::string& contents) {
        const fs::path target = root_ / rel;
        fs::create_directories(target.parent_path());
        {
            const std::lock_guard<std::mutex> lock(mutex_);
            written_.push_back(rel);
        }
        write_text_file(target, contents);
    }

    void table(const std::string& rel, const Mat& values) {
        std::ostringstream ss;
        write_table(ss, values);
        text(rel, ss.str());
    }

    void document(const std::string& rel, const json& doc) { text(rel, doc.dump(2) + "\n"); }

    std::vector<std::string> written() const {
        const std::lock_guard<std::mutex> lock(mutex_);
        std::vector<std::string> sorted = written_;
        std::sort(sorted.begin(), sorted.end());
        return sorted;
    }

    void remove_written() {
        const std::lock_guard<std::mutex> lock(mutex_);
        for (const std::string& rel : written_) {
            std::error_code ec;
            fs::remove(root_ / rel, ec);
        }
        written_.clear();
    }

private:
    fs::path root_;
    mutable std::mutex mutex_;
    std::vector<std::string> written_;
};

struct Run {
    Run(std::string name, json defaults, const fs::path& out_dir)
        : command(std::move(name)), config(std::move(defaults)), out(out_dir) {}

    std::string command;
    json config;
    OutputDir out;
    json seeds = json::object();
    json tolerances = json::object();
    bool nonconverged = false;
    std::mutex mutex;

    void record_seed(const std::string& name, std::uint64_t value) {
        const std::lock_guard<std::mutex> lock(mutex);
        seeds[name] = value;
    }
};

// ---------------------------------------------------------------- config access

template <class T>
T get(const json& cfg, const std::string& key) {
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
}

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument(message);
}

std::string absolute_path(const std::string& path) { return fs::absolute(path).lexically_normal().string(); }

void absolutize(json& cfg, const std::string& key) {
    if (cfg.at(key).is_string() && !cfg.at(key).get<std::string>().empty())
        cfg[key] = absolute_path(cfg[key].get<std::string>());
}

/// Overlays `overrides` on `cfg`, rejecting keys the command does not know.
void merge(json& cfg, const json& overrides) {
    require(overrides.is_object(), "configuration must be a JSON object");
    for (const auto& [key, value] : overrides.items()) {
        require(cfg.contains(key), "unknown config key '" + key + "'");
        cfg[key] = value;
    }
}

/// A plain config object, or the "config" section of a manifest written by the same command.
json load_config_file(const std::string& path, const std::string& command) {
    const json doc = read_json_file(path);
    require(doc.is_object(), path + ": expected a JSON object");
    if (doc.contains("manifest_version")) {
        const std::string written_by = doc.value("command", "");
        require(written_by == command, path + ": manifest was written by '" + written_by + "', not '" + command + "'");
        return doc.at("config");
    }
    return doc;
}

json defaults_for(const std::string& command) {
    json cfg = {{"allow_nonconverged", false}};
    if (command == "gen") {
        cfg.update({{"grid", "open"},
                    {"width", 5},
                    {"height", 5},
                    {"wind_prob", 0.1},
                    {"gamma", 0.9},
                    {"horizon", 50},
                    {"reward", "piecewise"},
                    {"switches", 5},
                    {"beta_lo", 0.1},
                    {"beta_hi", 0.4},
                    {"features", {"home", "water"}},
                    {"sigma", 0.15},
                    {"trajectories", 0},
                    {"repetitions", 1},
                    {"seed", 0}});
    } else if (command == "minswitch") {
        cfg.update({{"input", ""}, {"mode", "exact"}, {"delta", kDefaultDelta}, {"tol", nullptr}});
    } else if (command == "lowrank") {
        cfg.update({{"input", ""},
                    {"mode", "exact"},
                    {"delta", kDefaultDelta},
                    {"rho", 1.0},
                    {"max_iter", 5000},
                    {"tol", 1e-6},
                    {"adapt_rho", true},
                    {"rank_tol", 1e-4}});
    } else if (command == "estimate") {
        cfg.update({{"input", ""}, {"delta", kDefaultDelta}});
    } else if (command == "ari") {
        cfg.update({{"a", ""}, {"b", ""}});
    } else if (command == "transfer") {
        cfg.update({{"rewards", json::array()},
                    {"targets", {"blocked", "sticky"}},
                    {"reference", ""},
                    {"width", 5},
                    {"height", 5},
                    {"wind_prob", 0.1},
                    {"gamma", 0.9},
                    {"samples", 20000},
                    {"seed", 0}});
    }
    return cfg;
}

// ---------------------------------------------------------------- shared readers

bool is_grid_preset(const std::string& name) { return name == "open" || name == "blocked" || name == "sticky"; }

/// A preset name resolved at the given size, or a grid spec JSON file.
GridSpec resolve_grid(const std::string& name, Index width, Index height, double wind_prob) {
    if (name == "open") return open_grid_spec(width, height, wind_prob);
    if (name == "blocked") return blocked_grid_spec(width, height, wind_prob);
    if (name == "sticky") return sticky_grid_spec(width, height, wind_prob);
    return grid_spec_from_json(read_json_file(name));
}

MdpModel read_model(const fs::path& path) { return model_from_json(read_json_file(path)); }

Policy read_policy_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_policy(in);
}

TrajectorySet read_trajectory_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_trajectories(in);
}

Mat read_table_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_table(in);
}

/// Labels are stored as a 1 x T table of nonnegative integers.
LabeledPartition read_labels(const fs::path& path) {
    const Mat table = read_table_file(path);
    if (table.rows() != 1) throw std::runtime_error(path.string() + ": labels must be a single row");
    LabeledPartition labels;
    for (Index t = 0; t < table.cols(); ++t) {
        const double v = table(0, t);
        if (!(v >= 0.0) || v != std::floor(v)) throw std::runtime_error(path.string() + ": labels must be nonnegative integers");
        labels.labels.push_back(static_cast<Index>(v));
    }
    return labels;
}

Mat labels_row(const LabeledPartition& labels) {
    Mat row(1, static_cast<Index>(labels.labels.size()));
    for (std::size_t t = 0; t < labels.labels.size(); ++t) row(0, static_cast<Index>(t)) = static_cast<double>(labels.labels[t]);
    return row;
}

Mat index_row(const std::vector<Index>& values) {
    Mat row(1, static_cast<Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) row(0, static_cast<Index>(i)) = static_cast<double>(values[i]);
    return row;
}

void check_model_match(const MdpModel& model, const Policy& policy) {
    if (policy.n_actions() != model.n_actions() || policy.n_states() != model.n_states() ||
        policy.horizon() != model.horizon())
        throw std::invalid_argument("policy shape does not match the model");
}

void check_model_match(const MdpModel& model, const TrajectorySet& data) {
    if (data.horizon() != model.horizon()) throw std::invalid_argument("trajectory horizon does not match the model");
    data.validate(model.n_states(), model.n_actions());
}

/// Instance directories under `input`: the directory itself, or its rep_* subdirectories.
std::vector<std::string> instance_dirs(const fs::path& input) {
    if (!fs::is_directory(input)) throw std::runtime_error("input directory " + input.string() + " does not exist");
    if (fs::exists(input / "model.json")) return {""};
    std::vector<std::string> reps;
    for (const auto& entry : fs::directory_iterator(input)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_directory() && name.rfind("rep_", 0) == 0 && fs::exists(entry.path() / "model.json"))
            reps.push_back(name);
    }
    if (reps.empty()) throw std::runtime_error(input.string() + " holds neither model.json nor rep_* instances");
    std::sort(reps.begin(), reps.end());
    return reps;
}

std::string prefixed(const std::string& dir, const std::string& name) { return dir.empty() ? name : dir + "/" + name; }

std::string rep_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "rep_%03zu", i);
    return buf;
}

struct Moments {
    double mean = 0.0;
    double std = 0.0;
};

/// Mean and sample standard deviation.
Moments moments(const std::vector<double>& values) {
    Moments m;
    if (values.empty()) return m;
    for (double v : values) m.mean += v / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - m.mean) * (v - m.mean);
        m.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return m;
}

/// Runs `body` once per instance directory, in parallel, and collects the per-instance summaries.
std::vector<json> for_each_instance(Run& run, const std::vector<std::string>& dirs,
                                    const std::function<json(std::size_t, const std::string&)>& body) {
    std::vector<json> summaries(dirs.size());
    parallel_for(dirs.size(), [&](std::size_t i) {
        try {
            summaries[i] = body(i, dirs[i]);
        } catch (const StageError& e) {
            throw StageError(prefixed(dirs[i], e.stage()), e.what());
        }
        run.out.document(prefixed(dirs[i], "summary.json"), summaries[i]);
    });
    return summaries;
}

// ---------------------------------------------------------------- gen

json gen_instance(Run& run, const GridSpec& spec, const std::string& dir, std::uint64_t seed) {
    const json& cfg = run.config;
    const Index horizon = get<Index>(cfg, "horizon");
    const MdpModel model = make_gridworld(spec, get<double>(cfg, "gamma"), horizon);
    const std::uint64_t reward_seed = substream_seed(seed, "reward");
    const std::uint64_t trajectory_seed = substream_seed(seed, "trajectories");
    run.record_seed(prefixed(dir, "reward"), reward_seed);

    json summary = {{"seed", seed}, {"horizon", horizon}, {"n_states", model.n_states()}, {"n_actions", model.n_actions()}};
    TimeVaryingReward reward;
    if (get<std::string>(cfg, "reward") == "piecewise") {
        auto [r, labels] = stage("reward", [&] {
            return random_piecewise_reward(model.flat_size(), horizon, get<Index>(cfg, "switches"), get<double>(cfg, "beta_lo"),
                                           get<double>(cfg, "beta_hi"), reward_seed);
        });
        reward = std::move(r);
        run.out.table(prefixed(dir, "labels.txt"), labels_row(labels));
        summary["switches"] = count_switches(reward, 0.0);
    } else {
        std::vector<Cell> cells;
        for (const std::string& name : get<std::vector<std::string>>(cfg, "features")) {
            const auto it = spec.landmarks.find(name);
            if (it == spec.landmarks.end()) throw StageError("reward", "grid has no landmark '" + name + "'");
            cells.push_back(it->second);
        }
        const Mat u = indicator_features(spec, cells);
        auto [r, weights] =
            stage("reward", [&] { return random_walk_feature_reward(u, horizon, get<double>(cfg, "sigma"), reward_seed); });
        reward = std::move(r);
        run.out.table(prefixed(dir, "features.txt"), u);
        run.out.table(prefixed(dir, "weights.txt"), weights);
        summary["features"] = u.cols();
    }
    const SoftSolution sol = stage("soft_backward", [&] { return soft_backward(model, reward); });

    run.out.document(prefixed(dir, "model.json"), model_to_json(model));
    run.out.document(prefixed(dir, "grid.json"), grid_spec_to_json(spec));
    run.out.table(prefixed(dir, "reward.txt"), reward.matrix());
    run.out.table(prefixed(dir, "values.txt"), sol.v.matrix());
    std::ostringstream policy_text;
    write_policy(policy_text, sol.policy);
    run.out.text(prefixed(dir, "policy.txt"), policy_text.str());

    const Index count = get<Index>(cfg, "trajectories");
    if (count > 0) {
        run.record_seed(prefixed(dir, "trajectories"), trajectory_seed);
        const TrajectorySet data =
            stage("sample_trajectories", [&] { return sample_trajectories(model, sol.policy, count, trajectory_seed); });
        std::ostringstream data_text;
        write_trajectories(data_text, data);
        run.out.text(prefixed(dir, "trajectories.txt"), data_text.str());
        summary["trajectories"] = count;
    }
    return summary;
}

void run_gen(Run& run) {
    json& cfg = run.config;
    const GridSpec spec = stage("config", [&] {
        const std::string grid = get<std::string>(cfg, "grid");
        if (!is_grid_preset(grid)) absolutize(cfg, "grid");
        const std::string kind = get<std::string>(cfg, "reward");
        require(kind == "piecewise" || kind == "features", "reward must be 'piecewise' or 'features'");
        const Index horizon = get<Index>(cfg, "horizon");
        require(horizon >= 1, "horizon must be at least 1");
        const Index switches = get<Index>(cfg, "switches");
        if (kind == "piecewise")
            require(switches >= 0 && switches <= horizon - 1, "switches must lie in [0, horizon - 1]");
        require(get<double>(cfg, "gamma") >= 0.0 && get<double>(cfg, "gamma") <= 1.0, "gamma must lie in [0, 1]");
        require(get<double>(cfg, "sigma") >= 0.0, "sigma must be nonnegative");
        require(get<double>(cfg, "beta_lo") >= 0.0 && get<double>(cfg, "beta_lo") <= get<double>(cfg, "beta_hi"),
                "need 0 <= beta_lo <= beta_hi");
        require(get<Index>(cfg, "trajectories") >= 0, "trajectories must be nonnegative");
        require(get<Index>(cfg, "repetitions") >= 1, "repetitions must be at least 1");
        get<std::uint64_t>(cfg, "seed");
        GridSpec resolved =
            resolve_grid(get<std::string>(cfg, "grid"), get<Index>(cfg, "width"), get<Index>(cfg, "height"),
                         get<double>(cfg, "wind_prob"));
        resolved.validate();
        return resolved;
    });
    const std::uint64_t seed = get<std::uint64_t>(cfg, "seed");
    const auto reps = static_cast<std::size_t>(get<Index>(cfg, "repetitions"));
    std::vector<std::string> dirs;
    for (std::size_t i = 0; i < reps; ++i) dirs.push_back(reps == 1 ? "" : rep_name(i));
    for_each_instance(run, dirs, [&](std::size_t i, const std::string& dir) {
        return gen_instance(run, spec, dir, substream_seed(seed, "instance", i));
    });
    if (reps > 1) run.out.document("summary.json", {{"repetitions", reps}, {"instances", dirs}});
    std::cout << "gen: wrote " << reps << " instance(s) to " << run.out.root().string() << "\n";
}

// ---------------------------------------------------------------- minswitch

void run_minswitch(Run& run) {
    json& cfg = run.config;
    const std::string mode = get<std::string>(cfg, "mode");
    stage("config", [&] {
        absolutize(cfg, "input");
        require(!get<std::string>(cfg, "input").empty(), "input directory is required");
        require(mode == "exact" || mode == "robust", "mode must be 'exact' or 'robust'");
        const double delta = get<double>(cfg, "delta");
        require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
        if (!cfg.at("tol").is_null()) require(get<double>(cfg, "tol") >= 0.0, "tol must be nonnegative");
    });
    const double tol = cfg.at("tol").is_null() ? (mode == "exact" ? kExactFeasibilityTol : kRobustFeasibilityTol)
                                                : get<double>(cfg, "tol");
    run.tolerances["feasibility_tol"] = tol;
    const fs::path input = get<std::string>(cfg, "input");
    const std::vector<std::string> dirs = stage("load", [&] { return instance_dirs(input); });

    const std::vector<json> summaries = for_each_instance(run, dirs, [&](std::size_t, const std::string& dir) {
        const fs::path src = input / dir;
        const MdpModel model = stage("load", [&] { return read_model(src / "model.json"); });
        const Index horizon = model.horizon();
        Partition partition;
        json summary = {{"mode", mode}};
        if (mode == "exact") {
            const Policy policy = stage("load", [&] {
                Policy p = read_policy_file(src / "policy.txt");
                check_model_match(model, p);
                return p;
            });
            partition = stage("greedy_partition", [&] { return greedy_partition(model, policy, tol); });
        } else {
            const TrajectorySet data = stage("load", [&] {
                TrajectorySet d = read_trajectory_file(src / "trajectories.txt");
                check_model_match(model, d);
                return d;
            });
            const auto [pi_hat, counts] =
                stage("estimate", [&] { return estimate_policy(data, model.n_actions(), model.n_states()); });
            const BoundVector bv = stage("estimate", [&] { return build_bound_vector(pi_hat, counts, get<double>(cfg, "delta")); });
            const LogPolicyBand band = LogPolicyBand::robust(pi_hat, bv.b);
            partition = stage("greedy_partition", [&] { return greedy_partition(model, band, tol); });
            summary["finite_bounds"] = bv.finite_count();
        }
        const TimeVaryingReward reward = assemble_reward(partition, horizon);
        const LabeledPartition labels = labels_from_switches(partition.switch_times, horizon);
        Mat intervals(model.flat_size(), static_cast<Index>(partition.interval_rewards.size()));
        for (std::size_t i = 0; i < partition.interval_rewards.size(); ++i)
            intervals.col(static_cast<Index>(i)) = partition.interval_rewards[i];

        run.out.table(prefixed(dir, "switch_times.txt"), index_row(partition.switch_times));
        run.out.table(prefixed(dir, "interval_rewards.txt"), intervals);
        run.out.table(prefixed(dir, "boundary_values.txt"), partition.boundary_values.matrix());
        run.out.table(prefixed(dir, "reward.txt"), reward.matrix());
        run.out.table(prefixed(dir, "labels.txt"), labels_row(labels));

        summary["switches"] = partition.switch_times.size();
        summary["switch_times"] = partition.switch_times;
        summary["oracle_calls"] = partition.oracle_calls;
        summary["residual"] = partition.residual;
        if (fs::exists(src / "labels.txt")) {
            const LabeledPartition truth = stage("load", [&] { return read_labels(src / "labels.txt"); });
            summary["ari"] = stage("ari", [&] { return adjusted_rand_index(labels, truth); });
        }
        return summary;
    });

    std::vector<double> switches, aris;
    for (const json& s : summaries) {
        switches.push_back(s.at("switches").get<double>());
        if (s.contains("ari")) aris.push_back(s.at("ari").get<double>());
    }
    const Moments sw = moments(switches);
    std::cout << "minswitch: switches " << sw.mean;
    if (dirs.size() > 1) {
        json summary = {{"repetitions", dirs.size()},
                        {"instances", dirs},
                        {"switches_mean", sw.mean},
                        {"switches_std", sw.std}};
        if (aris.size() == dirs.size()) {
            const Moments ari = moments(aris);
            summary["ari_mean"] = ari.mean;
            summary["ari_std"] = ari.std;
        }
        run.out.document("summary.json", summary);
        std::cout << " +- " << sw.std;
    }
    if (aris.size() == dirs.size()) std::cout << ", ARI " << moments(aris).mean;
    std::cout << "\n";
}

// ---------------------------------------------------------------- lowrank

json alignment_report(Run& run, const std::string& dir, const fs::path& src, const FeatureDecomposition& fd) {
    if (!fs::exists(src / "features.txt")) return nullptr;
    const Mat u_ref = stage("load", [&] { return read_table_file(src / "features.txt"); });
    const Mat w_ref = fs::exists(src / "weights.txt") ? stage("load", [&] { return read_table_file(src / "weights.txt"); }) : Mat();
    if (u_ref.rows() != fd.u_basis.rows()) throw StageError("align", "reference features have the wrong row count");
    json report = {{"reference_rank", u_ref.cols()}, {"rank", fd.rank()}};
    if (fd.rank() == 0) {
        report["skipped"] = "recovered rank is zero";
        return report;
    }
    report["largest_principal_angle"] = largest_principal_angle(fd.u_basis, u_ref);
    if (fd.rank() != u_ref.cols()) {
        report["skipped"] = "rank differs from the reference";
        return report;
    }
    const AlignedFeatures aligned = stage("align", [&] { return align_to_reference(fd, u_ref, w_ref); });
    run.out.table(prefixed(dir, "aligned_features.txt"), aligned.basis);
    run.out.table(prefixed(dir, "aligned_weights.txt"), aligned.weights);
    if (w_ref.rows() == aligned.weights.rows() && w_ref.cols() == aligned.weights.cols()) {
        std::vector<double> corr;
        for (Index i = 0; i < w_ref.rows(); ++i)
            corr.push_back(correlation(aligned.weights.row(i).transpose(), w_ref.row(i).transpose()));
        report["weight_correlations"] = corr;
    }
    return report;
}

void run_lowrank(Run& run) {
    json& cfg = run.config;
    const std::string mode = get<std::string>(cfg, "mode");
    AdmmParams params;
    stage("config", [&] {
        absolutize(cfg, "input");
        require(!get<std::string>(cfg, "input").empty(), "input directory is required");
        require(mode == "exact" || mode == "robust", "mode must be 'exact' or 'robust'");
        const double delta = get<double>(cfg, "delta");
        require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
        require(get<double>(cfg, "rank_tol") > 0.0 && get<double>(cfg, "rank_tol") < 1.0, "rank_tol must lie in (0, 1)");
        params.rho = get<double>(cfg, "rho");
        params.max_iter = get<long>(cfg, "max_iter");
        params.primal_tol = params.dual_tol = get<double>(cfg, "tol");
        params.adapt_rho = get<bool>(cfg, "adapt_rho");
        params.validate();
    });
    run.tolerances = {{"primal_tol", params.primal_tol},
                      {"dual_tol", params.dual_tol},
                      {"ridge", params.ridge},
                      {"rank_tol", get<double>(cfg, "rank_tol")}};
    const fs::path input = get<std::string>(cfg, "input");
    const std::vector<std::string> dirs = stage("load", [&] { return instance_dirs(input); });

    const std::vector<json> summaries = for_each_instance(run, dirs, [&](std::size_t, const std::string& dir) {
        const fs::path src = input / dir;
        const MdpModel model = stage("load", [&] { return read_model(src / "model.json"); });
        const Index horizon = model.horizon();
        ConstraintSet cs;
        std::optional<Policy> policy;
        if (mode == "exact") {
            policy = stage("load", [&] {
                Policy p = read_policy_file(src / "policy.txt");
                check_model_match(model, p);
                return p;
            });
            cs = stage("build_set", [&] { return build_exact_set(model, *policy); });
        } else {
            const TrajectorySet data = stage("load", [&] {
                TrajectorySet d = read_trajectory_file(src / "trajectories.txt");
                check_model_match(model, d);
                return d;
            });
            const auto [pi_hat, counts] =
                stage("estimate", [&] { return estimate_policy(data, model.n_actions(), model.n_states()); });
            const BoundVector bv = stage("estimate", [&] { return build_bound_vector(pi_hat, counts, get<double>(cfg, "delta")); });
            cs = stage("build_set", [&] { return build_robust_set(model, pi_hat, bv.b); });
        }
        const NuclearSolution sol = stage("solve_nuclear", [&] { return solve_nuclear(cs, model.flat_size(), horizon, params); });
        const FeatureDecomposition fd =
            stage("decompose", [&] { return decompose(sol.reward.matrix(), get<double>(cfg, "rank_tol")); });
        const AdmmDiagnostics& diag = sol.diagnostics;

        Mat trace(static_cast<Index>(diag.trace.size()), 3);
        for (std::size_t i = 0; i < diag.trace.size(); ++i)
            for (Index j = 0; j < 3; ++j) trace(static_cast<Index>(i), j) = diag.trace[i][static_cast<std::size_t>(j)];
        const Mat values = Eigen::Map<const Mat>(sol.nu.data(), model.n_states(), sol.nu.size() / model.n_states());
        run.out.table(prefixed(dir, "reward.txt"), sol.reward.matrix());
        run.out.table(prefixed(dir, "values.txt"), values);
        run.out.table(prefixed(dir, "features.txt"), fd.u_basis);
        run.out.table(prefixed(dir, "weights.txt"), fd.weights);
        run.out.table(prefixed(dir, "singular_values.txt"), fd.singular_values);
        run.out.table(prefixed(dir, "trace.txt"), trace);

        json summary = {{"mode", mode},
                        {"rank", fd.rank()},
                        {"converged", diag.converged},
                        {"iterations", diag.iterations},
                        {"primal_residual", diag.primal_residual},
                        {"dual_residual", diag.dual_residual},
                        {"final_rho", diag.final_rho},
                        {"nuclear_norm", diag.nuclear_norm},
                        {"constraint_violation", diag.constraint_violation},
                        {"residual_increases", diag.residual_increases}};
        if (policy)
            summary["policy_distance"] =
                stage("soft_backward", [&] { return policy_distance(soft_backward(model, sol.reward).policy, *policy); });
        const json alignment = alignment_report(run, dir, src, fd);
        if (!alignment.is_null()) summary["alignment"] = alignment;
        if (!diag.converged) {
            const std::lock_guard<std::mutex> lock(run.mutex);
            run.nonconverged = true;
        }
        return summary;
    });

    std::vector<double> ranks;
    long converged = 0;
    for (const json& s : summaries) {
        ranks.push_back(s.at("rank").get<double>());
        if (s.at("converged").get<bool>()) ++converged;
    }
    if (dirs.size() > 1) {
        const Moments rk = moments(ranks);
        run.out.document("summary.json", {{"repetitions", dirs.size()},
                                          {"instances", dirs},
                                          {"rank_mean", rk.mean},
                                          {"rank_std", rk.std},
                                          {"converged", converged}});
    }
    std::cout << "lowrank: rank " << moments(ranks).mean << ", converged " << converged << "/" << dirs.size() << "\n";
}

// ---------------------------------------------------------------- estimate

void run_estimate(Run& run) {
    json& cfg = run.config;
    stage("config", [&] {
        absolutize(cfg, "input");
        require(!get<std::string>(cfg, "input").empty(), "input directory is required");
        const double delta = get<double>(cfg, "delta");
        require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    });
    const double delta = get<double>(cfg, "delta");
    const fs::path input = get<std::string>(cfg, "input");
    const std::vector<std::string> dirs = stage("load", [&] { return instance_dirs(input); });

    for_each_instance(run, dirs, [&](std::size_t, const std::string& dir) {
        const fs::path src = input / dir;
        const MdpModel model = stage("load", [&] { return read_model(src / "model.json"); });
        const TrajectorySet data = stage("load", [&] {
            TrajectorySet d = read_trajectory_file(src / "trajectories.txt");
            check_model_match(model, d);
            return d;
        });
        const auto [pi_hat, counts] =
            stage("estimate", [&] { return estimate_policy(data, model.n_actions(), model.n_states()); });
        const BoundVector bv = stage("estimate", [&] { return build_bound_vector(pi_hat, counts, delta); });

        const Index horizon = data.horizon();
        const Index m = model.n_actions();
        Mat action_counts(horizon * m, model.n_states());
        for (Index t = 0; t < horizon; ++t)
            action_counts.middleRows(t * m, m) = counts.action_counts[static_cast<std::size_t>(t)].cast<double>();
        std::ostringstream policy_text;
        write_policy(policy_text, pi_hat);
        run.out.text(prefixed(dir, "policy.txt"), policy_text.str());
        run.out.table(prefixed(dir, "visits.txt"), counts.state_visits.cast<double>());
        run.out.table(prefixed(dir, "action_counts.txt"), action_counts);
        run.out.table(prefixed(dir, "epsilon.txt"), bv.epsilon);
        run.out.table(prefixed(dir, "bounds.txt"), Eigen::Map<const Mat>(bv.b.data(), model.flat_size(), horizon));
        return json{{"trajectories", data.size()}, {"horizon", horizon}, {"finite_bounds", bv.finite_count()}};
    });
    std::cout << "estimate: " << dirs.size() << " instance(s)\n";
}

// ---------------------------------------------------------------- ari

void run_ari(Run& run) {
    json& cfg = run.config;
    stage("config", [&] {
        absolutize(cfg, "a");
        absolutize(cfg, "b");
        require(!get<std::string>(cfg, "a").empty() && !get<std::string>(cfg, "b").empty(), "both label files are required");
    });
    const LabeledPartition a = stage("load", [&] { return read_labels(get<std::string>(cfg, "a")); });
    const LabeledPartition b = stage("load", [&] { return read_labels(get<std::string>(cfg, "b")); });
    const double ari = stage("ari", [&] { return adjusted_rand_index(a, b); });
    run.out.table("ari.txt", Mat::Constant(1, 1, ari));
    run.out.document("summary.json", {{"ari", ari}});
    std::cout << "ari: " << format_double(ari) << "\n";
}

// ---------------------------------------------------------------- transfer

void run_transfer(Run& run) {
    json& cfg = run.config;
    struct Named {
        std::string name;
        std::string path;
    };
    std::vector<Named> rewards;
    std::vector<std::string> targets;
    stage("config", [&] {
        json& list = cfg["rewards"];
        require(list.is_array() && !list.empty(), "at least one reward is required");
        for (json& entry : list) {
            require(entry.is_object() && entry.contains("name") && entry.contains("path"),
                    "each reward needs a name and a path");
            entry["path"] = absolute_path(get<std::string>(entry, "path"));
            rewards.push_back({get<std::string>(entry, "name"), get<std::string>(entry, "path")});
        }
        json& target_list = cfg["targets"];
        require(target_list.is_array() && !target_list.empty(), "at least one target is required");
        for (json& target : target_list) {
            require(target.is_string(), "targets are preset names or grid spec files");
            if (!is_grid_preset(target.get<std::string>())) target = absolute_path(target.get<std::string>());
            targets.push_back(target.get<std::string>());
        }
        if (get<std::string>(cfg, "reference").empty()) cfg["reference"] = rewards.front().name;
        require(std::any_of(rewards.begin(), rewards.end(), [&](const Named& r) { return r.name == cfg["reference"]; }),
                "reference must name one of the rewards");
        require(get<Index>(cfg, "samples") >= 1, "samples must be at least 1");
        require(get<double>(cfg, "gamma") >= 0.0 && get<double>(cfg, "gamma") <= 1.0, "gamma must lie in [0, 1]");
        get<std::uint64_t>(cfg, "seed");
    });

    std::vector<TimeVaryingReward> values;
    const TimeVaryingReward* reference = nullptr;
    stage("load", [&] {
        for (const Named& r : rewards) values.emplace_back(read_table_file(r.path));
        for (std::size_t i = 0; i < rewards.size(); ++i) {
            if (values[i].matrix().rows() != values.front().matrix().rows() ||
                values[i].horizon() != values.front().horizon())
                throw std::invalid_argument("reward '" + rewards[i].name + "' has a different shape");
            if (rewards[i].name == cfg["reference"]) reference = &values[i];
        }
    });
    const Index horizon = values.front().horizon();
    const std::uint64_t seed = get<std::uint64_t>(cfg, "seed");
    Mat scores(static_cast<Index>(rewards.size()), static_cast<Index>(targets.size()));
    std::vector<std::string> target_names(targets.size());
    parallel_for(targets.size(), [&](std::size_t k) {
        const std::string where = "target " + std::to_string(k);
        const GridSpec spec = stage(where + "/load", [&] {
            GridSpec g = resolve_grid(targets[k], get<Index>(cfg, "width"), get<Index>(cfg, "height"),
                                      get<double>(cfg, "wind_prob"));
            g.validate();
            return g;
        });
        const MdpModel model = make_gridworld(spec, get<double>(cfg, "gamma"), horizon);
        if (model.flat_size() != values.front().flat_size())
            throw StageError(where + "/load", "reward size does not match the target grid");
        const std::uint64_t sample_seed = substream_seed(seed, "transfer-reference", k);
        run.record_seed("transfer-reference/" + std::to_string(k), sample_seed);
        const TrajectorySet samples = stage(where + "/sample_trajectories", [&] {
            return sample_trajectories(model, soft_backward(model, *reference).policy, get<Index>(cfg, "samples"), sample_seed);
        });
        for (std::size_t i = 0; i < values.size(); ++i)
            scores(static_cast<Index>(i), static_cast<Index>(k)) =
                stage(where + "/transfer_eval", [&] { return transfer_eval(values[i], model, samples); });
        target_names[k] = is_grid_preset(targets[k]) ? targets[k] : fs::path(targets[k]).stem().string();
    });

    std::vector<std::string> reward_names;
    for (const Named& r : rewards) reward_names.push_back(r.name);
    run.out.table("scores.txt", scores);
    run.out.document("summary.json", {{"rows", reward_names}, {"columns", target_names}});
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        std::cout << rewards[i].name;
        for (Index k = 0; k < scores.cols(); ++k) std::cout << "  " << target_names[static_cast<std::size_t>(k)] << " " << scores(static_cast<Index>(i), k);
        std::cout << "\n";
    }
}

// ---------------------------------------------------------------- driver

int execute(const std::string& command, const std::string& config_path, const json& overrides, const std::string& out_dir,
            const std::function<void(Run&)>& body) {
    Run run(command, defaults_for(command), out_dir);
    json manifest = {{"manifest_version", 1},
                     {"command", command},
                     {"tool", "tvirl_cli"},
                     {"version", TVIRL_VERSION},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"compiler", __VERSION__}};
    int status = 0;
    try {
        stage("config", [&] {
            fs::create_directories(out_dir);
            if (!config_path.empty()) merge(run.config, load_config_file(config_path, command));
            merge(run.config, overrides);
        });
        manifest["workers"] = stage("config", [] { return worker_count(); });
        body(run);
        manifest["status"] = run.nonconverged ? "nonconverged" : "ok";
        if (run.nonconverged) {
            const bool allowed = run.config.value("allow_nonconverged", false);
            std::cerr << "tvirl_cli " << command << ": a solver did not converge"
                      << (allowed ? " (allowed)" : "; rerun with --allow-nonconverged to accept") << "\n";
            if (!allowed) status = kExitNonConverged;
        }
    } catch (const StageError& e) {
        run.out.remove_written();
        manifest["status"] = "failed";
        manifest["failed_stage"] = e.stage();
        manifest["error"] = e.what();
        std::cerr << "tvirl_cli " << command << ": stage '" << e.stage() << "' failed: " << e.what() << "\n";
        status = kExitError;
    } catch (const std::exception& e) {
        run.out.remove_written();
        manifest["status"] = "failed";
        manifest["failed_stage"] = "run";
        manifest["error"] = e.what();
        std::cerr << "tvirl_cli " << command << ": " << e.what() << "\n";
        status = kExitError;
    }
    manifest["config"] = run.config;
    manifest["seeds"] = run.seeds;
    manifest["tolerances"] = run.tolerances;
    manifest["outputs"] = run.out.written();
    try {
        write_json_file(fs::path(out_dir) / "manifest.json", manifest);
    } catch (const std::exception& e) {
        std::cerr << "tvirl_cli " << command << ": cannot write manifest: " << e.what() << "\n";
        status = kExitError;
    }
    return status;
}

/// Collects the flags a user actually passed as config overrides.
class Overrides {
public:
    explicit Overrides(CLI::App* app) : app_(app) {}

    template <class T>
    CLI::Option* add(const std::string& flag, const std::string& key, const std::string& help) {
        auto value = std::make_shared<T>();
        CLI::Option* opt = app_->add_option(flag, *value, help);
        appliers_.push_back([opt, value, key](json& doc) {
            if (opt->count() > 0) doc[key] = *value;
        });
        return opt;
    }

    void flag(const std::string& flag, const std::string& key, const std::string& help) {
        CLI::Option* opt = app_->add_flag(flag, help);
        appliers_.push_back([opt, key](json& doc) {
            if (opt->count() > 0) doc[key] = true;
        });
    }

    /// Extra hook for options that need custom conversion.
    void custom(std::function<void(json&)> apply) { appliers_.push_back(std::move(apply)); }

    json collect() const {
        json doc = json::object();
        for (const auto& apply : appliers_) apply(doc);
        return doc;
    }

private:
    CLI::App* app_;
    std::vector<std::function<void(json&)>> appliers_;
};

struct Subcommand {
    CLI::App* app = nullptr;
    std::unique_ptr<Overrides> overrides;
    std::string config;
    std::string out;
    std::function<void(Run&)> body;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-varying inverse reinforcement learning experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(TVIRL_VERSION));

    std::vector<std::unique_ptr<Subcommand>> commands;
    auto make = [&](const std::string& name, const std::string& help, std::function<void(Run&)> body) -> Subcommand& {
        auto sub = std::make_unique<Subcommand>();
        sub->app = app.add_subcommand(name, help);
        sub->overrides = std::make_unique<Overrides>(sub->app);
        sub->body = std::move(body);
        sub->app->add_option("--config", sub->config, "JSON config file or manifest of an earlier run")->check(CLI::ExistingFile);
        sub->app->add_option("--out", sub->out, "Output directory")->required();
        sub->overrides->flag("--allow-nonconverged", "allow_nonconverged", "Exit 0 even if a solver hit its iteration cap");
        commands.push_back(std::move(sub));
        return *commands.back();
    };

    Subcommand& gen = make("gen", "Gridworld, random reward, exact policy and trajectories", run_gen);
    gen.overrides->add<std::uint64_t>("--seed", "seed", "Master seed");
    gen.overrides->add<std::string>("--grid", "grid", "open, blocked, sticky or a grid spec JSON file");
    gen.overrides->add<Index>("--horizon", "horizon", "Horizon T");
    gen.overrides->add<std::string>("--reward", "reward", "piecewise or features");
    gen.overrides->add<Index>("--switches", "switches", "Switch count of a piecewise reward");
    gen.overrides->add<Index>("--trajectories", "trajectories", "Trajectories to sample (0 for none)");
    gen.overrides->add<Index>("--repetitions", "repetitions", "Independent instances, written to rep_* subdirectories");

    Subcommand& minswitch = make("minswitch", "Minimally switching reward from an exact policy or trajectories", run_minswitch);
    minswitch.overrides->add<std::string>("--input", "input", "Instance directory or directory of rep_* instances");
    minswitch.overrides->add<std::string>("--mode", "mode", "exact (policy.txt) or robust (trajectories.txt)");
    minswitch.overrides->add<double>("--delta", "delta", "Confidence level of the robust bounds");
    minswitch.overrides->add<double>("--tol", "tol", "Feasibility tolerance");

    Subcommand& lowrank = make("lowrank", "Nuclear-norm reward recovery and feature decomposition", run_lowrank);
    lowrank.overrides->add<std::string>("--input", "input", "Instance directory or directory of rep_* instances");
    lowrank.overrides->add<std::string>("--mode", "mode", "exact (policy.txt) or robust (trajectories.txt)");
    lowrank.overrides->add<double>("--delta", "delta", "Confidence level of the robust bounds");
    lowrank.overrides->add<double>("--tol", "tol", "ADMM primal and dual residual tolerance");
    lowrank.overrides->add<double>("--rho", "rho", "Initial ADMM penalty");
    lowrank.overrides->add<long>("--max-iter", "max_iter", "ADMM iteration cap");
    lowrank.overrides->add<double>("--rank-tol", "rank_tol", "Relative singular value cutoff");

    Subcommand& estimate = make("estimate", "Empirical policy, visit counts and log-deviation bounds", run_estimate);
    estimate.overrides->add<std::string>("--input", "input", "Instance directory or directory of rep_* instances");
    estimate.overrides->add<double>("--delta", "delta", "Confidence level");

    Subcommand& ari = make("ari", "Adjusted Rand index of two label files", run_ari);
    ari.overrides->add<std::string>("--a", "a", "First label file");
    ari.overrides->add<std::string>("--b", "b", "Second label file");

    Subcommand& transfer = make("transfer", "Transfer scores of rewards on target gridworlds", run_transfer);
    transfer.overrides->add<std::uint64_t>("--seed", "seed", "Master seed");
    auto reward_list = std::make_shared<std::vector<std::string>>();
    CLI::Option* reward_opt =
        transfer.app->add_option("--reward", *reward_list, "NAME=PATH of a reward table; repeatable, first is the reference");
    transfer.overrides->custom([reward_opt, reward_list](json& doc) {
        if (reward_opt->count() == 0) return;
        json list = json::array();
        for (const std::string& item : *reward_list) {
            const auto eq = item.find('=');
            if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--reward", "expected NAME=PATH, got " + item);
            list.push_back({{"name", item.substr(0, eq)}, {"path", item.substr(eq + 1)}});
        }
        doc["rewards"] = list;
    });
    transfer.overrides->add<std::vector<std::string>>("--target", "targets", "Preset name or grid spec file; repeatable");
    transfer.overrides->add<std::string>("--reference", "reference", "Reward that generates the reference samples");
    transfer.overrides->add<Index>("--samples", "samples", "Reference trajectories per target");

    try {
        app.parse(argc, argv);
        for (const auto& sub : commands)
            if (sub->app->parsed())
                return execute(sub->app->get_name(), sub->config, sub->overrides->collect(), sub->out, sub->body);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    return kExitError;
}
