#include "tvirl/mdp.hpp"

#include "tvirl/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tvirl {

namespace {

void check_distribution(const Eigen::Ref<const Vec>& p, const std::string& what) {
    double sum = 0.0;
    for (Index j = 0; j < p.size(); ++j) {
        if (!(p(j) >= 0.0) || !std::isfinite(p(j))) {
            std::ostringstream msg;
            msg << what << ": entry " << j << " is " << p(j) << ", expected a probability";
            throw std::invalid_argument(msg.str());
        }
        sum += p(j);
    }
    if (std::abs(sum - 1.0) > kStochasticTol) {
        std::ostringstream msg;
        msg.precision(17);
        msg << what << ": sums to " << sum << ", expected 1";
        throw std::invalid_argument(msg.str());
    }
}

}  // namespace

MdpModel::MdpModel(std::vector<Mat> transitions, Vec mu0, double gamma, Index horizon)
    : transitions_(std::move(transitions)), mu0_(std::move(mu0)), gamma_(gamma), horizon_(horizon) {
    if (transitions_.empty()) throw std::invalid_argument("MdpModel: at least one action is required");
    m_ = static_cast<Index>(transitions_.size());
    n_ = mu0_.size();
    if (n_ < 1) throw std::invalid_argument("MdpModel: at least one state is required");
    if (!(gamma_ >= 0.0 && gamma_ <= 1.0)) throw std::invalid_argument("MdpModel: gamma must lie in [0, 1]");
    if (horizon_ < 1) throw std::invalid_argument("MdpModel: horizon must be positive");
    check_distribution(mu0_, "mu0");
    for (Index a = 0; a < m_; ++a) {
        const Mat& p = transitions_[static_cast<std::size_t>(a)];
        if (p.rows() != n_ || p.cols() != n_) {
            std::ostringstream msg;
            msg << "transitions[" << a << "]: shape " << p.rows() << "x" << p.cols() << ", expected " << n_ << "x"
                << n_;
            throw std::invalid_argument(msg.str());
        }
        for (Index i = 0; i < n_; ++i) {
            check_distribution(p.row(i).transpose(),
                               "transitions[" + std::to_string(a) + "] row " + std::to_string(i));
        }
    }
}

MdpModel MdpModel::with_horizon(Index horizon) const { return MdpModel(transitions_, mu0_, gamma_, horizon); }

TimeVaryingReward::TimeVaryingReward(Mat values) : values_(std::move(values)) {
    if (!values_.allFinite()) throw std::invalid_argument("TimeVaryingReward: entries must be finite");
}

TimeVaryingReward TimeVaryingReward::zeros(Index flat_size, Index horizon) {
    return TimeVaryingReward(Mat::Zero(flat_size, horizon));
}

Policy::Policy(std::vector<Mat> tables) : tables_(std::move(tables)) {
    for (std::size_t t = 0; t < tables_.size(); ++t) {
        const Mat& tab = tables_[t];
        if (tab.rows() != tables_.front().rows() || tab.cols() != tables_.front().cols())
            throw std::invalid_argument("Policy: table " + std::to_string(t) + " has a different shape");
        for (Index s = 0; s < tab.cols(); ++s) {
            check_distribution(tab.col(s), "policy t=" + std::to_string(t) + " state " + std::to_string(s));
        }
    }
}

Policy Policy::unchecked(std::vector<Mat> tables) {
    Policy p;
    p.tables_ = std::move(tables);
    return p;
}

Policy Policy::uniform(Index n_actions, Index n_states, Index horizon) {
    return Policy(std::vector<Mat>(static_cast<std::size_t>(horizon),
                                   Mat::Constant(n_actions, n_states, 1.0 / static_cast<double>(n_actions))));
}

bool Policy::strictly_positive() const {
    for (const Mat& tab : tables_)
        if ((tab.array() <= 0.0).any()) return false;
    return true;
}

Vec Policy::log_vector(Index t) const {
    const Mat& tab = table(t);
    const Index n = tab.cols();
    Vec out(tab.size());
    for (Index a = 0; a < tab.rows(); ++a) {
        for (Index s = 0; s < n; ++s) {
            const double p = tab(a, s);
            if (!(p > 0.0)) {
                std::ostringstream msg;
                msg << "log-policy undefined: pi_" << t << "(a=" << a << " | s=" << s << ") = " << p;
                throw std::domain_error(msg.str());
            }
            out(FlatIndex::flatten(a, s, n)) = std::log(p);
        }
    }
    return out;
}

ValueFunction::ValueFunction(Index n_states, Index horizon) : values_(Mat::Zero(n_states, horizon + 1)) {}

ValueFunction::ValueFunction(Mat values) : values_(std::move(values)) {
    if (values_.cols() < 1) throw std::invalid_argument("ValueFunction: needs at least the terminal column");
    if (!values_.col(values_.cols() - 1).isZero(0.0))
        throw std::invalid_argument("ValueFunction: terminal values must be exactly zero");
}

Mat build_transition_stack(const MdpModel& model) {
    const Index n = model.n_states();
    Mat p(model.flat_size(), n);
    for (Index a = 0; a < model.n_actions(); ++a) p.middleRows(FlatIndex::flatten(a, 0, n), n) = model.transition(a);
    return p;
}

Mat build_E(Index n_actions, Index n_states) {
    Mat e = Mat::Zero(n_actions * n_states, n_states);
    for (Index a = 0; a < n_actions; ++a)
        for (Index s = 0; s < n_states; ++s) e(FlatIndex::flatten(a, s, n_states), s) = 1.0;
    return e;
}

Mat build_phi(const MdpModel& model, Index blocks) {
    if (blocks < 1) throw std::invalid_argument("build_phi: block count must be positive");
    const Index mn = model.flat_size();
    const Index n = model.n_states();
    const Mat e = build_E(model.n_actions(), n);
    const Mat gp = model.gamma() * build_transition_stack(model);
    Mat phi = Mat::Zero(blocks * mn, blocks * n);
    for (Index b = 0; b < blocks; ++b) {
        phi.block(b * mn, b * n, mn, n) = -e;
        if (b + 1 < blocks) phi.block(b * mn, (b + 1) * n, mn, n) = gp;
    }
    return phi;
}

std::vector<Mat> random_transitions(Index n_actions, Index n_states, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Mat> out;
    for (Index a = 0; a < n_actions; ++a) {
        Mat p(n_states, n_states);
        for (Index i = 0; i < n_states; ++i) {
            for (Index j = 0; j < n_states; ++j) p(i, j) = 0.05 + rng.uniform();
            p.row(i) /= p.row(i).sum();
            // force an exact unit row sum so validation at 1e-12 never trips
            p(i, n_states - 1) = 1.0 - (p.row(i).head(n_states - 1).sum());
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace tvirl
