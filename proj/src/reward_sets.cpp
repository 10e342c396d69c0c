#include "tvirl/reward_sets.hpp"

#include "tvirl/least_squares.hpp"
#include "tvirl/simplex.hpp"
#include "tvirl/text_io.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace tvirl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// the LP optimum of a feasible system can land a few ulps above zero
constexpr double kPhase1RoundingFloor = 1e-10;

FeasiblePoint make_point(const ConstraintSet& cs, Vec x) {
    FeasiblePoint p;
    p.residual = max_violation(cs, x);
    p.r = x;
    p.nu = Vec(0);
    for (const VarBlock& b : cs.layout.blocks()) {
        if (b.name == "r") p.r = x.segment(b.offset, b.size);
        if (b.name == "nu") p.nu = x.segment(b.offset, b.size);
    }
    p.x = std::move(x);
    return p;
}

bool has_chain_shape(const ConstraintSet& cs) {
    const ChainShape& c = cs.chain;
    if (c.flat_size < 1 || c.n_states < 1 || c.blocks < 1 || c.flat_size % c.n_states != 0) return false;
    if (cs.rows() != c.blocks * c.flat_size || cs.cols() != c.flat_size + c.blocks * c.n_states) return false;
    const Index mn = c.flat_size;
    const Index n = c.n_states;
    const Mat& a = cs.a_matrix;
    for (Index b = 0; b < c.blocks; ++b) {
        const auto rows = a.middleRows(b * mn, mn);
        if (!rows.leftCols(mn).isIdentity(0.0)) return false;
        for (Index k = 0; k < mn; ++k) {
            const Index s = FlatIndex::unflatten(k, n).state;
            for (Index col = 0; col < c.blocks * n; ++col) {
                const Index block = col / n;
                const double v = rows(k, mn + col);
                if (block == b) {
                    if (v != ((col % n) == s ? -1.0 : 0.0)) return false;
                } else if (block != b + 1 && v != 0.0) {
                    return false;
                }
            }
        }
    }
    return true;
}

// Eliminates the value blocks of an invariant chain through its action-0 rows.
Vec solve_invariant_chain(const ConstraintSet& cs) {
    const Index mn = cs.chain.flat_size;
    const Index n = cs.chain.n_states;
    const Index m = mn / n;
    const Index blocks = cs.chain.blocks;
    const Mat& a = cs.a_matrix;
    const Vec& h = cs.lower;

    // value block b = coef[b] * r + offset[b]
    std::vector<Mat> coef(static_cast<std::size_t>(blocks + 1), Mat::Zero(n, mn));
    std::vector<Vec> offset(static_cast<std::size_t>(blocks + 1), Vec::Zero(n));
    Mat reduced = Mat::Zero(blocks * (m - 1) * n, mn);
    Vec rhs = Vec::Zero(reduced.rows());

    for (Index b = blocks - 1; b >= 0; --b) {
        const Index row0 = b * mn;
        const bool has_next = b + 1 < blocks;
        const Mat& next_coef = coef[static_cast<std::size_t>(b + 1)];
        const Vec& next_offset = offset[static_cast<std::size_t>(b + 1)];
        Mat g;  // coupling to the next value block, rows in FlatIndex order
        if (has_next) g = a.block(row0, mn + (b + 1) * n, mn, n);

        Mat& cur_coef = coef[static_cast<std::size_t>(b)];
        Vec& cur_offset = offset[static_cast<std::size_t>(b)];
        for (Index s = 0; s < n; ++s) {
            const Index k0 = FlatIndex::flatten(0, s, n);
            cur_coef(s, k0) += 1.0;
            cur_offset(s) -= h(row0 + k0);
        }
        if (has_next) {
            const Mat g0 = g.topRows(n);
            cur_coef.noalias() += g0 * next_coef;
            cur_offset.noalias() += g0 * next_offset;
        }

        for (Index act = 1; act < m; ++act) {
            for (Index s = 0; s < n; ++s) {
                const Index k = FlatIndex::flatten(act, s, n);
                const Index k0 = FlatIndex::flatten(0, s, n);
                const Index row = (b * (m - 1) + (act - 1)) * n + s;
                reduced(row, k) += 1.0;
                reduced(row, k0) -= 1.0;
                rhs(row) = h(row0 + k) - h(row0 + k0);
                if (has_next) {
                    const Eigen::RowVectorXd dg = g.row(k) - g.row(k0);
                    reduced.row(row).noalias() += dg * next_coef;
                    rhs(row) -= dg.dot(next_offset);
                }
            }
        }
    }

    const Vec r = min_norm_least_squares(reduced, rhs).x;
    Vec x(cs.cols());
    x.head(mn) = r;
    for (Index b = 0; b < blocks; ++b)
        x.segment(mn + b * n, n) = coef[static_cast<std::size_t>(b)] * r + offset[static_cast<std::size_t>(b)];
    return x;
}

}  // namespace

VarLayout& VarLayout::add(std::string name, Index size) {
    blocks_.push_back(VarBlock{std::move(name), total(), size});
    return *this;
}

Index VarLayout::total() const { return blocks_.empty() ? 0 : blocks_.back().offset + blocks_.back().size; }

const VarBlock& VarLayout::find(const std::string& name) const {
    for (const VarBlock& b : blocks_)
        if (b.name == name) return b;
    throw std::out_of_range("VarLayout: no block named '" + name + "'");
}

bool ConstraintSet::is_equality() const { return (lower.array() == upper.array()).all(); }

void ConstraintSet::validate() const {
    if (lower.size() != rows() || upper.size() != rows())
        throw std::invalid_argument("ConstraintSet: bound vectors do not match the row count");
    if (!a_matrix.allFinite()) throw std::invalid_argument("ConstraintSet: matrix has non-finite entries");
    Index expect = 0;
    for (const VarBlock& b : layout.blocks()) {
        if (b.offset != expect || b.size < 0) throw std::invalid_argument("ConstraintSet: layout is not a partition");
        expect += b.size;
    }
    if (expect != cols()) throw std::invalid_argument("ConstraintSet: layout does not cover every column");
    for (Index i = 0; i < rows(); ++i) {
        if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) > upper(i))
            throw std::invalid_argument("ConstraintSet: row " + std::to_string(i) + " has lower > upper");
    }
}

LogPolicyBand LogPolicyBand::exact(const Policy& policy) {
    LogPolicyBand band;
    const Index mn = policy.n_actions() * policy.n_states();
    band.lower_.resize(mn, policy.horizon());
    for (Index t = 0; t < policy.horizon(); ++t) band.lower_.col(t) = policy.log_vector(t);
    band.upper_ = band.lower_;
    band.exact_ = true;
    return band;
}

LogPolicyBand LogPolicyBand::robust(const Policy& pi_hat, const Vec& bound) {
    const Index n = pi_hat.n_states();
    const Index mn = pi_hat.n_actions() * n;
    if (bound.size() != mn * pi_hat.horizon())
        throw std::invalid_argument("LogPolicyBand::robust: bound vector length " + std::to_string(bound.size()) +
                                    ", expected " + std::to_string(mn * pi_hat.horizon()));
    LogPolicyBand band;
    band.exact_ = false;
    band.lower_.resize(mn, pi_hat.horizon());
    band.upper_.resize(mn, pi_hat.horizon());
    for (Index t = 0; t < pi_hat.horizon(); ++t) {
        for (Index k = 0; k < mn; ++k) {
            const double b = bound(t * mn + k);
            if (!(b >= 0.0)) throw std::invalid_argument("LogPolicyBand::robust: negative bound entry");
            const FlatIndex fi = FlatIndex::unflatten(k, n);
            const double p = pi_hat.prob(t, fi.action, fi.state);
            if (std::isinf(b) || !(p > 0.0)) {
                band.lower_(k, t) = -kInf;
                band.upper_(k, t) = kInf;
            } else {
                band.lower_(k, t) = std::log(p) - b;
                band.upper_(k, t) = std::log(p) + b;
            }
        }
    }
    return band;
}

ConstraintSet build_full_set(const MdpModel& model, const LogPolicyBand& band) {
    const Index horizon = model.horizon();
    const Index mn = model.flat_size();
    if (band.horizon() != horizon || band.flat_size() != mn)
        throw std::invalid_argument("build_full_set: policy band does not match the model");
    ConstraintSet cs;
    cs.a_matrix.resize(horizon * mn, horizon * mn + horizon * model.n_states());
    cs.a_matrix.leftCols(horizon * mn).setIdentity();
    cs.a_matrix.rightCols(horizon * model.n_states()) = build_phi(model, horizon);
    cs.lower = band.lower().reshaped();
    cs.upper = band.upper().reshaped();
    cs.layout.add("r", horizon * mn).add("nu", horizon * model.n_states());
    cs.structure = SetStructure::FullHorizon;
    cs.chain = ChainShape{mn, model.n_states(), horizon, 0};
    return cs;
}

ConstraintSet build_exact_set(const MdpModel& model, const Policy& policy) {
    return build_full_set(model, LogPolicyBand::exact(policy));
}

ConstraintSet build_robust_set(const MdpModel& model, const Policy& pi_hat, const Vec& bound) {
    return build_full_set(model, LogPolicyBand::robust(pi_hat, bound));
}

ConstraintSet build_invariant_set(const MdpModel& model, const LogPolicyBand& band, Index first, Index last,
                                  const Vec& nu_boundary) {
    if (first >= last)
        throw std::invalid_argument("build_invariant_set: empty interval [" + std::to_string(first) + ", " +
                                    std::to_string(last) + ")");
    if (first < 0 || last > model.horizon() || band.horizon() != model.horizon())
        throw std::invalid_argument("build_invariant_set: interval outside the horizon");
    const Index n = model.n_states();
    const Index mn = model.flat_size();
    if (nu_boundary.size() != n) throw std::invalid_argument("build_invariant_set: boundary has the wrong length");
    const Index blocks = last - first;

    ConstraintSet cs;
    cs.a_matrix = Mat::Zero(blocks * mn, mn + blocks * n);
    for (Index b = 0; b < blocks; ++b) cs.a_matrix.block(b * mn, 0, mn, mn).setIdentity();
    cs.a_matrix.rightCols(blocks * n) = build_phi(model, blocks);
    cs.lower = band.lower().middleCols(first, blocks).reshaped();
    cs.upper = band.upper().middleCols(first, blocks).reshaped();
    // the boundary value enters the last block row as data
    const Vec folded = model.gamma() * (build_transition_stack(model) * nu_boundary);
    cs.lower.tail(mn) -= folded;
    cs.upper.tail(mn) -= folded;
    cs.layout.add("r", mn).add("nu", blocks * n);
    cs.structure = SetStructure::InvariantChain;
    cs.chain = ChainShape{mn, n, blocks, first};
    return cs;
}

ConstraintSet build_invariant_set(const MdpModel& model, const Policy& policy, Index first, Index last,
                                  const Vec& nu_boundary) {
    return build_invariant_set(model, LogPolicyBand::exact(policy), first, last, nu_boundary);
}

double max_violation(const ConstraintSet& cs, const Vec& x) {
    if (x.size() != cs.cols()) throw std::invalid_argument("max_violation: point has the wrong length");
    const Vec ax = cs.a_matrix * x;
    if (!ax.allFinite()) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (Index i = 0; i < ax.size(); ++i) {
        if (std::isfinite(cs.lower(i))) worst = std::max(worst, cs.lower(i) - ax(i));
        if (std::isfinite(cs.upper(i))) worst = std::max(worst, ax(i) - cs.upper(i));
    }
    return worst;
}

std::optional<FeasiblePoint> check_feasible(const ConstraintSet& cs, double tol) {
    cs.validate();
    if (cs.is_equality()) {
        Vec x;
        if (cs.structure == SetStructure::InvariantChain && has_chain_shape(cs)) {
            x = solve_invariant_chain(cs);
        } else {
            x = min_norm_least_squares(cs.a_matrix, cs.lower).x;
        }
        FeasiblePoint p = make_point(cs, std::move(x));
        if (p.residual <= tol) return p;
        return std::nullopt;
    }
    const Phase1Result lp = phase1_feasibility(cs.a_matrix, cs.lower, cs.upper);
    if (lp.violation > feasibility_threshold(cs, tol)) return std::nullopt;
    return make_point(cs, lp.x);
}

double feasibility_threshold(const ConstraintSet& cs, double tol) {
    return cs.is_equality() ? tol : tol + kPhase1RoundingFloor;
}

FeasiblePoint least_squares_point(const ConstraintSet& cs) {
    cs.validate();
    if (!cs.is_equality()) throw std::invalid_argument("least_squares_point: interval systems are not supported");
    return make_point(cs, min_norm_least_squares(cs.a_matrix, cs.lower).x);
}

double band_violation(const MdpModel& model, const LogPolicyBand& band, const TimeVaryingReward& reward,
                      const ValueFunction& nu) {
    const Index n = model.n_states();
    const Index horizon = model.horizon();
    if (reward.horizon() != horizon || nu.horizon() != horizon || band.horizon() != horizon)
        throw std::invalid_argument("band_violation: horizon mismatch");
    double worst = 0.0;
    for (Index t = 0; t < horizon; ++t) {
        for (Index a = 0; a < model.n_actions(); ++a) {
            const Vec cont = model.transition(a) * nu.at(t + 1);
            for (Index s = 0; s < n; ++s) {
                const Index k = FlatIndex::flatten(a, s, n);
                const double value = reward(t, k) - nu.at(t)(s) + model.gamma() * cont(s);
                if (std::isfinite(band.lower()(k, t))) worst = std::max(worst, band.lower()(k, t) - value);
                if (std::isfinite(band.upper()(k, t))) worst = std::max(worst, value - band.upper()(k, t));
            }
        }
    }
    return worst;
}

void write_constraint_set(std::ostream& out, const ConstraintSet& cs) {
    out << cs.rows() << ' ' << cs.cols() << '\n';
    for (Index i = 0; i < cs.rows(); ++i) {
        for (Index j = 0; j < cs.cols(); ++j) out << (j ? " " : "") << format_double(cs.a_matrix(i, j));
        out << '\n';
    }
    for (const Vec* v : {&cs.lower, &cs.upper}) {
        for (Index i = 0; i < v->size(); ++i) out << (i ? " " : "") << format_double((*v)(i));
        out << '\n';
    }
}

ConstraintSet read_constraint_set(std::istream& in) {
    Index rows = 0, cols = 0;
    if (!(in >> rows >> cols) || rows < 0 || cols < 0)
        throw std::runtime_error("read_constraint_set: malformed header");
    ConstraintSet cs;
    cs.a_matrix.resize(rows, cols);
    cs.lower.resize(rows);
    cs.upper.resize(rows);
    std::string token;
    auto next = [&](const char* where, Index i, Index j) {
        if (!(in >> token))
            throw std::runtime_error(std::string("read_constraint_set: truncated ") + where + " at row " +
                                     std::to_string(i) + ", column " + std::to_string(j));
        return parse_double(token);
    };
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) cs.a_matrix(i, j) = next("matrix", i, j);
    for (Index i = 0; i < rows; ++i) cs.lower(i) = next("lower bounds", i, 0);
    for (Index i = 0; i < rows; ++i) cs.upper(i) = next("upper bounds", i, 0);
    cs.layout.add("x", cols);
    cs.validate();
    return cs;
}

}  // namespace tvirl
