#include "tvirl/text_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace tvirl {

namespace {

std::string expect_token(std::istream& in, const std::string& what) {
    std::string token;
    if (!(in >> token)) throw std::runtime_error("unexpected end of input while reading " + what);
    return token;
}

long long expect_integer(std::istream& in, const std::string& what) {
    const std::string token = expect_token(in, what);
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
        throw std::runtime_error("expected an integer for " + what + ", got '" + token + "'");
    return value;
}

void expect_keyword(std::istream& in, const std::string& keyword) {
    const std::string token = expect_token(in, keyword);
    if (token != keyword) throw std::runtime_error("expected '" + keyword + "', got '" + token + "'");
}

}  // namespace

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, ptr);
}

double parse_double(const std::string& token) {
    if (token == "inf" || token == "+inf") return std::numeric_limits<double>::infinity();
    if (token == "-inf") return -std::numeric_limits<double>::infinity();
    if (token == "nan") return std::numeric_limits<double>::quiet_NaN();
    double value = 0.0;
    const char* begin = token.data();
    if (!token.empty() && token.front() == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
        throw std::invalid_argument("not a number: '" + token + "'");
    return value;
}

void write_table(std::ostream& out, const Mat& table) {
    out << table.rows() << ' ' << table.cols() << '\n';
    for (Index i = 0; i < table.rows(); ++i) {
        for (Index j = 0; j < table.cols(); ++j) out << (j ? " " : "") << format_double(table(i, j));
        out << '\n';
    }
}

Mat read_table(std::istream& in) {
    const auto rows = expect_integer(in, "table row count");
    const auto cols = expect_integer(in, "table column count");
    if (rows < 0 || cols < 0) throw std::runtime_error("read_table: negative dimensions");
    Mat out(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            out(i, j) = parse_double(expect_token(in, "table entry (" + std::to_string(i) + ", " + std::to_string(j) + ")"));
    return out;
}

void write_policy(std::ostream& out, const Policy& policy) {
    out << "policy " << policy.horizon() << ' ' << policy.n_actions() << ' ' << policy.n_states() << '\n';
    for (Index t = 0; t < policy.horizon(); ++t) {
        for (Index a = 0; a < policy.n_actions(); ++a) {
            for (Index s = 0; s < policy.n_states(); ++s) out << (s ? " " : "") << format_double(policy.prob(t, a, s));
            out << '\n';
        }
    }
}

Policy read_policy(std::istream& in) {
    expect_keyword(in, "policy");
    const auto horizon = expect_integer(in, "policy horizon");
    const auto m = expect_integer(in, "policy action count");
    const auto n = expect_integer(in, "policy state count");
    if (horizon < 1 || m < 1 || n < 1) throw std::runtime_error("read_policy: invalid header");
    std::vector<Mat> tables(static_cast<std::size_t>(horizon), Mat(m, n));
    for (Index t = 0; t < horizon; ++t)
        for (Index a = 0; a < m; ++a)
            for (Index s = 0; s < n; ++s) tables[static_cast<std::size_t>(t)](a, s) = parse_double(expect_token(in, "policy entry"));
    return Policy::unchecked(std::move(tables));
}

void write_trajectories(std::ostream& out, const TrajectorySet& trajectories) {
    out << "N " << trajectories.size() << '\n'
        << "T " << trajectories.horizon() << '\n'
        << "seed " << trajectories.seed() << '\n';
    std::string line;
    for (Index i = 0; i < trajectories.size(); ++i) {
        line = std::to_string(i);
        for (Index t = 0; t < trajectories.horizon(); ++t) {
            line += ' ';
            line += std::to_string(trajectories.state(i, t));
            line += ' ';
            line += std::to_string(trajectories.action(i, t));
        }
        line += ' ';
        line += std::to_string(trajectories.state(i, trajectories.horizon()));
        line += '\n';
        out << line;
    }
}

TrajectorySet read_trajectories(std::istream& in) {
    expect_keyword(in, "N");
    const auto count = expect_integer(in, "trajectory count");
    expect_keyword(in, "T");
    const auto horizon = expect_integer(in, "trajectory horizon");
    expect_keyword(in, "seed");
    const std::string seed_token = expect_token(in, "seed");
    std::uint64_t seed = 0;
    {
        const auto [ptr, ec] = std::from_chars(seed_token.data(), seed_token.data() + seed_token.size(), seed);
        if (ec != std::errc() || ptr != seed_token.data() + seed_token.size())
            throw std::runtime_error("read_trajectories: bad seed '" + seed_token + "'");
    }
    if (count < 1 || horizon < 1) throw std::runtime_error("read_trajectories: invalid header");
    TrajectorySet out(count, horizon, seed);
    for (Index i = 0; i < count; ++i) {
        const auto index = expect_integer(in, "trajectory index");
        if (index != i)
            throw std::runtime_error("read_trajectories: expected record " + std::to_string(i) + ", got " +
                                     std::to_string(index));
        for (Index t = 0; t < horizon; ++t) {
            out.set_state(i, t, static_cast<std::int32_t>(expect_integer(in, "state")));
            out.set_action(i, t, static_cast<std::int32_t>(expect_integer(in, "action")));
        }
        out.set_state(i, horizon, static_cast<std::int32_t>(expect_integer(in, "final state")));
    }
    return out;
}

MdpModel model_from_json(const nlohmann::json& doc) {
    for (const char* key : {"n", "m", "gamma", "T", "mu0", "transitions"})
        if (!doc.contains(key)) throw std::invalid_argument(std::string("model: missing field '") + key + "'");
    const Index n = doc.at("n").get<Index>();
    const Index m = doc.at("m").get<Index>();
    if (n < 1 || m < 1) throw std::invalid_argument("model: n and m must be positive");
    const auto& mu0_doc = doc.at("mu0");
    if (!mu0_doc.is_array() || static_cast<Index>(mu0_doc.size()) != n)
        throw std::invalid_argument("model: mu0 has " + std::to_string(mu0_doc.size()) + " entries, expected " +
                                    std::to_string(n));
    Vec mu0(n);
    for (Index s = 0; s < n; ++s) mu0(s) = mu0_doc[static_cast<std::size_t>(s)].get<double>();
    const auto& trans = doc.at("transitions");
    if (!trans.is_array() || static_cast<Index>(trans.size()) != m)
        throw std::invalid_argument("model: transitions has " + std::to_string(trans.size()) + " actions, expected " +
                                    std::to_string(m));
    std::vector<Mat> ps;
    for (Index a = 0; a < m; ++a) {
        const auto& pa = trans[static_cast<std::size_t>(a)];
        if (!pa.is_array() || static_cast<Index>(pa.size()) != n)
            throw std::invalid_argument("model: transitions[" + std::to_string(a) + "] has " +
                                        std::to_string(pa.size()) + " rows, expected " + std::to_string(n));
        Mat p(n, n);
        for (Index i = 0; i < n; ++i) {
            const auto& row = pa[static_cast<std::size_t>(i)];
            if (!row.is_array() || static_cast<Index>(row.size()) != n)
                throw std::invalid_argument("model: transitions[" + std::to_string(a) + "] row " + std::to_string(i) +
                                            " has " + std::to_string(row.size()) + " columns, expected " +
                                            std::to_string(n));
            for (Index j = 0; j < n; ++j) p(i, j) = row[static_cast<std::size_t>(j)].get<double>();
        }
        ps.push_back(std::move(p));
    }
    return MdpModel(std::move(ps), std::move(mu0), doc.at("gamma").get<double>(), doc.at("T").get<Index>());
}

nlohmann::json model_to_json(const MdpModel& model) {
    nlohmann::json doc;
    doc["n"] = model.n_states();
    doc["m"] = model.n_actions();
    doc["gamma"] = model.gamma();
    doc["T"] = model.horizon();
    doc["mu0"] = std::vector<double>(model.mu0().data(), model.mu0().data() + model.n_states());
    nlohmann::json trans = nlohmann::json::array();
    for (Index a = 0; a < model.n_actions(); ++a) {
        nlohmann::json rows = nlohmann::json::array();
        for (Index i = 0; i < model.n_states(); ++i) {
            std::vector<double> row(static_cast<std::size_t>(model.n_states()));
            for (Index j = 0; j < model.n_states(); ++j) row[static_cast<std::size_t>(j)] = model.transition(a)(i, j);
            rows.push_back(row);
        }
        trans.push_back(std::move(rows));
    }
    doc["transitions"] = std::move(trans);
    return doc;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
    write_text_file(path, doc.dump(2) + "\n");
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << contents;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace tvirl
