#include "oracles.hpp"

#include "tvirl/bench.hpp"
#include "tvirl/soft_rl.hpp"
#include "tvirl/text_io.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

using namespace tvirl;

TEST_CASE("format_double and parse_double round trip") {
    for (double v : {0.0, -0.0, 1.0, 0.1, -2.5e-300, 1.0 / 3.0, 6.02214076e23, std::numeric_limits<double>::max(),
                     std::numeric_limits<double>::denorm_min()}) {
        const double back = parse_double(format_double(v));
        CHECK(back == v);
        CHECK(std::signbit(back) == std::signbit(v));
    }
    const Mat random = oracle::random_matrix(20, 20, 1);
    for (Index i = 0; i < random.size(); ++i) CHECK(parse_double(format_double(random(i))) == random(i));
    CHECK(std::isinf(parse_double(format_double(std::numeric_limits<double>::infinity()))));
    CHECK(parse_double("-inf") < 0);
    CHECK(std::isnan(parse_double(format_double(std::nan("")))));
    CHECK(parse_double("+1.5") == 1.5);
    CHECK_THROWS_AS(parse_double("1.5x"), std::invalid_argument);
    CHECK_THROWS_AS(parse_double(""), std::invalid_argument);
    CHECK_THROWS_AS(parse_double("abc"), std::invalid_argument);
}

TEST_CASE("table round trip") {
    const Mat table = oracle::random_matrix(7, 3, 2);
    std::stringstream ss;
    write_table(ss, table);
    CHECK(read_table(ss) == table);

    std::stringstream empty;
    write_table(empty, Mat(0, 4));
    CHECK(read_table(empty).cols() == 4);

    std::stringstream truncated("2 2\n1 2\n3\n");
    CHECK_THROWS_AS(read_table(truncated), std::runtime_error);
    std::stringstream garbage("2 x\n");
    CHECK_THROWS_AS(read_table(garbage), std::runtime_error);
    std::stringstream bad_entry("1 1\nfoo\n");
    CHECK_THROWS_AS(read_table(bad_entry), std::invalid_argument);
}

TEST_CASE("policy round trip") {
    const MdpModel model = make_gridworld(open_grid_spec(3, 3), 0.9, 4);
    const Policy pi = soft_backward(model, TimeVaryingReward(oracle::random_matrix(45, 4, 3))).policy;
    std::stringstream ss;
    write_policy(ss, pi);
    const Policy back = read_policy(ss);
    REQUIRE(back.horizon() == 4);
    for (Index t = 0; t < 4; ++t) CHECK(back.table(t) == pi.table(t));
    std::stringstream wrong("pilocy 1 1 1\n1\n");
    CHECK_THROWS_AS(read_policy(wrong), std::runtime_error);
    std::stringstream zero("policy 0 2 2\n");
    CHECK_THROWS_AS(read_policy(zero), std::runtime_error);
}

TEST_CASE("trajectory round trip") {
    const MdpModel model = make_gridworld(open_grid_spec(3, 3), 0.9, 6);
    const TrajectorySet data = sample_trajectories(model, Policy::uniform(5, 9, 6), 200, 42);
    std::stringstream ss;
    write_trajectories(ss, data);
    const TrajectorySet back = read_trajectories(ss);
    CHECK(back == data);
    CHECK(back.seed() == 42);

    std::stringstream out_of_order("N 2\nT 1\nseed 0\n0 1 0 1\n2 1 0 1\n");
    CHECK_THROWS_AS(read_trajectories(out_of_order), std::runtime_error);
    std::stringstream short_record("N 1\nT 2\nseed 0\n0 1 0 1\n");
    CHECK_THROWS_AS(read_trajectories(short_record), std::runtime_error);
}

TEST_CASE("model JSON round trip and shape errors") {
    const MdpModel model = make_gridworld(sticky_grid_spec(), 0.9, 7);
    const nlohmann::json doc = model_to_json(model);
    const MdpModel back = model_from_json(doc);
    CHECK(back.n_states() == 25);
    CHECK(back.n_actions() == 5);
    CHECK(back.gamma() == 0.9);
    CHECK(back.horizon() == 7);
    CHECK(back.mu0() == model.mu0());
    for (Index a = 0; a < 5; ++a) CHECK(back.transition(a) == model.transition(a));
    // through text as well
    CHECK(model_to_json(model_from_json(nlohmann::json::parse(doc.dump()))) == doc);

    nlohmann::json missing = doc;
    missing.erase("gamma");
    CHECK_THROWS_WITH_AS(model_from_json(missing), doctest::Contains("gamma"), std::invalid_argument);

    nlohmann::json short_row = doc;
    short_row["transitions"][2][3].erase(0);
    CHECK_THROWS_WITH_AS(model_from_json(short_row), doctest::Contains("transitions[2] row 3"), std::invalid_argument);

    nlohmann::json few_actions = doc;
    few_actions["transitions"].erase(4);
    CHECK_THROWS_AS(model_from_json(few_actions), std::invalid_argument);

    nlohmann::json not_stochastic = doc;
    not_stochastic["transitions"][0][0][0] = 0.5;
    CHECK_THROWS_AS(model_from_json(not_stochastic), std::invalid_argument);
}

TEST_CASE("file helpers") {
    const auto dir = std::filesystem::temp_directory_path() / "tvirl_text_io_test";
    std::filesystem::create_directories(dir);
    write_text_file(dir / "a.txt", "hello\n");
    CHECK(read_text_file(dir / "a.txt") == "hello\n");
    write_json_file(dir / "b.json", nlohmann::json{{"k", 1}});
    CHECK(read_json_file(dir / "b.json").at("k") == 1);
    write_text_file(dir / "c.json", "{ not json");
    CHECK_THROWS_AS(read_json_file(dir / "c.json"), std::runtime_error);
    CHECK_THROWS_AS(read_text_file(dir / "missing.txt"), std::runtime_error);
    std::filesystem::remove_all(dir);
}
