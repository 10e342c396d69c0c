#pragma once

#include "tvirl/mdp.hpp"
#include "tvirl/soft_rl.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>

namespace tvirl {

/// Shortest text that reads back to the same double; "inf", "-inf", "nan" for the rest.
std::string format_double(double value);
/// Accepts everything format_double emits. Throws std::invalid_argument otherwise.
double parse_double(const std::string& token);

/// "rows cols" header line followed by one line per row.
void write_table(std::ostream& out, const Mat& table);
Mat read_table(std::istream& in);

/// "policy T m n" header followed by T*m rows of n probabilities (table t, action a).
void write_policy(std::ostream& out, const Policy& policy);
Policy read_policy(std::istream& in);

/**
 * Header records "N <count>", "T <horizon>", "seed <seed>", then one line per
 * trajectory: index s_0 a_0 s_1 a_1 ... s_{T-1} a_{T-1} s_T.
 */
void write_trajectories(std::ostream& out, const TrajectorySet& trajectories);
TrajectorySet read_trajectories(std::istream& in);

/**
 * Model document: {"n", "m", "gamma", "T", "mu0": [n], "transitions": [m][n][n]}.
 * Shape mismatches are reported with the action/row/column that failed.
 */
MdpModel model_from_json(const nlohmann::json& doc);
nlohmann::json model_to_json(const MdpModel& model);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace tvirl
