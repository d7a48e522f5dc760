#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "fqme/estimators.hpp"
#include "fqme/simstudy.hpp"

namespace fqme {

// Entry point of the fqme command; returns the process exit code.
// 0 success, 2 MissingTruth, 3 other library errors, 4 I/O failures; command
// line mistakes use the argument parser's codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// SimConfig <-> JSON. Keys mirror the struct fields; missing keys keep the
// base-configuration defaults.
nlohmann::json to_json(const SimConfig& config);
SimConfig sim_config_from_json(const nlohmann::json& j);

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

// Long-format estimate rows: method,tau,target,index,t,estimate,lower,upper.
// `boot` may be null, leaving the interval columns empty.
void write_estimates_csv(std::ostream& out, const EstimateSet& e, const Eigen::VectorXd& grid,
                         const std::vector<std::string>& covariate_names, const BootstrapResult* boot);

// Reads files written by write_estimates_csv back into estimates (β₀, β₁ on
// the grid, β₂, γ). The grid is returned through `grid`.
std::vector<EstimateSet> read_estimates_csv(const std::filesystem::path& path, Eigen::VectorXd& grid);

// Minimal SVG line plot of β̂₁(t), with the interval band when given.
std::string render_beta1_svg(const Eigen::VectorXd& grid, const EstimateSet& e, const BootstrapResult* boot);

}  // namespace fqme
