#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "twoscale/config.hpp"
#include "twoscale/riccati_solver.hpp"

namespace twoscale {

struct Verdict {
    std::string criterion;
    bool pass = false;
    std::string detail;
};

/// Machine-readable record of one command invocation.
struct RunReport {
    std::string command;
    std::string run_id;  // derived from command, config hash and arguments
    std::string config_hash;
    nlohmann::json results = nlohmann::json::object();
    std::vector<Verdict> verdicts;
    std::vector<std::pair<std::string, double>> timings;  // seconds

    [[nodiscard]] bool all_pass() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Throws config_error when `report_path` does not carry `config_hash`.
void verify_report_hash(const std::string& report_path, const std::string& config_hash);

struct ValidateResult {
    std::vector<std::string> violations;
    RunReport report;
};

/// Parse errors become a single violation. `adjust` applies command-line
/// overrides before the structural checks.
ValidateResult run_validate(const std::string& config_path,
                            const std::function<void(InstanceConfig&)>& adjust = {});

enum class SolveSystem { full, limit, transient };

/// Writes the (t, state, P, H, theta) grid to `csv` when given and a
/// human-readable summary to `summary`. The limit systems also print the
/// sup-gap against the full system at the same eps.
RunReport run_solve(const InstanceConfig& cfg, SolveSystem system, std::ostream* csv, std::ostream& summary);

/// Analytic frontier over problem.z_grid (or z alone). With sim.paths > 0 each
/// z is also simulated under its exact optimal control.
RunReport run_frontier(const InstanceConfig& cfg, std::ostream* csv, std::ostream& summary);

/// eps sweep: sup-gaps, Delta(eps) under the constructed control, and verdicts.
/// sim.paths = 0 skips the Monte Carlo columns.
RunReport run_converge(const InstanceConfig& cfg, std::ostream* csv, std::ostream& summary);

/// Lagrange multiplier used by converge: problem.lambda if given, otherwise
/// lambda* of the limit problem at problem.z (initial regime must be recurrent).
double converge_lambda(const InstanceConfig& cfg);

}  // namespace twoscale
