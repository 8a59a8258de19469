// Command-line front end: validate, solve, frontier, converge.
//
// Exit codes: 0 success, 1 validation or infeasibility, 2 numerical failure.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "twoscale/config.hpp"
#include "twoscale/error.hpp"
#include "twoscale/experiment.hpp"

namespace {

struct Options {
    std::string config;
    std::string out;
    std::string system = "full";
    std::vector<double> eps;
    std::optional<long long> paths;
    std::optional<std::uint64_t> seed;
    std::string verify;
    std::string report;
};

void apply_overrides(twoscale::InstanceConfig& cfg, const Options& o, bool sweep) {
    if (!o.eps.empty()) {
        if (sweep) {
            cfg.sweep = o.eps;
        } else {
            twoscale::require(o.eps.size() == 1, twoscale::ErrorCode::invalid_argument,
                              "--eps takes a single value for this command");
            cfg.chain.epsilon = o.eps.front();
        }
    }
    if (o.paths) {
        twoscale::require(*o.paths >= 0, twoscale::ErrorCode::invalid_argument, "--paths must be nonnegative");
        cfg.sim.path_count = static_cast<std::size_t>(*o.paths);
    }
    if (o.seed) {
        cfg.sim.master_seed = *o.seed;
    }
}

void write_report(const Options& o, const twoscale::RunReport& rep) {
    if (o.report.empty()) {
        return;
    }
    std::ofstream f(o.report, std::ios::binary);
    twoscale::require(static_cast<bool>(f), twoscale::ErrorCode::config_error, "cannot write " + o.report);
    f << rep.to_json().dump(2) << '\n';
}

template <class Run>
int run_with_csv(const Options& o, bool sweep, Run&& run) {
    twoscale::InstanceConfig cfg = twoscale::load_config(o.config);
    if (!o.verify.empty()) {
        twoscale::verify_report_hash(o.verify, cfg.hash);
    }
    apply_overrides(cfg, o, sweep);
    twoscale::RunReport rep;
    if (o.out.empty()) {
        rep = run(cfg, &std::cout, std::cerr);
    } else {
        std::ofstream csv(o.out, std::ios::binary);
        twoscale::require(static_cast<bool>(csv), twoscale::ErrorCode::config_error, "cannot write " + o.out);
        rep = run(cfg, &csv, std::cout);
    }
    write_report(o, rep);
    return 0;
}

int run_validate_command(const Options& o) {
    if (!o.verify.empty()) {
        twoscale::verify_report_hash(o.verify, twoscale::sha256_hex(twoscale::read_file(o.config)));
    }
    const auto result =
        twoscale::run_validate(o.config, [&o](twoscale::InstanceConfig& cfg) { apply_overrides(cfg, o, true); });
    for (const auto& v : result.violations) {
        std::cout << "violation: " << v << '\n';
    }
    std::cout << (result.violations.empty() ? "valid\n" : "invalid\n");
    write_report(o, result.report);
    return result.violations.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-time-scale regime-switching mean-variance experiments"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config, "instance JSON file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "CSV output file (default: stdout, summary on stderr)");
        sub->add_option("--eps", o.eps, "eps value (solve, frontier) or comma-separated sweep (converge)")
            ->delimiter(',');
        sub->add_option("--paths", o.paths, "Monte Carlo path count; 0 skips simulation");
        sub->add_option("--seed", o.seed, "master seed");
        sub->add_option("--verify", o.verify, "reject unless REPORT carries this config's hash");
        sub->add_option("--report", o.report, "write a JSON run report");
    };

    CLI::App* validate = app.add_subcommand("validate", "structural checks of an instance");
    add_common(validate);
    CLI::App* solve = app.add_subcommand("solve", "solve a Riccati system and print P, H, theta at t = 0");
    add_common(solve);
    solve->add_option("--system", o.system, "full, limit or transient")
        ->check(CLI::IsMember({"full", "limit", "transient"}));
    CLI::App* frontier = app.add_subcommand("frontier", "efficient frontier, optionally checked by simulation");
    add_common(frontier);
    CLI::App* converge = app.add_subcommand("converge", "eps sweep of sup-gaps and cost gaps");
    add_common(converge);

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) {
            return run_validate_command(o);
        }
        if (solve->parsed()) {
            static const std::map<std::string, twoscale::SolveSystem> systems = {
                {"full", twoscale::SolveSystem::full},
                {"limit", twoscale::SolveSystem::limit},
                {"transient", twoscale::SolveSystem::transient}};
            const auto system = systems.at(o.system);
            return run_with_csv(o, false, [system](const auto& cfg, std::ostream* csv, std::ostream& summary) {
                return twoscale::run_solve(cfg, system, csv, summary);
            });
        }
        if (frontier->parsed()) {
            return run_with_csv(o, false, [](const auto& cfg, std::ostream* csv, std::ostream& summary) {
                return twoscale::run_frontier(cfg, csv, summary);
            });
        }
        return run_with_csv(o, true, [](const auto& cfg, std::ostream* csv, std::ostream& summary) {
            return twoscale::run_converge(cfg, csv, summary);
        });
    } catch (const twoscale::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return twoscale::is_numerical(e.code()) ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
