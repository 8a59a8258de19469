#include "twoscale/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

#include "twoscale/csv.hpp"
#include "twoscale/mv_control.hpp"
#include "twoscale/sde_sim.hpp"

namespace twoscale {

using nlohmann::json;

namespace {

class Stopwatch {
public:
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string make_run_id(const std::string& command, const std::string& hash, const json& args) {
    return sha256_hex(command + "|" + hash + "|" + args.dump()).substr(0, 16);
}

RunReport start_report(const std::string& command, const InstanceConfig& cfg, const json& args) {
    RunReport r;
    r.command = command;
    r.config_hash = cfg.hash;
    r.run_id = make_run_id(command, cfg.hash, args);
    r.results["arguments"] = args;
    return r;
}

json state_values_json(const RiccatiSolution& sol) {
    json rows = json::array();
    for (int s = 0; s < sol.num_states(); ++s) {
        const StateValues v = sol.evaluate(0.0, s);
        rows.push_back({{"column", s}, {"P", v.p}, {"H", v.h}, {"theta", v.theta}});
    }
    return rows;
}

json gap_json(const LimitGap& g, bool transient) {
    json j = {{"P", g.p_recurrent}, {"H", g.h_recurrent}};
    if (transient) {
        j["P_transient"] = g.p_transient;
        j["H_transient"] = g.h_transient;
    }
    return j;
}

/// Strictly decreasing along `v` and last <= factor * first.
bool decays(const std::vector<double>& v, double factor) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] < v[i - 1])) {
            return false;
        }
    }
    return v.back() <= factor * v.front();
}

std::string list_string(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += (i ? ", " : "") + format_double(v[i]);
    }
    return s;
}

RiccatiSolution solve_kind(const TwoScaleGenerator& g, const MarketModel& model, SolveSystem system, double step) {
    switch (system) {
    case SolveSystem::full: return solve_full(g, model, step);
    case SolveSystem::limit: return solve_limit(g, model, step);
    case SolveSystem::transient: return solve_transient_limit(g, model, step);
    }
    throw Error(ErrorCode::invalid_argument, "unknown system");
}

const char* system_name(SolveSystem s) {
    switch (s) {
    case SolveSystem::full: return "full";
    case SolveSystem::limit: return "limit";
    case SolveSystem::transient: return "transient";
    }
    return "?";
}

}  // namespace

bool RunReport::all_pass() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

json RunReport::to_json() const {
    json j;
    j["command"] = command;
    j["run_id"] = run_id;
    j["config_hash"] = config_hash;
    j["results"] = results;
    json vs = json::array();
    for (const auto& v : verdicts) {
        vs.push_back({{"criterion", v.criterion}, {"pass", v.pass}, {"detail", v.detail}});
    }
    j["verdicts"] = vs;
    json ts = json::object();
    for (const auto& [name, secs] : timings) {
        ts[name] = secs;
    }
    j["timings_seconds"] = ts;
    return j;
}

void verify_report_hash(const std::string& report_path, const std::string& config_hash) {
    json report;
    try {
        report = json::parse(read_file(report_path));
    } catch (const json::parse_error&) {
        throw Error(ErrorCode::config_error, report_path + ": report is not valid JSON");
    }
    const auto it = report.find("config_hash");
    require(it != report.end() && it->is_string(), ErrorCode::config_error, report_path + ": report has no config_hash");
    require(it->get<std::string>() == config_hash, ErrorCode::config_error,
            report_path + ": config hash " + it->get<std::string>() + " does not match " + config_hash);
}

ValidateResult run_validate(const std::string& config_path, const std::function<void(InstanceConfig&)>& adjust) {
    ValidateResult out;
    out.report.command = "validate";
    try {
        InstanceConfig cfg = load_config(config_path);
        if (adjust) {
            adjust(cfg);
        }
        out.report = start_report("validate", cfg, json::object());
        out.violations = config_violations(cfg);
    } catch (const Error& e) {
        out.violations.push_back(e.what());
    }
    out.report.results["violations"] = out.violations;
    out.report.verdicts.push_back({"structural checks", out.violations.empty(),
                                   std::to_string(out.violations.size()) + " violation(s)"});
    return out;
}

RunReport run_solve(const InstanceConfig& cfg, SolveSystem system, std::ostream* csv, std::ostream& summary) {
    require_valid_config(cfg);
    const double eps = cfg.chain.epsilon;
    RunReport rep = start_report("solve", cfg, {{"system", system_name(system)}, {"eps", eps}});
    const double step = recommended_step(cfg.chain, cfg.solver_step);
    const bool transient = cfg.chain.blocks.num_transient() > 0;

    Stopwatch clock;
    const RiccatiSolution sol = solve_kind(cfg.chain, cfg.market, system, step);
    rep.timings.emplace_back("solve", clock.seconds());
    if (csv) {
        write_solution_csv(*csv, sol);
    }

    summary << "system " << system_name(system) << ", eps " << format_double(eps) << ", step "
            << format_double(step) << ", " << sol.grid().size() << " grid points\n";
    summary << "column,P0,H0,theta0\n";
    for (int s = 0; s < sol.num_states(); ++s) {
        const StateValues v = sol.evaluate(0.0, s);
        summary << s << ',' << format_double(v.p) << ',' << format_double(v.h) << ',' << format_double(v.theta)
                << '\n';
    }
    rep.results["eps"] = eps;
    rep.results["step"] = step;
    rep.results["initial_values"] = state_values_json(sol);

    if (system != SolveSystem::full) {
        Stopwatch gap_clock;
        const RiccatiSolution full = solve_full(cfg.chain, cfg.market, step);
        const LimitGap gap = limit_gap(full, sol);
        rep.timings.emplace_back("gap", gap_clock.seconds());
        summary << "sup_gap_P " << format_double(gap.p_recurrent) << "\nsup_gap_H " << format_double(gap.h_recurrent)
                << '\n';
        if (transient && system == SolveSystem::transient) {
            summary << "sup_gap_P_transient " << format_double(gap.p_transient) << "\nsup_gap_H_transient "
                    << format_double(gap.h_transient) << '\n';
        }
        rep.results["sup_gap"] = gap_json(gap, transient && system == SolveSystem::transient);
    }
    return rep;
}

RunReport run_frontier(const InstanceConfig& cfg, std::ostream* csv, std::ostream& summary) {
    require_valid_config(cfg);
    const double eps = cfg.chain.epsilon;
    RunReport rep = start_report("frontier", cfg,
                                 {{"eps", eps}, {"paths", cfg.sim.path_count}, {"seed", cfg.sim.master_seed}});
    if (!check_feasibility(cfg.market, cfg.chain, cfg.initial_regime)) {
        throw Error(ErrorCode::infeasible_frontier,
                    "B vanishes in every regime reachable from the initial regime: no control moves the mean");
    }
    const double step = recommended_step(cfg.chain, cfg.solver_step);
    Stopwatch clock;
    auto sol = std::make_shared<const RiccatiSolution>(solve_full(cfg.chain, cfg.market, step));
    rep.timings.emplace_back("solve", clock.seconds());

    const FrontierSummary fs = frontier_summary(*sol, cfg.x0, cfg.initial_regime);
    summary << "z_min " << format_double(fs.z_min) << "\nmin_variance " << format_double(fs.min_variance)
            << "\nlambda_min " << format_double(fs.lambda_min) << '\n';
    rep.results["z_min"] = fs.z_min;
    rep.results["min_variance"] = fs.min_variance;
    rep.results["lambda_min"] = fs.lambda_min;

    std::vector<double> zs = cfg.z_grid;
    if (zs.empty() && cfg.z) {
        zs.push_back(*cfg.z);
    }
    const auto points = efficient_frontier(*sol, cfg.x0, cfg.initial_regime, zs);
    const bool mc = cfg.sim.path_count > 0;
    SimConfig sim = cfg.sim;
    sim.step = std::min({cfg.sim.step, eps / 10.0, cfg.market.horizon() / 100.0});

    if (csv) {
        *csv << "z,lambda_star,variance_analytic,variance_mc,mc_se,mean_mc,mean_se\n";
    }
    json rows = json::array();
    Stopwatch mc_clock;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& pt : points) {
        MonteCarloReport m;
        m.var_xT = m.se_var = m.mean_xT = m.se_mean = nan;
        if (mc) {
            const FeedbackControl u = exact_optimal_control(sol, cfg.market, pt.lambda_star, pt.z);
            m = simulate_full(cfg.chain, cfg.market, u, sim);
        }
        if (csv) {
            *csv << format_double(pt.z) << ',' << format_double(pt.lambda_star) << ',' << format_double(pt.variance)
                 << ',' << format_double(m.var_xT) << ',' << format_double(m.se_var) << ','
                 << format_double(m.mean_xT) << ',' << format_double(m.se_mean) << '\n';
        }
        json row = {{"z", pt.z}, {"lambda_star", pt.lambda_star}, {"variance", pt.variance}};
        if (mc) {
            row["variance_mc"] = m.var_xT;
            row["variance_se"] = m.se_var;
            row["mean_mc"] = m.mean_xT;
            row["mean_se"] = m.se_mean;
            const double band = cfg.thresholds.se_band;
            rep.verdicts.push_back({"mean at z=" + format_double(pt.z),
                                    std::abs(m.mean_xT - pt.z) <= band * m.se_mean,
                                    "|mean - z| = " + format_double(std::abs(m.mean_xT - pt.z)) + ", SE " +
                                        format_double(m.se_mean)});
        }
        rows.push_back(row);
    }
    if (mc) {
        rep.timings.emplace_back("monte_carlo", mc_clock.seconds());
    }
    rep.results["frontier"] = rows;
    return rep;
}

double converge_lambda(const InstanceConfig& cfg) {
    if (cfg.lambda) {
        return *cfg.lambda;
    }
    require(cfg.z.has_value(), ErrorCode::config_error, "problem: converge needs z or lambda");
    const double step = recommended_step(cfg.chain, cfg.solver_step);
    const bool transient = cfg.chain.blocks.num_transient() > 0;
    const RiccatiSolution sol = transient ? solve_transient_limit(cfg.chain, cfg.market, step)
                                          : solve_limit(cfg.chain, cfg.market, step);
    return solve_lagrange_multiplier(sol, cfg.x0, *cfg.z, cfg.initial_regime);
}

RunReport run_converge(const InstanceConfig& cfg, std::ostream* csv, std::ostream& summary) {
    require_valid_config(cfg);
    require(!cfg.sweep.empty(), ErrorCode::config_error, "sweep: converge needs at least one eps");
    const bool mc = cfg.sim.path_count > 0;
    const bool transient = cfg.chain.blocks.num_transient() > 0;
    RunReport rep = start_report("converge", cfg,
                                 {{"eps", cfg.sweep}, {"paths", cfg.sim.path_count}, {"seed", cfg.sim.master_seed}});

    double lambda = 0.0;
    double z = cfg.z.value_or(0.0);
    if (mc) {
        lambda = converge_lambda(cfg);
        require(cfg.z.has_value() || cfg.lambda.has_value(), ErrorCode::config_error,
                "problem: converge needs z or lambda");
        rep.results["lambda"] = lambda;
        rep.results["z"] = z;
    }

    Stopwatch clock;
    std::vector<CostGapRow> rows;
    if (mc) {
        rows = estimate_cost_gap(cfg.chain, cfg.market, lambda, z, cfg.sim, cfg.sweep, cfg.solver_step);
    } else {
        for (double eps : cfg.sweep) {
            const TwoScaleGenerator g = cfg.chain.with_epsilon(eps);
            const double h = recommended_step(g, cfg.solver_step);
            const RiccatiSolution full = solve_full(g, cfg.market, h);
            const RiccatiSolution limit =
                transient ? solve_transient_limit(g, cfg.market, h) : solve_limit(g, cfg.market, h);
            CostGapRow row;
            row.epsilon = eps;
            row.sup_gap = limit_gap(full, limit);
            row.j_mc = row.analytic = row.delta = row.se = std::numeric_limits<double>::quiet_NaN();
            rows.push_back(row);
        }
    }
    rep.timings.emplace_back("sweep", clock.seconds());

    if (csv) {
        *csv << "eps,sup_gap_P,sup_gap_H,Delta_J,SE";
        if (transient) {
            *csv << ",sup_gap_P_transient,sup_gap_H_transient";
        }
        *csv << '\n';
    }
    json table = json::array();
    for (const auto& r : rows) {
        if (csv) {
            *csv << format_double(r.epsilon) << ',' << format_double(r.sup_gap.p_recurrent) << ','
                 << format_double(r.sup_gap.h_recurrent) << ',' << format_double(r.delta) << ','
                 << format_double(r.se);
            if (transient) {
                *csv << ',' << format_double(r.sup_gap.p_transient) << ',' << format_double(r.sup_gap.h_transient);
            }
            *csv << '\n';
        }
        json j = {{"eps", r.epsilon}, {"sup_gap", gap_json(r.sup_gap, transient)}};
        if (mc) {
            j["J_mc"] = r.j_mc;
            j["J_optimal"] = r.analytic;
            j["Delta_J"] = r.delta;
            j["SE"] = r.se;
        }
        table.push_back(j);
    }
    rep.results["rows"] = table;

    if (rows.size() < 2) {
        summary << "single eps: no decay verdicts\n";
        return rep;
    }
    // Verdicts run from the largest eps to the smallest.
    std::vector<CostGapRow> ordered = rows;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const CostGapRow& a, const CostGapRow& b) { return a.epsilon > b.epsilon; });
    const Thresholds& th = cfg.thresholds;
    auto column = [&ordered](auto field) {
        std::vector<double> v;
        for (const auto& r : ordered) {
            v.push_back(field(r));
        }
        return v;
    };
    const auto gp = column([](const CostGapRow& r) { return r.sup_gap.p_recurrent; });
    const auto gh = column([](const CostGapRow& r) { return r.sup_gap.h_recurrent; });
    rep.verdicts.push_back({"sup_gap_P decays", decays(gp, th.gap_decay), list_string(gp)});
    rep.verdicts.push_back({"sup_gap_H decays", decays(gh, th.gap_decay), list_string(gh)});
    if (transient) {
        const auto gpt = column([](const CostGapRow& r) { return r.sup_gap.p_transient; });
        rep.verdicts.push_back({"sup_gap_P_transient decays", decays(gpt, th.gap_decay), list_string(gpt)});
    }
    if (mc) {
        const auto d = column([](const CostGapRow& r) { return r.delta; });
        const auto se = column([](const CostGapRow& r) { return r.se; });
        bool monotone = true;
        for (std::size_t i = 1; i < d.size(); ++i) {
            monotone = monotone && d[i] <= d[i - 1] + th.se_band * std::hypot(se[i], se[i - 1]);
        }
        const bool ratio = d.back() <= th.delta_decay * d.front() + th.se_band * se.back();
        rep.verdicts.push_back({"Delta_J decreases within SE band", monotone && ratio,
                                "Delta " + list_string(d) + "; SE " + list_string(se)});
    }
    for (const auto& v : rep.verdicts) {
        summary << (v.pass ? "PASS " : "FAIL ") << v.criterion << ": " << v.detail << '\n';
    }
    return rep;
}

}  // namespace twoscale
