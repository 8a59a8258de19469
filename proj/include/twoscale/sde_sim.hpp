#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/chain_algebra.hpp"
#include "twoscale/market_model.hpp"
#include "twoscale/mv_control.hpp"
#include "twoscale/riccati_solver.hpp"

namespace twoscale {

struct SimConfig {
    std::size_t path_count = 10000;
    double step = 1e-3;  // Euler-Maruyama cell length (cells are also split at jumps and knots)
    std::uint64_t master_seed = 1;
    double x0 = 1.0;
    int initial_regime = 0;  // original regime for simulate_full, aggregated state for simulate_limit
    double horizon = 1.0;
    int threads = 0;  // 0: TWOSCALE_THREADS or hardware concurrency
};

struct MonteCarloReport {
    double mean_xT = 0.0;
    double se_mean = 0.0;
    double var_xT = 0.0;
    double se_var = 0.0;
    /// E[x(T) + lambda - z]^2
    double terminal_cost = 0.0;
    double se_cost = 0.0;
    /// terminal_cost - lambda^2
    double j_estimate = 0.0;
    double se_j = 0.0;
    double lambda = 0.0;
    double z = 0.0;
    std::size_t path_count = 0;
    std::uint64_t seed = 0;
};

/// Worker count: `requested` if positive, else TWOSCALE_THREADS, else hardware concurrency.
int resolve_threads(int requested);

/// Pairwise (cascade) summation; the result depends only on the input order.
double pairwise_sum(std::span<const double> values);

MonteCarloReport summarize(std::span<const double> terminal_values, double lambda, double z, std::uint64_t seed);

/// Terminal values x(T), one per path, in path order. Each path samples the
/// chain exactly, then runs Euler-Maruyama on cells split at every jump time
/// and coefficient knot. Path p uses generators seeded with
/// derive_seed(master_seed, p, Stream::chain / Stream::brownian).
std::vector<double> simulate_full_terminal(const TwoScaleGenerator& gen, const MarketModel& model,
                                           const FeedbackControl& control, const SimConfig& cfg);

MonteCarloReport simulate_full(const TwoScaleGenerator& gen, const MarketModel& model, const FeedbackControl& control,
                               const SimConfig& cfg);

/// CSV with header "path_index,x_T".
void write_terminal_csv(std::ostream& out, std::span<const double> terminal_values);

/// Aggregated chain plus the within-block weights that define the limit dynamics.
struct LimitDynamics {
    Eigen::MatrixXd q_bar;
    BlockStructure blocks;
    std::vector<Eigen::VectorXd> mus;

    static LimitDynamics recurrent(const TwoScaleGenerator& gen);
    static LimitDynamics transient(const TwoScaleGenerator& gen);
};

/// Limit dynamics dx = f dt + sum_i g_i dw_i driven by the aggregated chain:
/// f = rbar x + sum_j mu_j B(s_kj) u^{kj}, g_i = sqrt(sum_j mu_j ((u^{kj})' sigma(s_kj))_i^2),
/// where u^{kj} is `control` evaluated in original regime s_kj.
std::vector<double> simulate_limit_terminal(const LimitDynamics& dyn, const MarketModel& model,
                                            const FeedbackControl& control, const SimConfig& cfg);

MonteCarloReport simulate_limit(const LimitDynamics& dyn, const MarketModel& model, const FeedbackControl& control,
                                const SimConfig& cfg);

enum class GapControl { constructed, zero };

struct CostGapRow {
    double epsilon = 0.0;
    LimitGap sup_gap;
    double j_mc = 0.0;
    double analytic = 0.0;
    double delta = 0.0;
    double se = 0.0;
};

/// For each eps: solves the full and limit systems, simulates the
/// constructed control (or u = 0) and reports |J_mc - analytic optimum|.
/// Riccati steps are recommended_step(gen_eps, riccati_step); the SDE step is
/// min(cfg.step, eps / 10, T / 100).
std::vector<CostGapRow> estimate_cost_gap(const TwoScaleGenerator& gen, const MarketModel& model, double lambda,
                                          double z, const SimConfig& cfg, const std::vector<double>& eps_list,
                                          double riccati_step, GapControl which = GapControl::constructed);

}  // namespace twoscale
