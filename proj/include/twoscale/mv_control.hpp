#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/chain_algebra.hpp"
#include "twoscale/market_model.hpp"
#include "twoscale/riccati_solver.hpp"

namespace twoscale {

/// True iff B is nonzero on some positive-length segment for some regime the
/// chain can occupy. With `initial_regime` set, occupancy is reachability in
/// the positive-rate graph of Q^eps; otherwise every regime counts.
bool check_feasibility(const MarketModel& model, const TwoScaleGenerator& gen,
                       std::optional<int> initial_regime = std::nullopt);

/// -(sigma sigma')^{-1} B' per (segment, regime).
class GainTable {
public:
    explicit GainTable(const MarketModel& model);

    [[nodiscard]] const Eigen::VectorXd& gain(int segment, int regime) const { return gains_[segment][regime]; }
    [[nodiscard]] const Eigen::VectorXd& gain_at(double t, int regime) const;
    [[nodiscard]] int num_regimes() const { return gains_.empty() ? 0 : static_cast<int>(gains_[0].size()); }
    [[nodiscard]] int controls() const { return controls_; }
    [[nodiscard]] bool same_as(const GainTable& other) const;

private:
    MarketModel model_;
    std::vector<std::vector<Eigen::VectorXd>> gains_;
    int controls_ = 0;
};

enum class ControlKind { exact_full, constructed_recurrent, constructed_transient, mutual_fund, open_loop };

/// u(t, i, x) = G(t, i) (x + sum_n c_n H_n(t, col_n(i))) + u0(i), with G the
/// gain table and the H tables read from Riccati solutions. The feedback
/// kinds have a single term with c = lambda - z; mutual-fund combinations
/// carry the weighted terms of both inputs.
class FeedbackControl {
public:
    struct OffsetTerm {
        double coefficient = 0.0;
        std::shared_ptr<const RiccatiSolution> source;
        std::vector<int> column_of_regime;
    };

    [[nodiscard]] ControlKind kind() const { return kind_; }
    [[nodiscard]] double lambda() const { return lambda_; }
    [[nodiscard]] double z() const { return z_; }
    [[nodiscard]] int num_regimes() const { return num_regimes_; }
    [[nodiscard]] int controls() const { return controls_; }
    [[nodiscard]] const std::shared_ptr<const GainTable>& gains() const { return gains_; }
    [[nodiscard]] const std::vector<OffsetTerm>& offsets() const { return offsets_; }
    [[nodiscard]] const std::vector<Eigen::VectorXd>& open_loop() const { return open_loop_; }

    /// Sum of the offset terms at (t, regime): the x-shift inside the feedback.
    [[nodiscard]] double offset(double t, int regime) const;

    [[nodiscard]] Eigen::VectorXd operator()(double t, int regime, double x) const;

    friend FeedbackControl exact_optimal_control(std::shared_ptr<const RiccatiSolution>, const MarketModel&, double,
                                                 double);
    friend FeedbackControl constructed_control(std::shared_ptr<const RiccatiSolution>, const MarketModel&, double,
                                               double, const BlockStructure&);
    friend FeedbackControl mutual_fund_combine(const FeedbackControl&, const FeedbackControl&, double);
    friend FeedbackControl open_loop_control(const MarketModel&, std::vector<Eigen::VectorXd>);

private:
    ControlKind kind_ = ControlKind::open_loop;
    double lambda_ = 0.0;
    double z_ = 0.0;
    int num_regimes_ = 0;
    int controls_ = 0;
    std::shared_ptr<const GainTable> gains_;
    std::vector<OffsetTerm> offsets_;
    std::vector<Eigen::VectorXd> open_loop_;  // per regime; empty means zero
};

/// u = -(sigma sigma')^{-1} B' [x + (lambda - z) H^eps(t, i)].
FeedbackControl exact_optimal_control(std::shared_ptr<const RiccatiSolution> sol_full, const MarketModel& model,
                                      double lambda, double z);

/// Gains from the original per-state coefficients, offsets from the limit H:
/// Hbar(t, k) for s_kj in block k, Hbar_*(t, j) for transient s_*j.
FeedbackControl constructed_control(std::shared_ptr<const RiccatiSolution> sol_limit, const MarketModel& model,
                                    double lambda, double z, const BlockStructure& blocks);

/// (1 - pi) u_min + pi u_1. Both inputs must share gains (same model).
FeedbackControl mutual_fund_combine(const FeedbackControl& u_min, const FeedbackControl& u_1, double pi);

/// Open-loop control u(t, i, x) = u0[i]; an empty vector gives u = 0.
FeedbackControl open_loop_control(const MarketModel& model, std::vector<Eigen::VectorXd> u0 = {});

/// P, H, theta at t = 0 in the column the initial regime reads from.
StateValues initial_values(const RiccatiSolution& sol, int initial_regime);

/// lambda* with (lambda* - z) = (z - P H x0) / (P H^2 + theta - 1) at (0, alpha).
/// Throws infeasible_frontier unless P H^2 + theta - 1 < -1e-10.
double solve_lagrange_multiplier(const RiccatiSolution& sol, double x0, double z, int initial_regime);

struct FrontierPoint {
    double z = 0.0;
    double lambda_star = 0.0;
    double variance = 0.0;
};

struct FrontierSummary {
    double z_min = 0.0;
    double min_variance = 0.0;
    double lambda_min = 0.0;
};

FrontierSummary frontier_summary(const RiccatiSolution& sol, double x0, int initial_regime);

std::vector<FrontierPoint> efficient_frontier(const RiccatiSolution& sol, double x0, int initial_regime,
                                              const std::vector<double>& z_grid);

/// P(t, s) (x + (lambda - z) H(t, s))^2 for solution column s; transient
/// columns of a transient-limit solution use sum_k a_{m_k, j} vbar(t, k, x).
double value_function(const RiccatiSolution& sol, double t, int column, double x, double lambda, double z);

/// Optimal Lagrangian cost v(0, alpha, x0) + theta(0, alpha) (lambda - z)^2 - lambda^2.
double optimal_lagrangian_cost(const RiccatiSolution& sol, int initial_regime, double x0, double lambda, double z);

}  // namespace twoscale
