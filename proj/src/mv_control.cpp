#include "twoscale/mv_control.hpp"

#include <cmath>
#include <sstream>

namespace twoscale {

namespace {

constexpr double kFrontierMargin = 1e-10;

std::vector<bool> reachable(const Eigen::MatrixXd& q, int start) {
    const int m = static_cast<int>(q.rows());
    std::vector<bool> seen(m, false);
    std::vector<int> stack{start};
    seen[start] = true;
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        for (int j = 0; j < m; ++j) {
            if (j != i && q(i, j) > 0.0 && !seen[j]) {
                seen[j] = true;
                stack.push_back(j);
            }
        }
    }
    return seen;
}

struct FrontierTerms {
    double ph = 0.0;  // P H
    double a = 0.0;   // P H^2 + theta
    double p_theta = 0.0;
};

FrontierTerms frontier_terms(const RiccatiSolution& sol, int initial_regime) {
    const StateValues v = initial_values(sol, initial_regime);
    FrontierTerms f;
    f.ph = v.p * v.h;
    f.a = v.p * v.h * v.h + v.theta;
    f.p_theta = v.p * v.theta;
    if (!(f.a - 1.0 < -kFrontierMargin)) {
        std::ostringstream os;
        os.precision(17);
        os << "P H^2 + theta - 1 = " << f.a - 1.0 << " is not negative";
        throw Error(ErrorCode::infeasible_frontier, os.str());
    }
    return f;
}

}  // namespace

bool check_feasibility(const MarketModel& model, const TwoScaleGenerator& gen, std::optional<int> initial_regime) {
    const int m = model.num_regimes();
    std::vector<bool> occupied(m, true);
    if (initial_regime) {
        require(*initial_regime >= 0 && *initial_regime < m, ErrorCode::invalid_argument,
                "initial regime out of range");
        require(gen.num_states() == m, ErrorCode::instance_mismatch, "chain and market sizes differ");
        occupied = reachable(gen.q_eps(), *initial_regime);
    }
    for (int s = 0; s < model.num_segments(); ++s) {
        if (!(model.segment_end(s) > model.segment_start(s))) {
            continue;
        }
        for (int i = 0; i < m; ++i) {
            if (occupied[i] && model.coefficients(s, i).b.squaredNorm() > 0.0) {
                return true;
            }
        }
    }
    return false;
}

GainTable::GainTable(const MarketModel& model) : model_(model), controls_(model.controls()) {
    for (int s = 0; s < model.num_segments(); ++s) {
        std::vector<Eigen::VectorXd> row;
        for (int i = 0; i < model.num_regimes(); ++i) {
            row.push_back(feedback_gain(model.coefficients(s, i), model.delta()));
        }
        gains_.push_back(std::move(row));
    }
}

const Eigen::VectorXd& GainTable::gain_at(double t, int regime) const {
    return gains_[model_.segment_at(t)][regime];
}

bool GainTable::same_as(const GainTable& other) const {
    if (this == &other) {
        return true;
    }
    if (model_.knots() != other.model_.knots() || gains_.size() != other.gains_.size()) {
        return false;
    }
    for (std::size_t s = 0; s < gains_.size(); ++s) {
        if (gains_[s].size() != other.gains_[s].size()) {
            return false;
        }
        for (std::size_t i = 0; i < gains_[s].size(); ++i) {
            if (gains_[s][i] != other.gains_[s][i]) {
                return false;
            }
        }
    }
    return true;
}

double FeedbackControl::offset(double t, int regime) const {
    double total = 0.0;
    for (const auto& term : offsets_) {
        total += term.coefficient * term.source->h_at(t, term.column_of_regime[regime]);
    }
    return total;
}

Eigen::VectorXd FeedbackControl::operator()(double t, int regime, double x) const {
    require(regime >= 0 && regime < num_regimes_, ErrorCode::invalid_argument,
            "regime " + std::to_string(regime) + " out of range");
    Eigen::VectorXd u = Eigen::VectorXd::Zero(controls_);
    if (gains_) {
        u = gains_->gain_at(t, regime) * (x + offset(t, regime));
    }
    if (!open_loop_.empty()) {
        u += open_loop_[regime];
    }
    return u;
}

FeedbackControl exact_optimal_control(std::shared_ptr<const RiccatiSolution> sol_full, const MarketModel& model,
                                      double lambda, double z) {
    require(sol_full && sol_full->kind() == SystemKind::full, ErrorCode::instance_mismatch,
            "exact_optimal_control needs a full-system solution");
    require(sol_full->num_states() == model.num_regimes(), ErrorCode::instance_mismatch,
            "solution has " + std::to_string(sol_full->num_states()) + " regimes, model has " +
                std::to_string(model.num_regimes()));
    FeedbackControl u;
    u.kind_ = ControlKind::exact_full;
    u.lambda_ = lambda;
    u.z_ = z;
    u.num_regimes_ = model.num_regimes();
    u.controls_ = model.controls();
    u.gains_ = std::make_shared<const GainTable>(model);
    FeedbackControl::OffsetTerm term{lambda - z, std::move(sol_full), {}};
    for (int i = 0; i < u.num_regimes_; ++i) {
        term.column_of_regime.push_back(i);
    }
    u.offsets_.push_back(std::move(term));
    return u;
}

FeedbackControl constructed_control(std::shared_ptr<const RiccatiSolution> sol_limit, const MarketModel& model,
                                    double lambda, double z, const BlockStructure& blocks) {
    require(sol_limit && sol_limit->kind() != SystemKind::full, ErrorCode::instance_mismatch,
            "constructed_control needs a limit or transient-limit solution");
    require(blocks.num_states() == model.num_regimes(), ErrorCode::instance_mismatch,
            "block structure and market model disagree on the number of regimes");
    require(blocks.num_blocks() == sol_limit->num_limit_states(), ErrorCode::instance_mismatch,
            "limit solution has a different number of aggregated states");
    if (blocks.num_transient() > 0) {
        const auto& a = sol_limit->exit_probabilities();
        if (sol_limit->kind() != SystemKind::transient_limit || !a || a->rows() != blocks.num_transient()) {
            throw Error(ErrorCode::missing_transient_tables, "transient states need a transient-limit solution");
        }
    }
    FeedbackControl u;
    u.kind_ = blocks.num_transient() > 0 ? ControlKind::constructed_transient : ControlKind::constructed_recurrent;
    u.lambda_ = lambda;
    u.z_ = z;
    u.num_regimes_ = model.num_regimes();
    u.controls_ = model.controls();
    u.gains_ = std::make_shared<const GainTable>(model);
    const auto labels = blocks.labels();
    const int l = blocks.num_blocks();
    FeedbackControl::OffsetTerm term{lambda - z, std::move(sol_limit), {}};
    for (int i = 0; i < u.num_regimes_; ++i) {
        term.column_of_regime.push_back(labels[i] >= 0 ? labels[i] : l + (-labels[i] - 1));
    }
    u.offsets_.push_back(std::move(term));
    return u;
}

FeedbackControl mutual_fund_combine(const FeedbackControl& u_min, const FeedbackControl& u_1, double pi) {
    if (!(pi >= 0.0) || !std::isfinite(pi)) {
        throw Error(ErrorCode::invalid_weight, "mutual fund weight must be a finite number >= 0");
    }
    require(u_min.gains_ && u_1.gains_ && u_min.gains_->same_as(*u_1.gains_), ErrorCode::instance_mismatch,
            "mutual fund inputs must share the same gain table");
    require(u_min.num_regimes_ == u_1.num_regimes_, ErrorCode::instance_mismatch,
            "mutual fund inputs have different regime counts");
    FeedbackControl u;
    u.kind_ = ControlKind::mutual_fund;
    u.z_ = (1.0 - pi) * u_min.z_ + pi * u_1.z_;
    const double c = (1.0 - pi) * (u_min.lambda_ - u_min.z_) + pi * (u_1.lambda_ - u_1.z_);
    u.lambda_ = c + u.z_;
    u.num_regimes_ = u_min.num_regimes_;
    u.controls_ = u_min.controls_;
    u.gains_ = u_min.gains_;
    for (auto term : u_min.offsets_) {
        term.coefficient *= 1.0 - pi;
        u.offsets_.push_back(std::move(term));
    }
    for (auto term : u_1.offsets_) {
        term.coefficient *= pi;
        u.offsets_.push_back(std::move(term));
    }
    // Both inputs share one H table in the usual case: fold into a single term.
    if (u.offsets_.size() == 2 && u.offsets_[0].source == u.offsets_[1].source &&
        u.offsets_[0].column_of_regime == u.offsets_[1].column_of_regime) {
        u.offsets_[0].coefficient += u.offsets_[1].coefficient;
        u.offsets_.pop_back();
    }
    if (!u_min.open_loop_.empty() || !u_1.open_loop_.empty()) {
        for (int i = 0; i < u.num_regimes_; ++i) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(u.controls_);
            if (!u_min.open_loop_.empty()) {
                v += (1.0 - pi) * u_min.open_loop_[i];
            }
            if (!u_1.open_loop_.empty()) {
                v += pi * u_1.open_loop_[i];
            }
            u.open_loop_.push_back(std::move(v));
        }
    }
    return u;
}

FeedbackControl open_loop_control(const MarketModel& model, std::vector<Eigen::VectorXd> u0) {
    FeedbackControl u;
    u.kind_ = ControlKind::open_loop;
    u.num_regimes_ = model.num_regimes();
    u.controls_ = model.controls();
    if (!u0.empty()) {
        require(static_cast<int>(u0.size()) == u.num_regimes_, ErrorCode::instance_mismatch,
                "open-loop control needs one vector per regime");
        for (const auto& v : u0) {
            require(v.size() == u.controls_, ErrorCode::instance_mismatch, "open-loop control has wrong dimension");
        }
    }
    u.open_loop_ = std::move(u0);
    return u;
}

StateValues initial_values(const RiccatiSolution& sol, int initial_regime) {
    const int col = sol.column_for_state(initial_regime);
    if (sol.kind() == SystemKind::transient_limit && col >= sol.num_limit_states()) {
        throw Error(ErrorCode::invalid_argument,
                    "frontier quantities of a transient-limit solution need a recurrent initial regime");
    }
    return sol.evaluate(0.0, col);
}

double solve_lagrange_multiplier(const RiccatiSolution& sol, double x0, double z, int initial_regime) {
    const FrontierTerms f = frontier_terms(sol, initial_regime);
    return z + (z - f.ph * x0) / (f.a - 1.0);
}

FrontierSummary frontier_summary(const RiccatiSolution& sol, double x0, int initial_regime) {
    const FrontierTerms f = frontier_terms(sol, initial_regime);
    FrontierSummary s;
    s.z_min = f.ph / f.a * x0;
    s.min_variance = f.p_theta / f.a * x0 * x0;
    s.lambda_min = s.z_min + (s.z_min - f.ph * x0) / (f.a - 1.0);
    return s;
}

std::vector<FrontierPoint> efficient_frontier(const RiccatiSolution& sol, double x0, int initial_regime,
                                              const std::vector<double>& z_grid) {
    const FrontierTerms f = frontier_terms(sol, initial_regime);
    const double z_min = f.ph / f.a * x0;
    const double floor = f.p_theta / f.a * x0 * x0;
    std::vector<FrontierPoint> out;
    out.reserve(z_grid.size());
    for (double z : z_grid) {
        const double dz = z - z_min;
        FrontierPoint pt;
        pt.z = z;
        pt.lambda_star = z + (z - f.ph * x0) / (f.a - 1.0);
        pt.variance = f.a / (1.0 - f.a) * dz * dz + floor;
        out.push_back(pt);
    }
    return out;
}

double value_function(const RiccatiSolution& sol, double t, int column, double x, double lambda, double z) {
    const double c = lambda - z;
    if (sol.kind() == SystemKind::transient_limit && column >= sol.num_limit_states()) {
        const auto& a = *sol.exit_probabilities();
        const int j = column - sol.num_limit_states();
        double v = 0.0;
        for (int k = 0; k < sol.num_limit_states(); ++k) {
            const StateValues s = sol.evaluate(t, k);
            v += a(j, k) * s.p * (x + c * s.h) * (x + c * s.h);
        }
        return v;
    }
    const StateValues s = sol.evaluate(t, column);
    return s.p * (x + c * s.h) * (x + c * s.h);
}

double optimal_lagrangian_cost(const RiccatiSolution& sol, int initial_regime, double x0, double lambda, double z) {
    const int col = sol.column_for_state(initial_regime);
    const double c = lambda - z;
    return value_function(sol, 0.0, col, x0, lambda, z) + sol.evaluate(0.0, col).theta * c * c - lambda * lambda;
}

}  // namespace twoscale
