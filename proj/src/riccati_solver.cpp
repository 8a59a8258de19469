#include "twoscale/riccati_solver.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "twoscale/csv.hpp"

namespace twoscale {

RiccatiSolution::RiccatiSolution(SystemKind kind, std::vector<double> grid, Eigen::MatrixXd p, Eigen::MatrixXd h,
                                 Eigen::MatrixXd theta)
    : kind_(kind), grid_(std::move(grid)), p_(std::move(p)), h_(std::move(h)), theta_(std::move(theta)) {
    require(grid_.size() >= 2, ErrorCode::invalid_argument, "solution grid needs at least two points");
    const double step = grid_[1] - grid_[0];
    bool uniform = true;
    for (std::size_t i = 1; i < grid_.size() && uniform; ++i) {
        uniform = std::abs((grid_[i] - grid_[i - 1]) - step) <= 1e-12 * std::max(1.0, grid_.back());
    }
    if (uniform) {
        uniform_step_ = step;
    }
}

RiccatiSolution::Locator RiccatiSolution::locate(double t) const {
    const double t0 = grid_.front();
    const double t1 = grid_.back();
    const double slack = 1e-12 * std::max(1.0, t1);
    if (!(t >= t0 - slack && t <= t1 + slack)) {
        std::ostringstream os;
        os << "t = " << t << " outside [" << t0 << ", " << t1 << "]";
        throw Error(ErrorCode::out_of_horizon, os.str());
    }
    t = std::clamp(t, t0, t1);
    const std::size_t last = grid_.size() - 1;
    std::size_t i;
    if (uniform_step_ > 0.0) {
        i = std::min(static_cast<std::size_t>((t - t0) / uniform_step_), last - 1);
        // Guard against rounding in the division.
        if (t < grid_[i]) {
            --i;
        } else if (t >= grid_[i + 1] && i + 1 < last) {
            ++i;
        }
    } else {
        i = static_cast<std::size_t>(std::upper_bound(grid_.begin(), grid_.end(), t) - grid_.begin());
        i = std::clamp<std::size_t>(i, 1, last) - 1;
    }
    const double span = grid_[i + 1] - grid_[i];
    if (t == grid_[i + 1]) {
        return {i + 1, 0.0};
    }
    return {i, span > 0.0 ? (t - grid_[i]) / span : 0.0};
}

StateValues RiccatiSolution::evaluate(double t, int state) const {
    require(state >= 0 && state < num_states(), ErrorCode::invalid_argument,
            "state " + std::to_string(state) + " out of range");
    const auto [i, w] = locate(t);
    if (w == 0.0) {
        return {p_(i, state), h_(i, state), theta_(i, state)};
    }
    auto lerp = [&](const Eigen::MatrixXd& m) { return (1.0 - w) * m(i, state) + w * m(i + 1, state); };
    return {lerp(p_), lerp(h_), lerp(theta_)};
}

double RiccatiSolution::h_at(double t, int state) const {
    const auto [i, w] = locate(t);
    if (w == 0.0) {
        return h_(i, state);
    }
    return (1.0 - w) * h_(i, state) + w * h_(i + 1, state);
}

int RiccatiSolution::num_limit_states() const {
    if (kind_ == SystemKind::transient_limit && exit_probabilities_) {
        return static_cast<int>(exit_probabilities_->cols());
    }
    return num_states();
}

int RiccatiSolution::column_for_state(int original_state) const {
    if (kind_ == SystemKind::full) {
        require(original_state >= 0 && original_state < num_states(), ErrorCode::instance_mismatch,
                "regime " + std::to_string(original_state) + " not in full solution");
        return original_state;
    }
    require(blocks_.has_value(), ErrorCode::instance_mismatch, "limit solution has no block structure attached");
    const auto labels = blocks_->labels();
    require(original_state >= 0 && original_state < static_cast<int>(labels.size()), ErrorCode::instance_mismatch,
            "regime " + std::to_string(original_state) + " outside the block structure");
    const int label = labels[original_state];
    if (label >= 0) {
        return label;
    }
    if (kind_ != SystemKind::transient_limit) {
        throw Error(ErrorCode::missing_transient_tables,
                    "transient state " + std::to_string(original_state) + " needs a transient-limit solution");
    }
    return num_limit_states() + (-label - 1);
}

void RiccatiSolution::attach_blocks(BlockStructure blocks) { blocks_ = std::move(blocks); }

void RiccatiSolution::append_transient_tables(const Eigen::MatrixXd& a) {
    const int l = num_states();
    require(a.cols() == l, ErrorCode::instance_mismatch, "exit probabilities must have one column per block");
    const int ms = static_cast<int>(a.rows());
    auto extend = [&](Eigen::MatrixXd& m) {
        Eigen::MatrixXd out(m.rows(), l + ms);
        out.leftCols(l) = m;
        out.rightCols(ms) = m * a.transpose();
        m = std::move(out);
    };
    extend(p_);
    extend(h_);
    extend(theta_);
    exit_probabilities_ = a;
    kind_ = SystemKind::transient_limit;
}

std::vector<double> aligned_grid(const std::vector<double>& knots, double step) {
    require(step > 0.0 && std::isfinite(step), ErrorCode::invalid_argument, "step must be positive");
    std::vector<double> grid{knots.front()};
    for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
        const double a = knots[s];
        const double b = knots[s + 1];
        if (!(b > a)) {
            continue;
        }
        const auto n = static_cast<long>(std::ceil((b - a) / step - 1e-9));
        const long cells = std::max(1L, n);
        for (long c = 1; c < cells; ++c) {
            grid.push_back(a + (b - a) * static_cast<double>(c) / static_cast<double>(cells));
        }
        grid.push_back(b);
    }
    return grid;
}

double recommended_step(const TwoScaleGenerator& gen, double max_step) {
    const double max_rate = gen.q_eps().diagonal().cwiseAbs().maxCoeff();
    double step = std::min(max_step, gen.epsilon / 10.0);
    if (max_rate > 0.0) {
        step = std::min(step, kStabilityLimit / max_rate * (1.0 - 1e-9));
    }
    return step;
}

namespace {

struct Derivative {
    const Eigen::MatrixXd& q;
    const std::vector<double>* r = nullptr;
    const std::vector<double>* rho = nullptr;

    // Time-reversed derivative -dY/dt, Y = (P, H, theta) stacked.
    void operator()(const Eigen::VectorXd& y, Eigen::VectorXd& dy) const {
        const auto n = q.rows();
        const auto p = y.segment(0, n);
        const auto h = y.segment(n, n);
        const auto th = y.segment(2 * n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            // Off-diagonal difference form: rows of q sum to zero.
            double coupling_p = 0.0;
            double coupling_h = 0.0;
            double coupling_th = 0.0;
            double source_th = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) {
                    continue;
                }
                const double rate = q(i, j);
                if (rate == 0.0) {
                    continue;
                }
                const double dh = h(j) - h(i);
                coupling_p += rate * (p(j) - p(i));
                coupling_h += rate * p(j) * dh;
                coupling_th += rate * (th(j) - th(i));
                source_th += rate * p(j) * dh * dh;
            }
            const double ri = (*r)[i];
            const double dp = p(i) * ((*rho)[i] - 2.0 * ri) - coupling_p;
            const double dhh = h(i) * ri - coupling_h / p(i);
            const double dth = -coupling_th - source_th;
            dy(i) = -dp;
            dy(n + i) = -dhh;
            dy(2 * n + i) = -dth;
        }
    }
};

void check_floor(const Eigen::VectorXd& y, Eigen::Index n, double t) {
    const auto p = y.segment(0, n);
    Eigen::Index where = 0;
    const double min_p = p.minCoeff(&where);
    if (!(min_p > kPositivityFloor) || !y.allFinite()) {
        std::ostringstream os;
        os << "P(" << t << ", " << where << ") = " << min_p << " reached the positivity floor " << kPositivityFloor;
        throw Error(ErrorCode::solver_blowup, os.str());
    }
}

}  // namespace

RiccatiSolution solve_system(const Eigen::MatrixXd& q, const RiccatiCoefficients& coefficients, double step,
                             SystemKind kind) {
    const auto n = q.rows();
    require(n == coefficients.num_states(), ErrorCode::instance_mismatch,
            "generator has " + std::to_string(n) + " states but coefficients have " +
                std::to_string(coefficients.num_states()));
    const std::vector<double> grid = aligned_grid(coefficients.knots, step);
    double max_cell = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        max_cell = std::max(max_cell, grid[i] - grid[i - 1]);
    }
    const double max_rate = n > 0 ? q.diagonal().cwiseAbs().maxCoeff() : 0.0;
    if (max_cell * max_rate > kStabilityLimit) {
        std::ostringstream os;
        os << "step " << max_cell << " times max rate " << max_rate << " exceeds " << kStabilityLimit;
        throw Error(ErrorCode::step_too_large, os.str());
    }

    const auto rows = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXd p(rows, n), h(rows, n), theta(rows, n);
    Eigen::VectorXd y(3 * n);
    y.segment(0, n).setOnes();
    y.segment(n, n).setOnes();
    y.segment(2 * n, n).setZero();
    p.row(rows - 1) = y.segment(0, n).transpose();
    h.row(rows - 1) = y.segment(n, n).transpose();
    theta.row(rows - 1) = y.segment(2 * n, n).transpose();

    Eigen::VectorXd k1(3 * n), k2(3 * n), k3(3 * n), k4(3 * n), tmp(3 * n);
    int segment = coefficients.num_segments() - 1;
    for (Eigen::Index g = rows - 1; g > 0; --g) {
        const double t_hi = grid[g];
        const double t_lo = grid[g - 1];
        const double dt = t_hi - t_lo;
        // The cell [t_lo, t_hi] lies inside the segment whose start is <= t_lo.
        while (segment > 0 && coefficients.knots[segment] > t_lo) {
            --segment;
        }
        const Derivative f{q, &coefficients.r[segment], &coefficients.rho[segment]};
        f(y, k1);
        tmp = y + 0.5 * dt * k1;
        check_floor(tmp, n, t_hi);
        f(tmp, k2);
        tmp = y + 0.5 * dt * k2;
        check_floor(tmp, n, t_hi);
        f(tmp, k3);
        tmp = y + dt * k3;
        check_floor(tmp, n, t_lo);
        f(tmp, k4);
        y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        check_floor(y, n, t_lo);
        p.row(g - 1) = y.segment(0, n).transpose();
        h.row(g - 1) = y.segment(n, n).transpose();
        theta.row(g - 1) = y.segment(2 * n, n).transpose();
    }
    return RiccatiSolution(kind, grid, std::move(p), std::move(h), std::move(theta));
}

RiccatiSolution solve_full(const TwoScaleGenerator& gen, const MarketModel& model, double step) {
    require_valid(gen);
    require(model.num_regimes() == gen.num_states(), ErrorCode::instance_mismatch,
            "market model has " + std::to_string(model.num_regimes()) + " regimes, chain has " +
                std::to_string(gen.num_states()) + " states");
    return solve_system(gen.q_eps(), full_coefficients(model), step, SystemKind::full);
}

RiccatiSolution solve_limit(const Eigen::MatrixXd& q_bar, const RiccatiCoefficients& aggregated, double step) {
    return solve_system(q_bar, aggregated, step, SystemKind::limit);
}

RiccatiSolution solve_limit(const TwoScaleGenerator& gen, const MarketModel& model, double step) {
    require_valid(gen);
    const Eigen::MatrixXd q_bar = aggregate_recurrent(gen);
    const auto mus = block_stationary_distributions(gen);
    RiccatiSolution sol = solve_limit(q_bar, aggregated_coefficients(model, gen.blocks, mus), step);
    sol.attach_blocks(gen.blocks);
    return sol;
}

RiccatiSolution solve_transient_limit(const TwoScaleGenerator& gen, const MarketModel& model, double step) {
    require_valid(gen);
    require(gen.blocks.num_transient() > 0, ErrorCode::invalid_argument,
            "solve_transient_limit: the chain has no transient states");
    const TransientAggregate agg = aggregate_transient(gen);
    const auto mus = block_stationary_distributions(gen);
    RiccatiSolution sol = solve_system(agg.q_bar, aggregated_coefficients(model, gen.blocks, mus), step,
                                       SystemKind::limit);
    sol.append_transient_tables(agg.exit_probabilities);
    sol.attach_blocks(gen.blocks);
    return sol;
}

double p_upper_bound(const RiccatiCoefficients& c) {
    double growth = 0.0;
    for (int s = 0; s < c.num_segments(); ++s) {
        for (int i = 0; i < c.num_states(); ++i) {
            growth = std::max(growth, 2.0 * c.r[s][i] - c.rho[s][i]);
        }
    }
    return std::exp(growth * c.horizon());
}

LimitGap limit_gap(const RiccatiSolution& full, const RiccatiSolution& limit) {
    require(full.kind() == SystemKind::full, ErrorCode::instance_mismatch, "limit_gap: first argument must be full");
    require(limit.kind() != SystemKind::full && limit.blocks().has_value(), ErrorCode::instance_mismatch,
            "limit_gap: second argument must be a limit solution with blocks");
    const auto labels = limit.blocks()->labels();
    require(static_cast<int>(labels.size()) == full.num_states(), ErrorCode::instance_mismatch,
            "limit_gap: state counts differ");
    LimitGap gap;
    for (std::size_t g = 0; g < full.grid().size(); ++g) {
        const double t = full.grid()[g];
        for (int s = 0; s < full.num_states(); ++s) {
            const int col = limit.column_for_state(s);
            const StateValues lim = limit.evaluate(t, col);
            const double dp = std::abs(full.p()(g, s) - lim.p);
            const double dh = std::abs(full.h()(g, s) - lim.h);
            if (labels[s] >= 0) {
                gap.p_recurrent = std::max(gap.p_recurrent, dp);
                gap.h_recurrent = std::max(gap.h_recurrent, dh);
            } else {
                gap.p_transient = std::max(gap.p_transient, dp);
                gap.h_transient = std::max(gap.h_transient, dh);
            }
        }
    }
    return gap;
}

void write_solution_csv(std::ostream& out, const RiccatiSolution& sol) {
    out << "t,state,P,H,theta\n";
    for (std::size_t g = 0; g < sol.grid().size(); ++g) {
        const std::string t = format_double(sol.grid()[g]);
        for (int s = 0; s < sol.num_states(); ++s) {
            out << t << ',' << s << ',' << format_double(sol.p()(g, s)) << ',' << format_double(sol.h()(g, s)) << ','
                << format_double(sol.theta()(g, s)) << '\n';
        }
    }
}

}  // namespace twoscale
