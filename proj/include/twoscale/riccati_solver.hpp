#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/chain_algebra.hpp"
#include "twoscale/market_model.hpp"

namespace twoscale {

enum class SystemKind { full, limit, transient_limit };

struct StateValues {
    double p = 0.0;
    double h = 0.0;
    double theta = 0.0;
};

/// Backward solution of the P, H, theta system on a time grid. Columns are
/// states: the m regimes for a full solve, the l aggregated states for a limit
/// solve, and for a transient-limit solve the l aggregated states followed by
/// one column per transient state (filled by exit-probability averages).
class RiccatiSolution {
public:
    RiccatiSolution(SystemKind kind, std::vector<double> grid, Eigen::MatrixXd p, Eigen::MatrixXd h,
                    Eigen::MatrixXd theta);

    [[nodiscard]] SystemKind kind() const { return kind_; }
    [[nodiscard]] const std::vector<double>& grid() const { return grid_; }
    [[nodiscard]] double horizon() const { return grid_.back(); }
    [[nodiscard]] int num_states() const { return static_cast<int>(p_.cols()); }
    [[nodiscard]] const Eigen::MatrixXd& p() const { return p_; }
    [[nodiscard]] const Eigen::MatrixXd& h() const { return h_; }
    [[nodiscard]] const Eigen::MatrixXd& theta() const { return theta_; }

    /// Linear interpolation in t; exact at grid points. Throws out_of_horizon.
    [[nodiscard]] StateValues evaluate(double t, int state) const;
    [[nodiscard]] double h_at(double t, int state) const;

    /// Block structure of the original chain (limit and transient-limit solves).
    [[nodiscard]] const std::optional<BlockStructure>& blocks() const { return blocks_; }
    /// a_{m_k, j} as (j, k) (transient-limit solves only).
    [[nodiscard]] const std::optional<Eigen::MatrixXd>& exit_probabilities() const { return exit_probabilities_; }
    [[nodiscard]] int num_limit_states() const;

    /// Column of this solution that an original chain state reads from.
    [[nodiscard]] int column_for_state(int original_state) const;

    void attach_blocks(BlockStructure blocks);
    void append_transient_tables(const Eigen::MatrixXd& exit_probabilities);

private:
    struct Locator {
        std::size_t index;
        double weight;
    };
    [[nodiscard]] Locator locate(double t) const;

    SystemKind kind_;
    std::vector<double> grid_;
    Eigen::MatrixXd p_, h_, theta_;
    double uniform_step_ = 0.0;
    std::optional<BlockStructure> blocks_;
    std::optional<Eigen::MatrixXd> exit_probabilities_;
};

/// Positivity floor for P; reaching it aborts the solve.
inline constexpr double kPositivityFloor = 1e-14;
/// Explicit RK4 stability requirement: step * max_i |q_ii| <= this.
inline constexpr double kStabilityLimit = 0.5;

/// Time grid aligned with the coefficient knots: every positive-length
/// segment is split into ceil(length / step) equal cells.
std::vector<double> aligned_grid(const std::vector<double>& knots, double step);

/// Largest step passing the stability pre-check and not exceeding eps / 10.
double recommended_step(const TwoScaleGenerator& gen, double max_step);

/// Classic RK4 on the time-reversed system of
///   P' = P (rho - 2r) - sum_j q_ij P_j,                    P(T) = 1
///   H' = H r - (1/P) sum_j q_ij P_j H_j + (H/P) sum_j q_ij P_j,  H(T) = 1
///   theta' = -sum_j q_ij theta_j - sum_{j!=i} q_ij P_j (H_j - H_i)^2,  theta(T) = 0
RiccatiSolution solve_system(const Eigen::MatrixXd& q, const RiccatiCoefficients& coefficients, double step,
                             SystemKind kind = SystemKind::full);

RiccatiSolution solve_full(const TwoScaleGenerator& gen, const MarketModel& model, double step);

RiccatiSolution solve_limit(const Eigen::MatrixXd& q_bar, const RiccatiCoefficients& aggregated, double step);

/// Aggregates the recurrent-only generator and model, then solves the limit system.
RiccatiSolution solve_limit(const TwoScaleGenerator& gen, const MarketModel& model, double step);

RiccatiSolution solve_transient_limit(const TwoScaleGenerator& gen, const MarketModel& model, double step);

/// Upper bound C with P <= C: exp(max(0, max(2r - rho)) T). H <= 1 holds when r >= 0.
double p_upper_bound(const RiccatiCoefficients& coefficients);

/// Sup-norm distances between a full solve and a limit solve of the same instance.
struct LimitGap {
    double p_recurrent = 0.0;
    double h_recurrent = 0.0;
    double p_transient = 0.0;
    double h_transient = 0.0;
};

/// Compares each full-system state with the limit column it aggregates to, at
/// every grid point of `full` (limit values interpolated).
LimitGap limit_gap(const RiccatiSolution& full, const RiccatiSolution& limit);

/// Columns: t, state, P, H, theta.
void write_solution_csv(std::ostream& out, const RiccatiSolution& sol);

}  // namespace twoscale
