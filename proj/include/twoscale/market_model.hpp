#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/chain_algebra.hpp"

namespace twoscale {

/// Coefficients of dx = [r x + B u] dt + u' sigma dw in one regime.
struct RegimeCoefficients {
    double r = 0.0;
    Eigen::RowVectorXd b;   // 1 x d1 excess-return row
    Eigen::MatrixXd sigma;  // d1 x d volatility

    [[nodiscard]] int controls() const { return static_cast<int>(b.size()); }
    [[nodiscard]] int noises() const { return static_cast<int>(sigma.cols()); }
};

/// Regime-dependent coefficients, piecewise constant in time. Segment s
/// covers [breakpoint(s), breakpoint(s+1)); zero-length segments are allowed
/// and ignored by the integrators.
class MarketModel {
public:
    MarketModel() = default;

    /// `interior_breakpoints` are the times strictly inside (0, T) where the
    /// coefficients change; segments.size() must equal interior size + 1.
    MarketModel(double horizon, std::vector<double> interior_breakpoints,
                std::vector<std::vector<RegimeCoefficients>> segments, double nondegeneracy_delta);

    /// Single time-homogeneous segment.
    MarketModel(double horizon, std::vector<RegimeCoefficients> regimes, double nondegeneracy_delta);

    [[nodiscard]] double horizon() const { return horizon_; }
    [[nodiscard]] double delta() const { return delta_; }
    [[nodiscard]] int num_regimes() const { return segments_.empty() ? 0 : static_cast<int>(segments_[0].size()); }
    [[nodiscard]] int num_segments() const { return static_cast<int>(segments_.size()); }
    [[nodiscard]] int controls() const;
    [[nodiscard]] int noises() const;

    /// Segment boundaries including 0 and T.
    [[nodiscard]] const std::vector<double>& knots() const { return knots_; }
    [[nodiscard]] double segment_start(int s) const { return knots_[s]; }
    [[nodiscard]] double segment_end(int s) const { return knots_[s + 1]; }
    /// Last segment of positive length containing t (t == T maps to the final one).
    [[nodiscard]] int segment_at(double t) const;

    [[nodiscard]] const RegimeCoefficients& coefficients(int segment, int regime) const {
        return segments_[segment][regime];
    }
    [[nodiscard]] const RegimeCoefficients& at(double t, int regime) const {
        return segments_[segment_at(t)][regime];
    }

    /// Empty when the model satisfies its invariants (finite coefficients,
    /// consistent shapes, sigma sigma' >= delta I).
    [[nodiscard]] std::vector<std::string> violations() const;

    /// Returns a copy with every sigma multiplied by `factor`.
    [[nodiscard]] MarketModel with_sigma_scaled(double factor) const;

private:
    double horizon_ = 0.0;
    std::vector<double> knots_;
    std::vector<std::vector<RegimeCoefficients>> segments_;
    double delta_ = 0.0;
};

/// rho = B (sigma sigma')^{-1} B'. Throws degenerate_volatility when the
/// smallest eigenvalue of sigma sigma' is below `delta`.
double rho(const RegimeCoefficients& c, double delta);
double rho(const MarketModel& model, double t, int regime);

/// Feedback gain -(sigma sigma')^{-1} B'.
Eigen::VectorXd feedback_gain(const RegimeCoefficients& c, double delta);

/// Coefficients of a backward Riccati system over one time grid: per segment
/// and per state the growth rate r and the risk term rho.
struct RiccatiCoefficients {
    std::vector<double> knots;
    std::vector<std::vector<double>> r;    // [segment][state]
    std::vector<std::vector<double>> rho;  // [segment][state]

    [[nodiscard]] int num_states() const { return r.empty() ? 0 : static_cast<int>(r[0].size()); }
    [[nodiscard]] int num_segments() const { return static_cast<int>(r.size()); }
    [[nodiscard]] double horizon() const { return knots.back(); }
};

RiccatiCoefficients full_coefficients(const MarketModel& model);

/// Block averages F(t,k) = sum_j mu^k_j F(t, s_kj) of r and of the per-state
/// rho (not rho of averaged B, sigma).
RiccatiCoefficients aggregated_coefficients(const MarketModel& model, const BlockStructure& blocks,
                                            const std::vector<Eigen::VectorXd>& mus);

/// Block averages of B rows, [segment][block].
std::vector<std::vector<Eigen::RowVectorXd>> aggregated_b(const MarketModel& model, const BlockStructure& blocks,
                                                          const std::vector<Eigen::VectorXd>& mus);

}  // namespace twoscale
