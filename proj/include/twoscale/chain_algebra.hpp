#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/error.hpp"

namespace twoscale {

/// Validated continuous-time Markov chain generator: nonnegative
/// off-diagonal rates and rows summing to zero (relative tolerance 1e-12).
class GeneratorMatrix {
public:
    explicit GeneratorMatrix(Eigen::MatrixXd q);

    /// Human-readable list of violated generator invariants; empty when valid.
    static std::vector<std::string> violations(const Eigen::MatrixXd& q, const std::string& name = "Q");

    [[nodiscard]] int dim() const { return static_cast<int>(q_.rows()); }
    [[nodiscard]] const Eigen::MatrixXd& matrix() const { return q_; }
    [[nodiscard]] double rate(int i, int j) const { return q_(i, j); }

private:
    Eigen::MatrixXd q_;
};

/// Partition of the state space into recurrent blocks M_1..M_l plus a
/// (possibly empty) set of transient states.
struct BlockStructure {
    std::vector<std::vector<int>> recurrent_blocks;
    std::vector<int> transient_states;

    [[nodiscard]] int num_blocks() const { return static_cast<int>(recurrent_blocks.size()); }
    [[nodiscard]] int num_transient() const { return static_cast<int>(transient_states.size()); }
    [[nodiscard]] int num_states() const;

    /// Per-state label: block index k >= 0, or -(j+1) for the j-th transient state.
    [[nodiscard]] std::vector<int> labels() const;

    /// Empty when the blocks and transient set partition {0..m-1}.
    [[nodiscard]] std::vector<std::string> violations(int m) const;

    static BlockStructure single_block(int m);
};

/// The pair (Q~, Q^) with its block structure; Q^eps = Q~/eps + Q^.
struct TwoScaleGenerator {
    Eigen::MatrixXd q_tilde;
    Eigen::MatrixXd q_hat;
    BlockStructure blocks;
    double epsilon = 1.0;

    [[nodiscard]] int num_states() const { return static_cast<int>(q_tilde.rows()); }
    [[nodiscard]] Eigen::MatrixXd q_eps() const { return q_tilde / epsilon + q_hat; }
    [[nodiscard]] TwoScaleGenerator with_epsilon(double eps) const;
};

struct ValidationReport {
    std::vector<std::string> violations;
    [[nodiscard]] bool ok() const { return violations.empty(); }
};

ValidationReport validate_two_scale(const TwoScaleGenerator& gen);

/// Throws Error(invalid_generator) listing every violation if validation fails.
void require_valid(const TwoScaleGenerator& gen);

/// Strong connectivity of the positive-rate graph.
bool is_irreducible(const Eigen::MatrixXd& q);

/// Hurwitz test: every eigenvalue has real part < -1e-10. For dimension <= 2
/// the eigenvalue verdict must agree with the trace/determinant criterion.
bool is_hurwitz(const Eigen::MatrixXd& a);

/// Stationary distribution mu of an irreducible generator block (mu Q = 0, sum 1).
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& block);

/// Stationary distributions of every recurrent block of Q~, in block order.
std::vector<Eigen::VectorXd> block_stationary_distributions(const TwoScaleGenerator& gen);

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& q, const std::vector<int>& rows, const std::vector<int>& cols);

/// Aggregated l x l generator diag(mu^1..mu^l) Q^ diag(1_m1..1_ml).
Eigen::MatrixXd aggregate_recurrent(const TwoScaleGenerator& gen);

struct TransientAggregate {
    /// exit_probabilities(j, k) = a_{m_k, j}: probability that transient state j
    /// is absorbed into block k under the fast dynamics.
    Eigen::MatrixXd exit_probabilities;
    Eigen::MatrixXd q_bar;
};

TransientAggregate aggregate_transient(const TwoScaleGenerator& gen);

/// Piecewise-constant right-continuous trajectory of a chain on [0, horizon].
struct ChainPath {
    std::vector<double> jump_times;  // jump_times[0] == 0
    std::vector<int> states;
    double horizon = 0.0;
    std::uint64_t seed = 0;

    [[nodiscard]] int state_at(double t) const;
    /// Time spent in `state` over [0, horizon].
    [[nodiscard]] double occupation(int state) const;
    [[nodiscard]] std::size_t num_jumps() const { return states.empty() ? 0 : states.size() - 1; }
};

template <class Rng>
ChainPath sample_path_with(const Eigen::MatrixXd& q, int initial_state, double horizon, Rng& rng);

/// Exact simulation: exponential holding times with rate -q_ii, next state by
/// cumulative-sum inversion over j != i in increasing index.
ChainPath sample_path(const Eigen::MatrixXd& q, int initial_state, double horizon, std::uint64_t seed);

/// Block-label process. Visits to transient state j are relabelled with an
/// independent draw xi_j, P(xi_j = k) = exit_probabilities(j, k), one uniform
/// per visit thresholded cumulatively in block order.
ChainPath aggregate_path(const ChainPath& path, const BlockStructure& blocks,
                         const std::optional<Eigen::MatrixXd>& exit_probabilities, std::uint64_t seed);

void write_path_csv(std::ostream& out, const ChainPath& path);

}  // namespace twoscale

#include "twoscale/detail/chain_sampling.hpp"
