#include "twoscale/chain_algebra.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "twoscale/csv.hpp"
#include "twoscale/rng.hpp"

namespace twoscale {

namespace {

constexpr double kRowSumTolerance = 1e-12;
constexpr double kHurwitzMargin = 1e-10;
constexpr double kStationaryResidual = 1e-10;

std::string join_indices(const std::vector<int>& v) {
    std::ostringstream os;
    os << '{';
    for (std::size_t i = 0; i < v.size(); ++i) {
        os << (i ? "," : "") << v[i];
    }
    os << '}';
    return os.str();
}

// States reachable from `start` along positive rates.
std::vector<bool> reachable_from(const Eigen::MatrixXd& q, int start, bool transpose) {
    const int m = static_cast<int>(q.rows());
    std::vector<bool> seen(m, false);
    std::vector<int> stack{start};
    seen[start] = true;
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        for (int j = 0; j < m; ++j) {
            const double rate = transpose ? q(j, i) : q(i, j);
            if (j != i && rate > 0.0 && !seen[j]) {
                seen[j] = true;
                stack.push_back(j);
            }
        }
    }
    return seen;
}

}  // namespace

GeneratorMatrix::GeneratorMatrix(Eigen::MatrixXd q) : q_(std::move(q)) {
    const auto bad = violations(q_);
    if (!bad.empty()) {
        std::string msg;
        for (const auto& v : bad) {
            msg += (msg.empty() ? "" : "; ") + v;
        }
        throw Error(ErrorCode::invalid_generator, msg);
    }
}

std::vector<std::string> GeneratorMatrix::violations(const Eigen::MatrixXd& q, const std::string& name) {
    std::vector<std::string> out;
    if (q.rows() != q.cols() || q.rows() == 0) {
        out.push_back(name + " must be a nonempty square matrix");
        return out;
    }
    if (!q.allFinite()) {
        out.push_back(name + " has non-finite entries");
        return out;
    }
    const double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
    for (int i = 0; i < q.rows(); ++i) {
        for (int j = 0; j < q.cols(); ++j) {
            if (i != j && q(i, j) < 0.0) {
                std::ostringstream os;
                os << name << " row " << i << ": negative off-diagonal rate at column " << j;
                out.push_back(os.str());
            }
        }
        const double sum = q.row(i).sum();
        if (std::abs(sum) > kRowSumTolerance * scale) {
            std::ostringstream os;
            os.precision(17);
            os << name << " row " << i << ": row sum " << sum << " is not zero";
            out.push_back(os.str());
        }
    }
    return out;
}

int BlockStructure::num_states() const {
    int n = num_transient();
    for (const auto& b : recurrent_blocks) {
        n += static_cast<int>(b.size());
    }
    return n;
}

std::vector<int> BlockStructure::labels() const {
    std::vector<int> label(num_states(), 0);
    for (int k = 0; k < num_blocks(); ++k) {
        for (int s : recurrent_blocks[k]) {
            label.at(s) = k;
        }
    }
    for (int j = 0; j < num_transient(); ++j) {
        label.at(transient_states[j]) = -(j + 1);
    }
    return label;
}

std::vector<std::string> BlockStructure::violations(int m) const {
    std::vector<std::string> out;
    if (recurrent_blocks.empty()) {
        out.push_back("at least one recurrent block is required");
    }
    std::vector<int> count(m, 0);
    auto visit = [&](const std::vector<int>& set, const std::string& what) {
        for (int s : set) {
            if (s < 0 || s >= m) {
                out.push_back(what + " contains state " + std::to_string(s) + " outside 0.." + std::to_string(m - 1));
            } else {
                ++count[s];
            }
        }
    };
    for (int k = 0; k < num_blocks(); ++k) {
        if (recurrent_blocks[k].empty()) {
            out.push_back("recurrent block " + std::to_string(k) + " is empty");
        }
        visit(recurrent_blocks[k], "recurrent block " + std::to_string(k));
    }
    visit(transient_states, "transient set");
    for (int s = 0; s < m; ++s) {
        if (count[s] == 0) {
            out.push_back("state " + std::to_string(s) + " is not assigned to any block");
        } else if (count[s] > 1) {
            out.push_back("state " + std::to_string(s) + " is assigned more than once");
        }
    }
    return out;
}

BlockStructure BlockStructure::single_block(int m) {
    BlockStructure b;
    b.recurrent_blocks.emplace_back(m);
    for (int i = 0; i < m; ++i) {
        b.recurrent_blocks[0][i] = i;
    }
    return b;
}

TwoScaleGenerator TwoScaleGenerator::with_epsilon(double eps) const {
    TwoScaleGenerator g = *this;
    g.epsilon = eps;
    return g;
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& q, const std::vector<int>& rows, const std::vector<int>& cols) {
    Eigen::MatrixXd out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            out(i, j) = q(rows[i], cols[j]);
        }
    }
    return out;
}

bool is_irreducible(const Eigen::MatrixXd& q) {
    if (q.rows() <= 1) {
        return true;
    }
    const auto fwd = reachable_from(q, 0, false);
    const auto bwd = reachable_from(q, 0, true);
    return std::all_of(fwd.begin(), fwd.end(), [](bool b) { return b; }) &&
           std::all_of(bwd.begin(), bwd.end(), [](bool b) { return b; });
}

bool is_hurwitz(const Eigen::MatrixXd& a) {
    if (a.rows() == 0) {
        return true;
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
    const bool by_eigen = es.eigenvalues().real().maxCoeff() < -kHurwitzMargin;
    if (a.rows() == 1) {
        return by_eigen && a(0, 0) < -kHurwitzMargin;
    }
    if (a.rows() == 2) {
        const double tr = a.trace();
        const double det = a.determinant();
        const bool by_trace_det = tr < 0.0 && det > 0.0;
        return by_eigen && by_trace_det;
    }
    return by_eigen;
}

ValidationReport validate_two_scale(const TwoScaleGenerator& gen) {
    ValidationReport report;
    auto& v = report.violations;
    const int m = gen.num_states();
    if (gen.q_tilde.rows() != gen.q_tilde.cols() || gen.q_hat.rows() != m || gen.q_hat.cols() != m) {
        v.push_back("q_tilde and q_hat must be square matrices of equal size");
        return report;
    }
    if (!(gen.epsilon > 0.0) || !std::isfinite(gen.epsilon)) {
        v.push_back("epsilon must be positive and finite");
    }
    for (auto& s : GeneratorMatrix::violations(gen.q_tilde, "q_tilde")) {
        v.push_back(std::move(s));
    }
    for (auto& s : GeneratorMatrix::violations(gen.q_hat, "q_hat")) {
        v.push_back(std::move(s));
    }
    const auto structural = gen.blocks.violations(m);
    if (!structural.empty()) {
        v.insert(v.end(), structural.begin(), structural.end());
        return report;
    }
    const auto label = gen.blocks.labels();
    // Fast transitions may not leave a recurrent block.
    for (int i = 0; i < m; ++i) {
        if (label[i] < 0) {
            continue;
        }
        for (int j = 0; j < m; ++j) {
            if (j != i && gen.q_tilde(i, j) != 0.0 && label[j] != label[i]) {
                v.push_back("q_tilde row " + std::to_string(i) + ": fast transition to state " + std::to_string(j) +
                            " outside recurrent block " + std::to_string(label[i]));
            }
        }
    }
    for (int k = 0; k < gen.blocks.num_blocks(); ++k) {
        const auto& b = gen.blocks.recurrent_blocks[k];
        if (!is_irreducible(submatrix(gen.q_tilde, b, b))) {
            v.push_back("irreducibility: q_tilde block " + std::to_string(k) + " " + join_indices(b) +
                        " is reducible");
        }
    }
    if (gen.blocks.num_transient() > 0) {
        const auto& t = gen.blocks.transient_states;
        if (!is_hurwitz(submatrix(gen.q_tilde, t, t))) {
            v.push_back("hurwitz: transient corner of q_tilde " + join_indices(t) + " is not Hurwitz");
        }
    }
    if (v.empty()) {
        for (auto& s : GeneratorMatrix::violations(gen.q_eps(), "Q^eps")) {
            v.push_back(std::move(s));
        }
    }
    return report;
}

void require_valid(const TwoScaleGenerator& gen) {
    const auto report = validate_two_scale(gen);
    if (!report.ok()) {
        std::string msg;
        for (const auto& s : report.violations) {
            msg += (msg.empty() ? "" : "; ") + s;
        }
        throw Error(ErrorCode::invalid_generator, msg);
    }
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& block) {
    const int n = static_cast<int>(block.rows());
    require(n >= 1 && block.cols() == n, ErrorCode::invalid_argument, "stationary_distribution: block must be square");
    if (!is_irreducible(block)) {
        throw Error(ErrorCode::reducible_block, "generator block is not irreducible");
    }
    // [Q'; 1'] mu = [0; 1]
    Eigen::MatrixXd a(n + 1, n);
    a.topRows(n) = block.transpose();
    a.row(n).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    rhs(n) = 1.0;
    Eigen::VectorXd mu = a.colPivHouseholderQr().solve(rhs);

    const double scale = std::max(1.0, block.cwiseAbs().maxCoeff());
    const double residual = (mu.transpose() * block).cwiseAbs().maxCoeff() / scale;
    if (!(residual < kStationaryResidual) || !(mu.minCoeff() > 0.0)) {
        throw Error(ErrorCode::reducible_block, "stationary solve failed (residual " + std::to_string(residual) + ")");
    }
    return mu / mu.sum();
}

std::vector<Eigen::VectorXd> block_stationary_distributions(const TwoScaleGenerator& gen) {
    std::vector<Eigen::VectorXd> mus;
    for (const auto& b : gen.blocks.recurrent_blocks) {
        mus.push_back(stationary_distribution(submatrix(gen.q_tilde, b, b)));
    }
    return mus;
}

Eigen::MatrixXd aggregate_recurrent(const TwoScaleGenerator& gen) {
    if (gen.blocks.num_transient() > 0) {
        throw Error(ErrorCode::use_aggregate_transient, "generator has transient states");
    }
    const auto mus = block_stationary_distributions(gen);
    const int l = gen.blocks.num_blocks();
    Eigen::MatrixXd q_bar = Eigen::MatrixXd::Zero(l, l);
    for (int k = 0; k < l; ++k) {
        const auto& from = gen.blocks.recurrent_blocks[k];
        for (int c = 0; c < l; ++c) {
            const auto& to = gen.blocks.recurrent_blocks[c];
            double sum = 0.0;
            for (std::size_t i = 0; i < from.size(); ++i) {
                double row = 0.0;
                for (int j : to) {
                    row += gen.q_hat(from[i], j);
                }
                sum += mus[k](i) * row;
            }
            q_bar(k, c) = sum;
        }
    }
    return q_bar;
}

TransientAggregate aggregate_transient(const TwoScaleGenerator& gen) {
    const auto& tr = gen.blocks.transient_states;
    const int ms = gen.blocks.num_transient();
    const int l = gen.blocks.num_blocks();
    require(ms > 0, ErrorCode::invalid_argument, "aggregate_transient: no transient states");

    const Eigen::MatrixXd corner = submatrix(gen.q_tilde, tr, tr);
    if (!is_hurwitz(corner)) {
        throw Error(ErrorCode::not_hurwitz, "transient corner of q_tilde is not Hurwitz");
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(corner);
    if (!lu.isInvertible()) {
        throw Error(ErrorCode::not_hurwitz, "transient corner of q_tilde is singular");
    }

    TransientAggregate out;
    out.exit_probabilities.resize(ms, l);
    for (int k = 0; k < l; ++k) {
        const auto& b = gen.blocks.recurrent_blocks[k];
        const Eigen::VectorXd into_block = submatrix(gen.q_tilde, tr, b).rowwise().sum();
        out.exit_probabilities.col(k) = -lu.solve(into_block);
    }

    const auto mus = block_stationary_distributions(gen);
    out.q_bar = Eigen::MatrixXd::Zero(l, l);
    for (int k = 0; k < l; ++k) {
        const auto& from = gen.blocks.recurrent_blocks[k];
        for (std::size_t i = 0; i < from.size(); ++i) {
            // Row of Q^11 1~ + Q^12 A for state from[i].
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(l);
            for (int c = 0; c < l; ++c) {
                for (int j : gen.blocks.recurrent_blocks[c]) {
                    row(c) += gen.q_hat(from[i], j);
                }
            }
            for (int j = 0; j < ms; ++j) {
                row += gen.q_hat(from[i], tr[j]) * out.exit_probabilities.row(j);
            }
            out.q_bar.row(k) += mus[k](i) * row;
        }
    }
    return out;
}

int ChainPath::state_at(double t) const {
    require(!states.empty(), ErrorCode::invalid_argument, "empty chain path");
    const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - jump_times.begin()) - 1));
    return states[idx];
}

double ChainPath::occupation(int state) const {
    double total = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
        const double end = i + 1 < jump_times.size() ? jump_times[i + 1] : horizon;
        if (states[i] == state) {
            total += end - jump_times[i];
        }
    }
    return total;
}

ChainPath sample_path(const Eigen::MatrixXd& q, int initial_state, double horizon, std::uint64_t seed) {
    Engine rng(seed);
    ChainPath p = sample_path_with(q, initial_state, horizon, rng);
    p.seed = seed;
    return p;
}

ChainPath aggregate_path(const ChainPath& path, const BlockStructure& blocks,
                         const std::optional<Eigen::MatrixXd>& exit_probabilities, std::uint64_t seed) {
    const bool has_transient = blocks.num_transient() > 0;
    require(has_transient == exit_probabilities.has_value(), ErrorCode::invalid_argument,
            "aggregate_path: exit probabilities must be given iff transient states exist");
    if (has_transient) {
        require(exit_probabilities->rows() == blocks.num_transient() &&
                    exit_probabilities->cols() == blocks.num_blocks(),
                ErrorCode::invalid_argument, "aggregate_path: exit probability table has wrong shape");
    }
    const auto label = blocks.labels();
    Engine rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int l = blocks.num_blocks();

    ChainPath out;
    out.horizon = path.horizon;
    out.seed = seed;
    for (std::size_t i = 0; i < path.states.size(); ++i) {
        const int s = path.states[i];
        if (s < 0 || s >= static_cast<int>(label.size())) {
            throw Error(ErrorCode::bad_block_structure, "state " + std::to_string(s) + " outside declared blocks");
        }
        int k = label[s];
        if (k < 0) {
            const int j = -k - 1;
            const double xi = unit(rng);
            double cumulative = 0.0;
            k = l - 1;
            for (int c = 0; c < l; ++c) {
                cumulative += (*exit_probabilities)(j, c);
                if (xi <= cumulative) {
                    k = c;
                    break;
                }
            }
        }
        if (out.states.empty() || out.states.back() != k) {
            out.jump_times.push_back(path.jump_times[i]);
            out.states.push_back(k);
        }
    }
    return out;
}

void write_path_csv(std::ostream& out, const ChainPath& path) {
    out << "jump_time,state\n";
    for (std::size_t i = 0; i < path.states.size(); ++i) {
        out << format_double(path.jump_times[i]) << ',' << path.states[i] << '\n';
    }
}

}  // namespace twoscale
