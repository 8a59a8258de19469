#pragma once

// Shared test instances and independent reference computations. Nothing here
// calls into the library's solvers: the oracles use matrix exponentials,
// Boost.Odeint, power iteration and direct iteration of the jump chain.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <boost/numeric/odeint.hpp>

#include "twoscale/chain_algebra.hpp"
#include "twoscale/market_model.hpp"

namespace testing_support {

using twoscale::BlockStructure;
using twoscale::MarketModel;
using twoscale::RegimeCoefficients;
using twoscale::TwoScaleGenerator;

inline Eigen::MatrixXd mat(std::initializer_list<std::initializer_list<double>> rows) {
    Eigen::MatrixXd m(rows.size(), rows.begin()->size());
    int i = 0;
    for (const auto& row : rows) {
        int j = 0;
        for (double v : row) {
            m(i, j++) = v;
        }
        ++i;
    }
    return m;
}

inline RegimeCoefficients scalar_regime(double r, double b, double sigma) {
    RegimeCoefficients c;
    c.r = r;
    c.b = Eigen::RowVectorXd::Constant(1, b);
    c.sigma = Eigen::MatrixXd::Constant(1, 1, sigma);
    return c;
}

inline TwoScaleGenerator instance_a(double eps) {
    TwoScaleGenerator g;
    g.q_tilde = mat({{-1, 1, 0, 0}, {2, -2, 0, 0}, {0, 0, -3, 3}, {0, 0, 1, -1}});
    g.q_hat = mat({{-0.5, 0, 0.5, 0}, {0, -0.5, 0, 0.5}, {0.3, 0, -0.3, 0}, {0, 0.2, 0, -0.2}});
    g.blocks.recurrent_blocks = {{0, 1}, {2, 3}};
    g.epsilon = eps;
    return g;
}

inline MarketModel instance_a_market(double horizon = 1.0) {
    return MarketModel(horizon,
                       {scalar_regime(0.03, 0.10, 0.20), scalar_regime(0.03, 0.40, 0.35),
                        scalar_regime(0.05, 0.05, 0.25), scalar_regime(0.05, 0.30, 0.40)},
                       1e-6);
}

/// Two blocks of two states plus one transient state (index 4).
inline TwoScaleGenerator transient_instance(double eps) {
    TwoScaleGenerator g;
    g.q_tilde = mat({{-1, 1, 0, 0, 0}, {2, -2, 0, 0, 0}, {0, 0, -3, 3, 0}, {0, 0, 1, -1, 0}, {1, 0, 0.5, 0.5, -2}});
    g.q_hat = mat({{-0.5, 0, 0.5, 0, 0},
                   {0, -0.5, 0, 0.3, 0.2},
                   {0.3, 0, -0.3, 0, 0},
                   {0, 0.2, 0, -0.4, 0.2},
                   {0, 0, 0, 0, 0}});
    g.blocks.recurrent_blocks = {{0, 1}, {2, 3}};
    g.blocks.transient_states = {4};
    g.epsilon = eps;
    return g;
}

inline MarketModel transient_market(double horizon = 1.0) {
    const double r[] = {0.0, 0.2, 0.5, 0.6, 0.3};
    const double b[] = {0.5, 0.9, 0.2, 0.4, 0.6};
    const double s[] = {0.3, 0.4, 0.5, 0.35, 0.45};
    std::vector<RegimeCoefficients> regs;
    for (int i = 0; i < 5; ++i) {
        regs.push_back(scalar_regime(r[i], b[i], s[i]));
    }
    return MarketModel(horizon, regs, 1e-6);
}

/// Every regime has rate r and rho - 2r = c.
inline MarketModel regime_independent_market(int m, double r, double c, double horizon = 1.0) {
    const double rho = c + 2.0 * r;
    const double sigma = 0.5;
    std::vector<RegimeCoefficients> regs(m, scalar_regime(r, sigma * std::sqrt(rho), sigma));
    return MarketModel(horizon, regs, 1e-6);
}

inline Eigen::VectorXd rho_vector(const MarketModel& model, int segment) {
    Eigen::VectorXd out(model.num_regimes());
    for (int i = 0; i < model.num_regimes(); ++i) {
        const auto& c = model.coefficients(segment, i);
        const Eigen::MatrixXd a = c.sigma * c.sigma.transpose();
        out(i) = (c.b * a.inverse() * c.b.transpose())(0, 0);
    }
    return out;
}

inline Eigen::VectorXd r_vector(const MarketModel& model, int segment) {
    Eigen::VectorXd out(model.num_regimes());
    for (int i = 0; i < model.num_regimes(); ++i) {
        out(i) = model.coefficients(segment, i).r;
    }
    return out;
}

/// P and K = P H solve linear systems: with tau = T - t,
///   P(t) = exp((Q - diag(rho - 2r)) tau) 1,  K(t) = exp((Q - diag(rho - r)) tau) 1.
/// Segments are composed from T backwards.
struct ExpmOracle {
    Eigen::MatrixXd q;
    MarketModel model;

    [[nodiscard]] Eigen::VectorXd propagate(double t, bool k_system) const {
        const int m = static_cast<int>(q.rows());
        Eigen::VectorXd v = Eigen::VectorXd::Ones(m);
        const auto& knots = model.knots();
        for (int s = model.num_segments() - 1; s >= 0; --s) {
            const double lo = std::max(t, knots[s]);
            const double hi = knots[s + 1];
            if (hi <= lo) {
                continue;
            }
            const Eigen::VectorXd shift = rho_vector(model, s) - (k_system ? 1.0 : 2.0) * r_vector(model, s);
            const Eigen::MatrixXd a = q - Eigen::MatrixXd(shift.asDiagonal());
            v = (a * (hi - lo)).exp() * v;
        }
        return v;
    }
    [[nodiscard]] Eigen::VectorXd p(double t) const { return propagate(t, false); }
    [[nodiscard]] Eigen::VectorXd h(double t) const { return propagate(t, true).cwiseQuotient(p(t)); }
};

/// Adaptive Dormand-Prince integration of the full (P, H, theta) system in
/// reversed time, single time-homogeneous segment.
inline std::vector<Eigen::VectorXd> odeint_values(const Eigen::MatrixXd& q, const Eigen::VectorXd& r,
                                                  const Eigen::VectorXd& rho, double tau) {
    using State = std::vector<double>;
    const int m = static_cast<int>(q.rows());
    State x(3 * m);
    for (int i = 0; i < m; ++i) {
        x[i] = 1.0;
        x[m + i] = 1.0;
        x[2 * m + i] = 0.0;
    }
    auto rhs = [&](const State& y, State& dy, double) {
        for (int i = 0; i < m; ++i) {
            const double p = y[i];
            const double h = y[m + i];
            double qp = 0.0;
            double cross = 0.0;
            double qtheta = 0.0;
            double jump = 0.0;
            for (int j = 0; j < m; ++j) {
                qp += q(i, j) * y[j];
                qtheta += q(i, j) * y[2 * m + j];
                if (j != i) {
                    const double d = y[m + j] - h;
                    cross += q(i, j) * y[j] * d;
                    jump += q(i, j) * y[j] * d * d;
                }
            }
            // d/dtau = -(d/dt)
            dy[i] = -(p * (rho(i) - 2.0 * r(i)) - qp);
            dy[m + i] = -(r(i) * h - cross / p);
            dy[2 * m + i] = qtheta + jump;
        }
    };
    namespace odeint = boost::numeric::odeint;
    odeint::integrate_adaptive(odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(1e-13, 1e-13), rhs, x, 0.0,
                               tau, 1e-4);
    std::vector<Eigen::VectorXd> out(3, Eigen::VectorXd(m));
    for (int i = 0; i < m; ++i) {
        out[0](i) = x[i];
        out[1](i) = x[m + i];
        out[2](i) = x[2 * m + i];
    }
    return out;
}

/// Power iteration on the uniformized chain I + Q / Lambda.
inline Eigen::VectorXd stationary_by_power(const Eigen::MatrixXd& q) {
    const double lambda = 1.5 * q.diagonal().cwiseAbs().maxCoeff();
    const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(q.rows(), q.cols()) + q / lambda;
    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Constant(q.rows(), 1.0 / static_cast<double>(q.rows()));
    for (int it = 0; it < 200000; ++it) {
        mu = mu * p;
    }
    return mu.transpose() / mu.sum();
}

/// Absorption probabilities of the fast jump chain: a(j, k) for transient j.
inline Eigen::MatrixXd absorption_by_iteration(const TwoScaleGenerator& g) {
    const auto& tr = g.blocks.transient_states;
    const auto labels = g.blocks.labels();
    const int l = g.blocks.num_blocks();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<int>(tr.size()), l);
    for (int it = 0; it < 5000; ++it) {
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(a.rows(), l);
        for (std::size_t jj = 0; jj < tr.size(); ++jj) {
            const int s = tr[jj];
            const double out_rate = -g.q_tilde(s, s);
            for (int t = 0; t < g.num_states(); ++t) {
                if (t == s || g.q_tilde(s, t) <= 0.0) {
                    continue;
                }
                const double pj = g.q_tilde(s, t) / out_rate;
                if (labels[t] >= 0) {
                    next(static_cast<int>(jj), labels[t]) += pj;
                } else {
                    next.row(static_cast<int>(jj)) += pj * a.row(-labels[t] - 1);
                }
            }
        }
        a = next;
    }
    return a;
}

/// Random valid recurrent instance with r >= 0 (needed for H <= 1).
struct RandomInstance {
    TwoScaleGenerator gen;
    MarketModel model;
};

inline RandomInstance random_instance(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> nblocks(1, 3);
    std::uniform_int_distribution<int> bsize(1, 3);
    std::uniform_real_distribution<double> rate(0.1, 3.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    RandomInstance out;
    const int l = nblocks(rng);
    int m = 0;
    for (int k = 0; k < l; ++k) {
        const int n = bsize(rng);
        std::vector<int> block;
        for (int j = 0; j < n; ++j) {
            block.push_back(m++);
        }
        out.gen.blocks.recurrent_blocks.push_back(block);
    }
    out.gen.q_tilde = Eigen::MatrixXd::Zero(m, m);
    out.gen.q_hat = Eigen::MatrixXd::Zero(m, m);
    for (const auto& block : out.gen.blocks.recurrent_blocks) {
        // dense positive rates keep each block irreducible
        for (int i : block) {
            for (int j : block) {
                if (i != j) {
                    out.gen.q_tilde(i, j) = rate(rng);
                }
            }
        }
    }
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            if (i != j && unit(rng) < 0.5) {
                out.gen.q_hat(i, j) = 0.5 * rate(rng);
            }
        }
    }
    for (int i = 0; i < m; ++i) {
        out.gen.q_tilde(i, i) = -(out.gen.q_tilde.row(i).sum() - out.gen.q_tilde(i, i));
        out.gen.q_hat(i, i) = -(out.gen.q_hat.row(i).sum() - out.gen.q_hat(i, i));
    }
    out.gen.epsilon = std::vector<double>{0.5, 0.1, 0.05}[static_cast<std::size_t>(unit(rng) * 3.0) % 3];

    const double horizon = 0.5 + 1.5 * unit(rng);
    const int d1 = 1 + static_cast<int>(unit(rng) * 2.0) % 2;
    std::vector<double> breakpoints;
    int segments = 1 + static_cast<int>(unit(rng) * 3.0) % 3;
    for (int s = 1; s < segments; ++s) {
        breakpoints.push_back(horizon * s / segments);
    }
    std::vector<std::vector<RegimeCoefficients>> segs(segments);
    for (auto& seg : segs) {
        for (int i = 0; i < m; ++i) {
            RegimeCoefficients c;
            c.r = 0.3 * unit(rng);
            c.b = Eigen::RowVectorXd(d1);
            for (int k = 0; k < d1; ++k) {
                c.b(k) = unit(rng) - 0.3;
            }
            c.sigma = Eigen::MatrixXd::Identity(d1, d1) * (0.2 + 0.3 * unit(rng));
            c.sigma(0, d1 - 1) += 0.05 * unit(rng);
            seg.push_back(c);
        }
    }
    out.model = MarketModel(horizon, breakpoints, segs, 1e-8);
    return out;
}

}  // namespace testing_support
