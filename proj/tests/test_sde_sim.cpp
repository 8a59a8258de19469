#include <cmath>
#include <memory>
#include <sstream>

#include "doctest.h"
#include "support.hpp"

#include "twoscale/rng.hpp"
#include "twoscale/sde_sim.hpp"

using namespace twoscale;
using testing_support::mat;
using testing_support::scalar_regime;

namespace {

TwoScaleGenerator single_state(double eps = 0.1) {
    TwoScaleGenerator g;
    g.q_tilde = mat({{0}});
    g.q_hat = mat({{0}});
    g.blocks = BlockStructure::single_block(1);
    g.epsilon = eps;
    return g;
}

SimConfig config(std::size_t paths, double step, std::uint64_t seed) {
    SimConfig c;
    c.path_count = paths;
    c.step = step;
    c.master_seed = seed;
    c.x0 = 1.0;
    c.initial_regime = 0;
    c.horizon = 1.0;
    c.threads = 1;
    return c;
}

}  // namespace

TEST_CASE("seed derivation and summation helpers") {
    CHECK(derive_seed(1, 0, Stream::chain) != derive_seed(1, 0, Stream::brownian));
    CHECK(derive_seed(1, 0, Stream::chain) != derive_seed(1, 1, Stream::chain));
    CHECK(derive_seed(1, 0, Stream::chain) != derive_seed(2, 0, Stream::chain));
    CHECK(derive_seed(9, 4, Stream::aggregation) == derive_seed(9, 4, Stream::aggregation));

    std::vector<double> v(1000);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = 0.1 * static_cast<double>(i);
    }
    CHECK(pairwise_sum(v) == doctest::Approx(0.1 * 999 * 1000 / 2).epsilon(1e-14));
    CHECK(pairwise_sum(std::span<const double>()) == 0.0);

    const std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
    const auto rep = summarize(xs, 0.5, 2.0, 3);
    CHECK(rep.mean_xT == 2.5);
    CHECK(rep.var_xT == doctest::Approx(5.0 / 3.0));
    CHECK(rep.se_mean == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
    // (x - 1.5)^2 = 0.25, 0.25, 2.25, 6.25
    CHECK(rep.terminal_cost == doctest::Approx(2.25));
    CHECK(rep.j_estimate == doctest::Approx(2.0));
}

TEST_CASE("zero control gives deterministic growth") {
    const auto g = single_state();
    const double r = 0.07;
    const MarketModel model(1.0, {scalar_regime(r, 0.4, 0.3)}, 1e-6);
    const auto u = open_loop_control(model);
    const double h = 1e-3;
    const auto xs = simulate_full_terminal(g, model, u, config(200, h, 4));
    for (double x : xs) {
        CHECK(x == xs.front());
    }
    const auto rep = summarize(xs, 0.0, 0.0, 4);
    CHECK(rep.var_xT == 0.0);
    CHECK(rep.mean_xT == doctest::Approx(std::pow(1.0 + r * h, 1000)).epsilon(1e-12));
    CHECK(std::abs(rep.mean_xT - std::exp(r)) <= r * r * h * std::exp(r));

    // Regime-independent r under a switching chain: the same.
    const auto ga = testing_support::instance_a(0.1);
    const MarketModel flat(1.0, std::vector<RegimeCoefficients>(4, scalar_regime(r, 0.2, 0.3)), 1e-6);
    const auto xa = simulate_full_terminal(ga, flat, open_loop_control(flat), config(200, h, 5));
    for (double x : xa) {
        CHECK(std::abs(x - std::exp(r)) <= r * r * h * std::exp(r));
    }
}

TEST_CASE("doubling sigma quadruples the diffusion variance") {
    const auto g = single_state();
    const MarketModel model(1.0, {scalar_regime(0.05, 0.2, 0.3)}, 1e-6);
    std::vector<Eigen::VectorXd> u0 = {Eigen::VectorXd::Constant(1, 0.8)};
    const auto base = simulate_full(g, model, open_loop_control(model, u0), config(5000, 1e-3, 8));
    const auto scaled_model = model.with_sigma_scaled(2.0);
    const auto scaled = simulate_full(g, scaled_model, open_loop_control(scaled_model, u0), config(5000, 1e-3, 8));
    CHECK(scaled.var_xT == doctest::Approx(4.0 * base.var_xT).epsilon(1e-10));
    CHECK(scaled.mean_xT != base.mean_xT);  // same noise, larger amplitude
}

TEST_CASE("results do not depend on the worker count") {
    const auto g = testing_support::instance_a(0.1);
    const auto model = testing_support::instance_a_market();
    const auto sol = std::make_shared<const RiccatiSolution>(solve_full(g, model, 1e-3));
    const auto u = exact_optimal_control(sol, model, 0.1, 1.2);
    auto cfg = config(3000, 1e-3, 99);
    const auto one = simulate_full_terminal(g, model, u, cfg);
    cfg.threads = 3;
    const auto three = simulate_full_terminal(g, model, u, cfg);
    cfg.threads = 8;
    const auto eight = simulate_full_terminal(g, model, u, cfg);
    CHECK(one == three);
    CHECK(one == eight);
    const auto r1 = summarize(one, 0.1, 1.2, 99);
    const auto r3 = summarize(three, 0.1, 1.2, 99);
    CHECK(r1.j_estimate == r3.j_estimate);
    CHECK(r1.se_j == r3.se_j);

    std::ostringstream csv;
    write_terminal_csv(csv, std::span<const double>(one).first(2));
    CHECK(csv.str().rfind("path_index,x_T\n0,", 0) == 0);
}

TEST_CASE("standard error scales like one over root N") {
    const auto g = testing_support::instance_a(0.5);
    const auto model = testing_support::instance_a_market();
    std::vector<Eigen::VectorXd> u0(4, Eigen::VectorXd::Constant(1, 1.0));
    const auto u = open_loop_control(model, u0);
    const auto small = simulate_full(g, model, u, config(2000, 1e-2, 12));
    const auto large = simulate_full(g, model, u, config(8000, 1e-2, 13));
    const double ratio = small.se_mean / large.se_mean;
    CHECK(ratio >= 2.0 * 0.8);
    CHECK(ratio <= 2.0 * 1.2);
}

TEST_CASE("Euler weak error halves with the step") {
    // Constant control in one regime: E x(T) = e^{rT} x0 + B u (e^{rT} - 1) / r.
    const auto g = single_state(1.0);
    const double r = 2.0;
    const double b = 0.3;
    const double u = 0.5;
    const MarketModel model(1.0, {scalar_regime(r, b, 0.2)}, 1e-6);
    const auto ctl = open_loop_control(model, {Eigen::VectorXd::Constant(1, u)});
    const double exact = std::exp(r) + b * u * (std::exp(r) - 1) / r;
    std::vector<double> bias;
    std::vector<double> se;
    for (double h : {0.01, 0.005, 0.0025}) {
        const auto rep = simulate_full(g, model, ctl, config(4000, h, 21));
        bias.push_back(exact - rep.mean_xT);
        se.push_back(rep.se_mean);
    }
    for (std::size_t k = 1; k < bias.size(); ++k) {
        const double band = 3.0 * (se[k] + se[k - 1]) / bias[k];
        CHECK(bias[k - 1] / bias[k] == doctest::Approx(2.0).epsilon(0.05 + band));
    }
}

TEST_CASE("simulation preconditions and divergence") {
    const auto g = testing_support::instance_a(0.05);
    const auto model = testing_support::instance_a_market();
    const auto u = open_loop_control(model);
    CHECK_THROWS_AS(simulate_full(g, model, u, config(10, 0.01, 1)), Error);  // step > eps/10
    auto wrong_horizon = config(10, 1e-3, 1);
    wrong_horizon.horizon = 2.0;
    CHECK_THROWS_AS(simulate_full(g, model, u, wrong_horizon), Error);
    CHECK_THROWS_AS(simulate_full(g, testing_support::transient_market(), u, config(10, 1e-3, 1)), Error);

    const auto g1 = single_state();
    const MarketModel blow(1.0, {scalar_regime(1e6, 0.1, 0.2)}, 1e-6);
    CHECK_THROWS_WITH_AS(simulate_full(g1, blow, open_loop_control(blow), config(4, 1e-3, 77)),
                         doctest::Contains("path 0 (master seed 77)"), Error);
}

TEST_CASE("exact optimal control reproduces the cost identity and the target mean") {
    const auto g = testing_support::instance_a(0.1);
    const auto model = testing_support::instance_a_market();
    const auto sol = std::make_shared<const RiccatiSolution>(solve_full(g, model, 1e-3));
    const double z = 1.15;
    const double lambda = solve_lagrange_multiplier(*sol, 1.0, z, 0);
    const auto u = exact_optimal_control(sol, model, lambda, z);
    const auto rep = simulate_full(g, model, u, config(20000, 1e-3, 2024));
    const auto v = sol->evaluate(0.0, 0);
    const double c = lambda - z;
    const double predicted = v.p * (1.0 + c * v.h) * (1.0 + c * v.h) + c * c * v.theta;
    CHECK(std::abs(rep.terminal_cost - predicted) <= 3.0 * rep.se_cost);
    CHECK(std::abs(rep.mean_xT - z) <= 3.0 * rep.se_mean);
    CHECK(std::abs(rep.j_estimate - optimal_lagrangian_cost(*sol, 0, 1.0, lambda, z)) <= 3.0 * rep.se_j);
}

TEST_CASE("limit dynamics") {
    // One block with one state: the limit SDE is the original SDE.
    const auto g1 = single_state();
    const MarketModel m1(1.0, {scalar_regime(0.05, 0.3, 0.25)}, 1e-6);
    const auto full1 = std::make_shared<const RiccatiSolution>(solve_full(g1, m1, 1e-3));
    const auto u1 = exact_optimal_control(full1, m1, 0.2, 1.1);
    const auto a = simulate_full(g1, m1, u1, config(20000, 1e-3, 3));
    const auto b = simulate_limit(LimitDynamics::recurrent(g1), m1, u1, config(20000, 1e-3, 4));
    CHECK(std::abs(a.mean_xT - b.mean_xT) <= 3.0 * std::hypot(a.se_mean, b.se_mean));
    CHECK(std::abs(a.var_xT - b.var_xT) <= 3.0 * std::hypot(a.se_var, b.se_var));

    // U = 0: growth at the block-average rate along the aggregated chain.
    const auto g = testing_support::instance_a(0.1);
    const auto model = testing_support::instance_a_market();
    const auto dyn = LimitDynamics::recurrent(g);
    const auto cfg = config(50, 1e-3, 6);
    const auto xs = simulate_limit_terminal(dyn, model, open_loop_control(model), cfg);
    const double rbar[] = {0.03, 0.05};
    for (std::size_t p = 0; p < xs.size(); ++p) {
        const auto path = sample_path(dyn.q_bar, 0, 1.0, derive_seed(6, p, Stream::chain));
        const double growth = std::exp(rbar[0] * path.occupation(0) + rbar[1] * path.occupation(1));
        CHECK(std::abs(xs[p] - growth) <= 1e-5);
    }

    // Optimal limit control: mean hits z.
    const auto lim = std::make_shared<RiccatiSolution>(solve_limit(g, model, 1e-3));
    const double z = 1.2;
    const double lambda = solve_lagrange_multiplier(*lim, 1.0, z, 0);
    const auto uc = constructed_control(lim, model, lambda, z, g.blocks);
    const auto rep = simulate_limit(dyn, model, uc, config(20000, 1e-3, 8));
    CHECK(std::abs(rep.mean_xT - z) <= 3.0 * rep.se_mean);
}

TEST_CASE("zero control does not become near-optimal") {
    const auto g = testing_support::instance_a(0.1);
    const auto model = testing_support::instance_a_market();
    auto cfg = config(2000, 1e-3, 15);
    const auto rows = estimate_cost_gap(g, model, 0.0, 1.2, cfg, {0.5, 0.02}, 1e-3, GapControl::zero);
    for (const auto& row : rows) {
        CHECK(row.delta > 10.0 * row.se);
    }
}

TEST_CASE("occupation functional vanishes with eps") {
    // E[ int_0^t (1{alpha = s_kj} - mu^k_j 1{alphabar = k}) r ds ]^2 with r = 1.
    const double t = 1.0;
    auto estimate = [&](double eps) {
        const auto g = testing_support::instance_a(eps);
        const auto mus = block_stationary_distributions(g);
        const Eigen::MatrixXd q = g.q_eps();
        const int n = 4000;
        std::vector<double> v(n);
        for (int p = 0; p < n; ++p) {
            const auto path = sample_path(q, 0, t, derive_seed(17, p, Stream::chain));
            const auto agg = aggregate_path(path, g.blocks, std::nullopt, 0);
            const double val = path.occupation(0) - mus[0](0) * agg.occupation(0);
            v[p] = val * val;
        }
        return summarize(v, 0, 0, 0);
    };
    const auto big = estimate(0.5);
    const auto small = estimate(0.02);
    CHECK(big.mean_xT - small.mean_xT >= 3.0 * std::hypot(big.se_mean, small.se_mean));
}
