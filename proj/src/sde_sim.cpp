#include "twoscale/sde_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "twoscale/csv.hpp"
#include "twoscale/rng.hpp"

namespace twoscale {

int resolve_threads(int requested) {
    if (requested > 0) {
        return requested;
    }
    if (const char* env = std::getenv("TWOSCALE_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) {
            return n;
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) {
            s += x;
        }
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

MonteCarloReport summarize(std::span<const double> xs, double lambda, double z, std::uint64_t seed) {
    const std::size_t n = xs.size();
    require(n >= 2, ErrorCode::invalid_argument, "need at least two paths");
    const double dn = static_cast<double>(n);
    MonteCarloReport rep;
    rep.path_count = n;
    rep.seed = seed;
    rep.lambda = lambda;
    rep.z = z;

    // Shifted by the first sample so identical samples give exactly zero spread.
    const double shift = xs[0];
    std::vector<double> work(n);
    for (std::size_t i = 0; i < n; ++i) {
        work[i] = xs[i] - shift;
    }
    const double mean_dev = pairwise_sum(work) / dn;
    rep.mean_xT = shift + mean_dev;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = xs[i] - shift - mean_dev;
        work[i] = d * d;
    }
    const double ss = pairwise_sum(work);
    rep.var_xT = ss / (dn - 1.0);
    rep.se_mean = std::sqrt(rep.var_xT / dn);
    {
        const double m2 = ss / dn;
        for (auto& w : work) {
            w = (w - m2) * (w - m2);
        }
        rep.se_var = std::sqrt(pairwise_sum(work) / (dn - 1.0) / dn);
    }
    const double c = lambda - z;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = xs[i] + c;
        work[i] = y * y;
    }
    rep.terminal_cost = pairwise_sum(work) / dn;
    for (auto& w : work) {
        w = (w - rep.terminal_cost) * (w - rep.terminal_cost);
    }
    rep.se_cost = std::sqrt(pairwise_sum(work) / (dn - 1.0) / dn);
    rep.j_estimate = rep.terminal_cost - lambda * lambda;
    rep.se_j = rep.se_cost;
    return rep;
}

namespace {

/// Per (segment, regime) quantities of a control acting on the model:
/// B u = bg * y + bu0 and sigma' u = sg * y + su0 with y = x + offset.
struct ControlAction {
    int regimes = 0;
    int noises = 0;
    bool feedback = false;
    std::vector<double> r;    // [seg * regimes + i]
    std::vector<double> bg;   // [seg * regimes + i]
    std::vector<double> bu0;  // [seg * regimes + i]
    std::vector<double> sg;   // [(seg * regimes + i) * noises + k]
    std::vector<double> su0;  // same layout as sg

    ControlAction(const MarketModel& model, const FeedbackControl& control) {
        require(control.num_regimes() == model.num_regimes() && control.controls() == model.controls(),
                ErrorCode::instance_mismatch, "control and model have different regime or control dimensions");
        regimes = model.num_regimes();
        noises = model.noises();
        feedback = static_cast<bool>(control.gains());
        for (int s = 0; s < model.num_segments(); ++s) {
            for (int i = 0; i < regimes; ++i) {
                const auto& c = model.coefficients(s, i);
                r.push_back(c.r);
                Eigen::VectorXd g = Eigen::VectorXd::Zero(model.controls());
                if (feedback) {
                    g = control.gains()->gain(s, i);
                }
                Eigen::VectorXd u0 = Eigen::VectorXd::Zero(model.controls());
                if (!control.open_loop().empty()) {
                    u0 = control.open_loop()[i];
                }
                bg.push_back(c.b.dot(g));
                bu0.push_back(c.b.dot(u0));
                const Eigen::VectorXd sgv = c.sigma.transpose() * g;
                const Eigen::VectorXd su0v = c.sigma.transpose() * u0;
                for (int k = 0; k < noises; ++k) {
                    sg.push_back(sgv(k));
                    su0.push_back(su0v(k));
                }
            }
        }
    }

    [[nodiscard]] std::size_t at(int seg, int i) const { return static_cast<std::size_t>(seg) * regimes + i; }
};

void check_common(const MarketModel& model, const SimConfig& cfg) {
    require(cfg.path_count >= 2, ErrorCode::invalid_argument, "path_count must be at least 2");
    require(cfg.step > 0.0, ErrorCode::invalid_argument, "simulation step must be positive");
    require(std::abs(cfg.horizon - model.horizon()) <= 1e-12 * std::max(1.0, model.horizon()),
            ErrorCode::instance_mismatch, "simulation horizon differs from the market model horizon");
}

/// Runs `path_fn(index)` for every path on the worker pool. The path with the
/// smallest index that failed determines the rethrown error.
template <class PathFn>
std::vector<double> run_paths(std::size_t count, int threads, PathFn&& path_fn) {
    std::vector<double> out(count, 0.0);
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(count)));
    std::atomic<std::size_t> next{0};
    std::mutex failure_mutex;
    std::size_t failed_index = std::numeric_limits<std::size_t>::max();
    std::exception_ptr failure;
    constexpr std::size_t chunk = 256;

    auto worker = [&] {
        for (;;) {
            const std::size_t begin = next.fetch_add(chunk);
            if (begin >= count) {
                return;
            }
            const std::size_t end = std::min(count, begin + chunk);
            for (std::size_t p = begin; p < end; ++p) {
                try {
                    out[p] = path_fn(p);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (p < failed_index) {
                        failed_index = p;
                        failure = std::current_exception();
                    }
                    return;
                }
            }
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return out;
}

/// Walks [0, T] over cells split at grid points, chain jumps and knots,
/// calling step(t, dt, segment, state, x) -> new x.
template <class StepFn>
double integrate_path(const ChainPath& chain, const MarketModel& model, double step, StepFn&& step_fn, double x,
                      std::size_t path_index, std::uint64_t master_seed) {
    const double horizon = model.horizon();
    const auto cells = static_cast<long>(std::max(1.0, std::ceil(horizon / step - 1e-9)));
    const auto& knots = model.knots();
    std::size_t knot = 1;
    while (knot < knots.size() && knots[knot] <= 0.0) {
        ++knot;
    }
    std::size_t jump = 1;
    long cell = 1;
    double t = 0.0;
    int state = chain.states.front();
    constexpr double inf = std::numeric_limits<double>::infinity();
    while (t < horizon) {
        const double t_grid = cell >= cells ? horizon : horizon * static_cast<double>(cell) / static_cast<double>(cells);
        const double t_jump = jump < chain.jump_times.size() ? chain.jump_times[jump] : inf;
        const double t_knot = knot < knots.size() ? knots[knot] : inf;
        const double t_next = std::min({t_grid, t_jump, t_knot});
        const double dt = t_next - t;
        if (dt > 0.0) {
            x = step_fn(t, dt, model.segment_at(t), state, x);
            if (!std::isfinite(x)) {
                std::ostringstream os;
                os << "path " << path_index << " (master seed " << master_seed << ") diverged at t = " << t;
                throw Error(ErrorCode::path_divergence, os.str());
            }
        }
        t = t_next;
        if (t_next == t_grid) {
            ++cell;
        }
        while (jump < chain.jump_times.size() && chain.jump_times[jump] <= t) {
            state = chain.states[jump];
            ++jump;
        }
        while (knot < knots.size() && knots[knot] <= t) {
            ++knot;
        }
    }
    return x;
}

}  // namespace

std::vector<double> simulate_full_terminal(const TwoScaleGenerator& gen, const MarketModel& model,
                                           const FeedbackControl& control, const SimConfig& cfg) {
    require_valid(gen);
    check_common(model, cfg);
    require(model.num_regimes() == gen.num_states(), ErrorCode::instance_mismatch,
            "market model and chain disagree on the number of regimes");
    require(cfg.initial_regime >= 0 && cfg.initial_regime < gen.num_states(), ErrorCode::invalid_argument,
            "initial regime out of range");
    const double max_step = std::min(gen.epsilon / 10.0, cfg.horizon / 100.0);
    if (cfg.step > max_step * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "simulation step " << cfg.step << " exceeds min(eps/10, T/100) = " << max_step;
        throw Error(ErrorCode::invalid_argument, os.str());
    }

    const Eigen::MatrixXd q = gen.q_eps();
    const ControlAction act(model, control);
    const int d = act.noises;

    auto path_fn = [&](std::size_t p) {
        Engine chain_rng(derive_seed(cfg.master_seed, p, Stream::chain));
        const ChainPath chain = sample_path_with(q, cfg.initial_regime, cfg.horizon, chain_rng);
        Engine noise_rng(derive_seed(cfg.master_seed, p, Stream::brownian));
        std::normal_distribution<double> normal(0.0, 1.0);

        auto step = [&](double t, double dt, int seg, int i, double x) {
            const std::size_t a = act.at(seg, i);
            const double y = act.feedback ? x + control.offset(t, i) : x;
            double next = x + (act.r[a] * x + act.bg[a] * y + act.bu0[a]) * dt;
            const double sq = std::sqrt(dt);
            for (int k = 0; k < d; ++k) {
                const std::size_t ak = a * d + k;
                next += (act.sg[ak] * y + act.su0[ak]) * sq * normal(noise_rng);
            }
            return next;
        };
        return integrate_path(chain, model, cfg.step, step, cfg.x0, p, cfg.master_seed);
    };
    return run_paths(cfg.path_count, resolve_threads(cfg.threads), path_fn);
}

MonteCarloReport simulate_full(const TwoScaleGenerator& gen, const MarketModel& model, const FeedbackControl& control,
                               const SimConfig& cfg) {
    const auto xs = simulate_full_terminal(gen, model, control, cfg);
    return summarize(xs, control.lambda(), control.z(), cfg.master_seed);
}

void write_terminal_csv(std::ostream& out, std::span<const double> xs) {
    out << "path_index,x_T\n";
    for (std::size_t p = 0; p < xs.size(); ++p) {
        out << p << ',' << format_double(xs[p]) << '\n';
    }
}

LimitDynamics LimitDynamics::recurrent(const TwoScaleGenerator& gen) {
    require_valid(gen);
    return {aggregate_recurrent(gen), gen.blocks, block_stationary_distributions(gen)};
}

LimitDynamics LimitDynamics::transient(const TwoScaleGenerator& gen) {
    require_valid(gen);
    return {aggregate_transient(gen).q_bar, gen.blocks, block_stationary_distributions(gen)};
}

std::vector<double> simulate_limit_terminal(const LimitDynamics& dyn, const MarketModel& model,
                                            const FeedbackControl& control, const SimConfig& cfg) {
    check_common(model, cfg);
    const int l = dyn.blocks.num_blocks();
    require(dyn.q_bar.rows() == l && static_cast<int>(dyn.mus.size()) == l, ErrorCode::instance_mismatch,
            "limit dynamics are inconsistent with the block structure");
    require(dyn.blocks.num_states() == model.num_regimes(), ErrorCode::instance_mismatch,
            "block structure and market model disagree on the number of regimes");
    require(cfg.initial_regime >= 0 && cfg.initial_regime < l, ErrorCode::invalid_argument,
            "initial aggregated state out of range");
    require(cfg.step <= cfg.horizon / 100.0 * (1.0 + 1e-12), ErrorCode::invalid_argument,
            "simulation step exceeds T/100");

    const ControlAction act(model, control);
    const int d = act.noises;
    std::vector<double> rbar(static_cast<std::size_t>(model.num_segments()) * l, 0.0);
    for (int s = 0; s < model.num_segments(); ++s) {
        for (int k = 0; k < l; ++k) {
            const auto& block = dyn.blocks.recurrent_blocks[k];
            for (std::size_t j = 0; j < block.size(); ++j) {
                rbar[static_cast<std::size_t>(s) * l + k] += dyn.mus[k](j) * model.coefficients(s, block[j]).r;
            }
        }
    }

    auto path_fn = [&](std::size_t p) {
        Engine chain_rng(derive_seed(cfg.master_seed, p, Stream::chain));
        const ChainPath chain = sample_path_with(dyn.q_bar, cfg.initial_regime, cfg.horizon, chain_rng);
        Engine noise_rng(derive_seed(cfg.master_seed, p, Stream::brownian));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> g2(d);

        auto step = [&](double t, double dt, int seg, int k, double x) {
            const auto& block = dyn.blocks.recurrent_blocks[k];
            double drift = rbar[static_cast<std::size_t>(seg) * l + k] * x;
            std::fill(g2.begin(), g2.end(), 0.0);
            for (std::size_t j = 0; j < block.size(); ++j) {
                const int s = block[j];
                const double mu = dyn.mus[k](j);
                const std::size_t a = act.at(seg, s);
                const double y = act.feedback ? x + control.offset(t, s) : x;
                drift += mu * (act.bg[a] * y + act.bu0[a]);
                for (int i = 0; i < d; ++i) {
                    const std::size_t ai = a * d + i;
                    const double v = act.sg[ai] * y + act.su0[ai];
                    g2[i] += mu * v * v;
                }
            }
            double next = x + drift * dt;
            const double sq = std::sqrt(dt);
            for (int i = 0; i < d; ++i) {
                next += std::sqrt(g2[i]) * sq * normal(noise_rng);
            }
            return next;
        };
        return integrate_path(chain, model, cfg.step, step, cfg.x0, p, cfg.master_seed);
    };
    return run_paths(cfg.path_count, resolve_threads(cfg.threads), path_fn);
}

MonteCarloReport simulate_limit(const LimitDynamics& dyn, const MarketModel& model, const FeedbackControl& control,
                                const SimConfig& cfg) {
    const auto xs = simulate_limit_terminal(dyn, model, control, cfg);
    return summarize(xs, control.lambda(), control.z(), cfg.master_seed);
}

std::vector<CostGapRow> estimate_cost_gap(const TwoScaleGenerator& gen, const MarketModel& model, double lambda,
                                          double z, const SimConfig& cfg, const std::vector<double>& eps_list,
                                          double riccati_step, GapControl which) {
    std::vector<CostGapRow> rows;
    const bool transient = gen.blocks.num_transient() > 0;
    for (double eps : eps_list) {
        require(eps > 0.0, ErrorCode::invalid_argument, "epsilon must be positive");
        const TwoScaleGenerator g = gen.with_epsilon(eps);
        const double h = recommended_step(g, riccati_step);
        auto full = std::make_shared<const RiccatiSolution>(solve_full(g, model, h));
        auto limit = std::make_shared<const RiccatiSolution>(transient ? solve_transient_limit(g, model, h)
                                                                       : solve_limit(g, model, h));
        CostGapRow row;
        row.epsilon = eps;
        row.sup_gap = limit_gap(*full, *limit);

        SimConfig c = cfg;
        c.step = std::min({cfg.step, eps / 10.0, cfg.horizon / 100.0});
        const FeedbackControl u = which == GapControl::constructed
                                      ? constructed_control(limit, model, lambda, z, g.blocks)
                                      : open_loop_control(model);
        const auto xs = simulate_full_terminal(g, model, u, c);
        const MonteCarloReport rep = summarize(xs, lambda, z, c.master_seed);
        row.j_mc = rep.j_estimate;
        row.se = rep.se_j;
        row.analytic = optimal_lagrangian_cost(*full, cfg.initial_regime, cfg.x0, lambda, z);
        row.delta = std::abs(row.j_mc - row.analytic);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace twoscale
