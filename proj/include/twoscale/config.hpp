#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "twoscale/chain_algebra.hpp"
#include "twoscale/market_model.hpp"
#include "twoscale/sde_sim.hpp"

namespace twoscale {

struct Thresholds {
    /// sup-gap at the smallest eps over sup-gap at the largest eps
    double gap_decay = 0.1;
    /// Delta at the smallest eps over Delta at the largest eps (before the SE band)
    double delta_decay = 0.2;
    /// Monte Carlo acceptance band in standard errors
    double se_band = 3.0;
};

/// One experiment instance. Indices are 0-based throughout.
///
/// JSON layout (matrices are row-major nested arrays):
///   chain:      q_tilde, q_hat, blocks, transient_states (optional), epsilon (optional)
///   market:     delta, and either regimes [{r, b, sigma}] or breakpoints + segments [[{r, b, sigma}]]
///   problem:    T, x0, initial_regime, z (optional), z_grid (optional), lambda (optional)
///   sim:        paths, step, seed (all optional)
///   sweep:      eps list
///   solver:     step (optional)
///   thresholds: gap_decay, delta_decay, se_band (all optional)
/// b may be a number when d1 = 1 and sigma a number when d1 = d = 1.
struct InstanceConfig {
    TwoScaleGenerator chain;
    MarketModel market;
    double x0 = 1.0;
    int initial_regime = 0;
    std::optional<double> z;
    std::vector<double> z_grid;
    std::optional<double> lambda;
    SimConfig sim;
    std::vector<double> sweep;
    double solver_step = 1e-3;
    Thresholds thresholds;
    std::string hash;  // SHA-256 of the source bytes, lowercase hex
};

std::string sha256_hex(std::string_view bytes);

/// Throws Error(config_error) with line or field context on malformed input.
InstanceConfig parse_config(std::string_view text);
InstanceConfig load_config(const std::string& path);
std::string read_file(const std::string& path);

/// Structural violations of the chain, the market model, their coupling and
/// the experiment parameters. Empty when the instance is usable.
std::vector<std::string> config_violations(const InstanceConfig& cfg);

/// Throws Error(invalid_argument) listing config_violations when nonempty.
void require_valid_config(const InstanceConfig& cfg);

}  // namespace twoscale
