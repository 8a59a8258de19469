#include "twoscale/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"

namespace twoscale {

using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    require(EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) == 1,
            ErrorCode::config_error, "SHA-256 computation failed");
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) {
        os << std::setw(2) << static_cast<int>(digest[i]);
    }
    return os.str();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::config_error, "cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
    throw Error(ErrorCode::config_error, field + ": " + what);
}

const json& member(const json& obj, const std::string& key, const std::string& field) {
    if (!obj.is_object()) {
        fail(field, "expected an object");
    }
    const auto it = obj.find(key);
    if (it == obj.end()) {
        fail(field + "." + key, "missing");
    }
    return *it;
}

const json* optional_member(const json& obj, const std::string& key, const std::string& field) {
    if (!obj.is_object()) {
        fail(field, "expected an object");
    }
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double number(const json& v, const std::string& field) {
    if (!v.is_number()) {
        fail(field, "expected a number");
    }
    return v.get<double>();
}

std::int64_t integer(const json& v, const std::string& field) {
    if (!v.is_number_integer()) {
        fail(field, "expected an integer");
    }
    return v.get<std::int64_t>();
}

std::vector<double> number_list(const json& v, const std::string& field) {
    if (!v.is_array()) {
        fail(field, "expected an array of numbers");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(number(v[i], field + "[" + std::to_string(i) + "]"));
    }
    return out;
}

std::vector<int> index_list(const json& v, const std::string& field) {
    if (!v.is_array()) {
        fail(field, "expected an array of indices");
    }
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(static_cast<int>(integer(v[i], field + "[" + std::to_string(i) + "]")));
    }
    return out;
}

Eigen::MatrixXd matrix(const json& v, const std::string& field) {
    if (!v.is_array() || v.empty()) {
        fail(field, "expected a nonempty array of rows");
    }
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < v.size(); ++i) {
        rows.push_back(number_list(v[i], field + "[" + std::to_string(i) + "]"));
        if (rows.back().size() != rows.front().size() || rows.back().empty()) {
            fail(field + "[" + std::to_string(i) + "]", "rows must be nonempty and of equal length");
        }
    }
    Eigen::MatrixXd m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

RegimeCoefficients regime(const json& v, const std::string& field) {
    RegimeCoefficients c;
    c.r = number(member(v, "r", field), field + ".r");
    const json& b = member(v, "b", field);
    if (b.is_number()) {
        c.b = Eigen::RowVectorXd::Constant(1, b.get<double>());
    } else {
        const auto bs = number_list(b, field + ".b");
        c.b = Eigen::Map<const Eigen::RowVectorXd>(bs.data(), static_cast<Eigen::Index>(bs.size()));
    }
    const json& s = member(v, "sigma", field);
    c.sigma = s.is_number() ? Eigen::MatrixXd::Constant(1, 1, s.get<double>()) : matrix(s, field + ".sigma");
    return c;
}

std::vector<RegimeCoefficients> regime_list(const json& v, const std::string& field) {
    if (!v.is_array() || v.empty()) {
        fail(field, "expected a nonempty array of regimes");
    }
    std::vector<RegimeCoefficients> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(regime(v[i], field + "[" + std::to_string(i) + "]"));
    }
    return out;
}

/// 1-based line and column of a byte offset.
std::string position(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < offset; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

InstanceConfig parse_config(std::string_view text) {
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        // e.byte is one past the offending character.
        const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
        throw Error(ErrorCode::config_error, "malformed JSON at " + position(text, at));
    }

    InstanceConfig cfg;
    cfg.hash = sha256_hex(text);

    const json& chain = member(root, "chain", "config");
    cfg.chain.q_tilde = matrix(member(chain, "q_tilde", "chain"), "chain.q_tilde");
    cfg.chain.q_hat = matrix(member(chain, "q_hat", "chain"), "chain.q_hat");
    const json& blocks = member(chain, "blocks", "chain");
    if (!blocks.is_array()) {
        fail("chain.blocks", "expected an array of index arrays");
    }
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        cfg.chain.blocks.recurrent_blocks.push_back(index_list(blocks[k], "chain.blocks[" + std::to_string(k) + "]"));
    }
    if (const json* t = optional_member(chain, "transient_states", "chain")) {
        cfg.chain.blocks.transient_states = index_list(*t, "chain.transient_states");
    }

    const json& problem = member(root, "problem", "config");
    const double horizon = number(member(problem, "T", "problem"), "problem.T");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        fail("problem.T", "must be positive and finite");
    }
    cfg.x0 = number(member(problem, "x0", "problem"), "problem.x0");
    cfg.initial_regime = static_cast<int>(integer(member(problem, "initial_regime", "problem"), "problem.initial_regime"));
    if (const json* z = optional_member(problem, "z", "problem")) {
        cfg.z = number(*z, "problem.z");
    }
    if (const json* zg = optional_member(problem, "z_grid", "problem")) {
        cfg.z_grid = number_list(*zg, "problem.z_grid");
    }
    if (const json* lam = optional_member(problem, "lambda", "problem")) {
        cfg.lambda = number(*lam, "problem.lambda");
    }

    const json& market = member(root, "market", "config");
    const double delta = number(member(market, "delta", "market"), "market.delta");
    if (const json* segs = optional_member(market, "segments", "market")) {
        if (!segs->is_array() || segs->empty()) {
            fail("market.segments", "expected a nonempty array of regime arrays");
        }
        std::vector<std::vector<RegimeCoefficients>> segments;
        for (std::size_t s = 0; s < segs->size(); ++s) {
            segments.push_back(regime_list((*segs)[s], "market.segments[" + std::to_string(s) + "]"));
        }
        std::vector<double> breakpoints;
        if (const json* bp = optional_member(market, "breakpoints", "market")) {
            breakpoints = number_list(*bp, "market.breakpoints");
        }
        try {
            cfg.market = MarketModel(horizon, breakpoints, segments, delta);
        } catch (const Error& e) {
            fail("market", e.what());
        }
    } else {
        auto regimes = regime_list(member(market, "regimes", "market"), "market.regimes");
        try {
            cfg.market = MarketModel(horizon, std::move(regimes), delta);
        } catch (const Error& e) {
            fail("market", e.what());
        }
    }

    if (const json* sweep = optional_member(root, "sweep", "config")) {
        cfg.sweep = sweep->is_object() ? number_list(member(*sweep, "eps", "sweep"), "sweep.eps")
                                       : number_list(*sweep, "sweep");
    }
    if (const json* eps = optional_member(chain, "epsilon", "chain")) {
        cfg.chain.epsilon = number(*eps, "chain.epsilon");
    } else if (!cfg.sweep.empty()) {
        cfg.chain.epsilon = cfg.sweep.back();
    }

    cfg.sim.horizon = horizon;
    cfg.sim.x0 = cfg.x0;
    cfg.sim.initial_regime = cfg.initial_regime;
    if (const json* sim = optional_member(root, "sim", "config")) {
        if (const json* p = optional_member(*sim, "paths", "sim")) {
            const auto n = integer(*p, "sim.paths");
            if (n < 0) {
                fail("sim.paths", "must be nonnegative");
            }
            cfg.sim.path_count = static_cast<std::size_t>(n);
        }
        if (const json* h = optional_member(*sim, "step", "sim")) {
            cfg.sim.step = number(*h, "sim.step");
        }
        if (const json* s = optional_member(*sim, "seed", "sim")) {
            cfg.sim.master_seed = static_cast<std::uint64_t>(integer(*s, "sim.seed"));
        }
    }
    if (const json* solver = optional_member(root, "solver", "config")) {
        if (const json* h = optional_member(*solver, "step", "solver")) {
            cfg.solver_step = number(*h, "solver.step");
        }
    }
    if (const json* th = optional_member(root, "thresholds", "config")) {
        if (const json* v = optional_member(*th, "gap_decay", "thresholds")) {
            cfg.thresholds.gap_decay = number(*v, "thresholds.gap_decay");
        }
        if (const json* v = optional_member(*th, "delta_decay", "thresholds")) {
            cfg.thresholds.delta_decay = number(*v, "thresholds.delta_decay");
        }
        if (const json* v = optional_member(*th, "se_band", "thresholds")) {
            cfg.thresholds.se_band = number(*v, "thresholds.se_band");
        }
    }
    return cfg;
}

InstanceConfig load_config(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return parse_config(text);
    } catch (const Error& e) {
        throw Error(e.code(), path + ": " + std::string(e.what()));
    }
}

std::vector<std::string> config_violations(const InstanceConfig& cfg) {
    std::vector<std::string> out;
    const auto add = [&out](const std::vector<std::string>& v) { out.insert(out.end(), v.begin(), v.end()); };

    const auto& chain = cfg.chain;
    if (chain.q_tilde.rows() != chain.q_tilde.cols() || chain.q_hat.rows() != chain.q_hat.cols() ||
        chain.q_tilde.rows() != chain.q_hat.rows()) {
        out.push_back("chain: q_tilde and q_hat must be square matrices of the same size");
        return out;
    }
    if (!(chain.epsilon > 0.0) || !std::isfinite(chain.epsilon)) {
        out.push_back("chain.epsilon: must be positive");
    }
    const ValidationReport rep = validate_two_scale(chain.epsilon > 0.0 ? chain : chain.with_epsilon(1.0));
    add(rep.violations);

    add(cfg.market.violations());
    if (cfg.market.num_regimes() != chain.num_states()) {
        out.push_back("market: " + std::to_string(cfg.market.num_regimes()) + " regimes but the chain has " +
                      std::to_string(chain.num_states()) + " states");
    }
    if (cfg.initial_regime < 0 || cfg.initial_regime >= chain.num_states()) {
        out.push_back("problem.initial_regime: out of range");
    }
    for (std::size_t i = 0; i < cfg.sweep.size(); ++i) {
        if (!(cfg.sweep[i] > 0.0) || !std::isfinite(cfg.sweep[i])) {
            out.push_back("sweep.eps[" + std::to_string(i) + "]: epsilon must be positive");
        }
    }
    if (!(cfg.sim.step > 0.0)) {
        out.push_back("sim.step: must be positive");
    }
    if (!(cfg.solver_step > 0.0)) {
        out.push_back("solver.step: must be positive");
    }
    if (!(cfg.thresholds.gap_decay > 0.0) || !(cfg.thresholds.delta_decay > 0.0) || !(cfg.thresholds.se_band >= 0.0)) {
        out.push_back("thresholds: decay factors must be positive and se_band nonnegative");
    }
    return out;
}

void require_valid_config(const InstanceConfig& cfg) {
    const auto v = config_violations(cfg);
    if (!v.empty()) {
        std::string msg = "invalid instance";
        for (const auto& s : v) {
            msg += "\n  " + s;
        }
        throw Error(ErrorCode::invalid_argument, msg);
    }
}

}  // namespace twoscale
