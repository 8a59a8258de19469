#include "twoscale/error.hpp"

namespace twoscale {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::invalid_generator: return "invalid_generator";
    case ErrorCode::reducible_block: return "reducible_block";
    case ErrorCode::not_hurwitz: return "not_hurwitz";
    case ErrorCode::use_aggregate_transient: return "use_aggregate_transient";
    case ErrorCode::bad_block_structure: return "bad_block_structure";
    case ErrorCode::degenerate_volatility: return "degenerate_volatility";
    case ErrorCode::step_too_large: return "step_too_large";
    case ErrorCode::solver_blowup: return "solver_blowup";
    case ErrorCode::out_of_horizon: return "out_of_horizon";
    case ErrorCode::instance_mismatch: return "instance_mismatch";
    case ErrorCode::missing_transient_tables: return "missing_transient_tables";
    case ErrorCode::infeasible_frontier: return "infeasible_frontier";
    case ErrorCode::invalid_weight: return "invalid_weight";
    case ErrorCode::path_divergence: return "path_divergence";
    case ErrorCode::config_error: return "config_error";
    }
    return "unknown";
}

bool is_numerical(ErrorCode code) {
    switch (code) {
    case ErrorCode::solver_blowup:
    case ErrorCode::path_divergence:
    case ErrorCode::step_too_large:
        return true;
    default:
        return false;
    }
}

}  // namespace twoscale
