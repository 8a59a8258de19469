#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace twoscale {

enum class ErrorCode {
    invalid_argument,
    invalid_generator,
    reducible_block,
    not_hurwitz,
    use_aggregate_transient,
    bad_block_structure,
    degenerate_volatility,
    step_too_large,
    solver_blowup,
    out_of_horizon,
    instance_mismatch,
    missing_transient_tables,
    infeasible_frontier,
    invalid_weight,
    path_divergence,
    config_error,
};

std::string_view to_string(ErrorCode code);

// Numerical failures map to CLI exit code 2, everything else to 1.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
    if (!condition) {
        throw Error(code, what);
    }
}

}  // namespace twoscale
