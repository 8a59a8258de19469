#pragma once

#include <cmath>
#include <limits>
#include <random>

namespace twoscale {

template <class Rng>
ChainPath sample_path_with(const Eigen::MatrixXd& q, int initial_state, double horizon, Rng& rng) {
    require(horizon > 0.0, ErrorCode::invalid_argument, "sample_path: horizon must be positive");
    require(initial_state >= 0 && initial_state < q.rows(), ErrorCode::invalid_argument,
            "sample_path: initial state out of range");

    ChainPath path;
    path.horizon = horizon;
    path.jump_times.push_back(0.0);
    path.states.push_back(initial_state);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int m = static_cast<int>(q.rows());
    double t = 0.0;
    int state = initial_state;
    for (;;) {
        const double rate = -q(state, state);
        if (!(rate > 0.0)) {
            break;  // absorbing
        }
        // 1 - U lies in (0, 1], so the log is finite.
        t += -std::log(1.0 - unit(rng)) / rate;
        if (t >= horizon) {
            break;
        }
        const double target = unit(rng) * rate;
        double cumulative = 0.0;
        int next = -1;
        int last_positive = -1;
        for (int j = 0; j < m; ++j) {
            if (j == state || q(state, j) <= 0.0) {
                continue;
            }
            last_positive = j;
            cumulative += q(state, j);
            if (target < cumulative) {
                next = j;
                break;
            }
        }
        // Off-diagonal rates may sum to slightly less than -q_ii in floating point.
        if (next < 0) {
            next = last_positive;
        }
        state = next;
        path.jump_times.push_back(t);
        path.states.push_back(state);
    }
    return path;
}

}  // namespace twoscale
