#include "twoscale/market_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace twoscale {

MarketModel::MarketModel(double horizon, std::vector<double> interior_breakpoints,
                         std::vector<std::vector<RegimeCoefficients>> segments, double nondegeneracy_delta)
    : horizon_(horizon), segments_(std::move(segments)), delta_(nondegeneracy_delta) {
    require(horizon > 0.0 && std::isfinite(horizon), ErrorCode::invalid_argument, "horizon must be positive");
    require(segments_.size() == interior_breakpoints.size() + 1, ErrorCode::invalid_argument,
            "market model needs one segment more than interior breakpoints");
    knots_.reserve(interior_breakpoints.size() + 2);
    knots_.push_back(0.0);
    for (double b : interior_breakpoints) {
        require(b >= knots_.back() && b <= horizon, ErrorCode::invalid_argument,
                "breakpoints must be nondecreasing inside [0, T]");
        knots_.push_back(b);
    }
    knots_.push_back(horizon);
    for (const auto& seg : segments_) {
        require(!seg.empty() && seg.size() == segments_[0].size(), ErrorCode::invalid_argument,
                "every segment must define the same number of regimes");
    }
}

MarketModel::MarketModel(double horizon, std::vector<RegimeCoefficients> regimes, double nondegeneracy_delta)
    : MarketModel(horizon, {}, {std::move(regimes)}, nondegeneracy_delta) {}

int MarketModel::controls() const { return segments_.empty() ? 0 : segments_[0][0].controls(); }
int MarketModel::noises() const { return segments_.empty() ? 0 : segments_[0][0].noises(); }

int MarketModel::segment_at(double t) const {
    const int n = num_segments();
    int s = static_cast<int>(std::upper_bound(knots_.begin(), knots_.end(), t) - knots_.begin()) - 1;
    s = std::clamp(s, 0, n - 1);
    while (s > 0 && knots_[s + 1] <= knots_[s]) {
        --s;
    }
    return s;
}

std::vector<std::string> MarketModel::violations() const {
    std::vector<std::string> out;
    if (!(delta_ > 0.0)) {
        out.push_back("nondegeneracy delta must be positive");
    }
    const int d1 = controls();
    const int d = noises();
    if (d1 < 1 || d < 1) {
        out.push_back("B and sigma must have at least one column");
        return out;
    }
    for (int s = 0; s < num_segments(); ++s) {
        for (int i = 0; i < num_regimes(); ++i) {
            const auto& c = segments_[s][i];
            std::ostringstream where;
            where << "segment " << s << " regime " << i;
            if (c.b.size() != d1 || c.sigma.rows() != d1 || c.sigma.cols() != d) {
                out.push_back(where.str() + ": B must be 1x" + std::to_string(d1) + " and sigma " +
                              std::to_string(d1) + "x" + std::to_string(d));
                continue;
            }
            if (!std::isfinite(c.r) || !c.b.allFinite() || !c.sigma.allFinite()) {
                out.push_back(where.str() + ": non-finite coefficient");
                continue;
            }
            const Eigen::MatrixXd a = c.sigma * c.sigma.transpose();
            const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a, Eigen::EigenvaluesOnly)
                                       .eigenvalues()
                                       .minCoeff();
            if (delta_ > 0.0 && min_eig < delta_) {
                std::ostringstream os;
                os << where.str() << ": sigma sigma' has eigenvalue " << min_eig << " below delta " << delta_;
                out.push_back(os.str());
            }
        }
    }
    return out;
}

MarketModel MarketModel::with_sigma_scaled(double factor) const {
    MarketModel m = *this;
    for (auto& seg : m.segments_) {
        for (auto& c : seg) {
            c.sigma *= factor;
        }
    }
    return m;
}

namespace {

Eigen::LLT<Eigen::MatrixXd> checked_factor(const RegimeCoefficients& c, double delta) {
    const Eigen::MatrixXd a = c.sigma * c.sigma.transpose();
    const double min_eig =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (!(min_eig >= delta) || !(min_eig > 0.0)) {
        std::ostringstream os;
        os << "sigma sigma' has smallest eigenvalue " << min_eig << " (delta " << delta << ")";
        throw Error(ErrorCode::degenerate_volatility, os.str());
    }
    return Eigen::LLT<Eigen::MatrixXd>(a);
}

}  // namespace

double rho(const RegimeCoefficients& c, double delta) {
    const auto llt = checked_factor(c, delta);
    const Eigen::VectorXd bt = c.b.transpose();
    return bt.dot(llt.solve(bt));
}

double rho(const MarketModel& model, double t, int regime) {
    return rho(model.at(t, regime), model.delta());
}

Eigen::VectorXd feedback_gain(const RegimeCoefficients& c, double delta) {
    const auto llt = checked_factor(c, delta);
    return -llt.solve(Eigen::VectorXd(c.b.transpose()));
}

RiccatiCoefficients full_coefficients(const MarketModel& model) {
    RiccatiCoefficients out;
    out.knots = model.knots();
    for (int s = 0; s < model.num_segments(); ++s) {
        std::vector<double> r, rh;
        for (int i = 0; i < model.num_regimes(); ++i) {
            const auto& c = model.coefficients(s, i);
            r.push_back(c.r);
            rh.push_back(rho(c, model.delta()));
        }
        out.r.push_back(std::move(r));
        out.rho.push_back(std::move(rh));
    }
    return out;
}

RiccatiCoefficients aggregated_coefficients(const MarketModel& model, const BlockStructure& blocks,
                                            const std::vector<Eigen::VectorXd>& mus) {
    require(static_cast<int>(mus.size()) == blocks.num_blocks(), ErrorCode::instance_mismatch,
            "one stationary distribution per block is required");
    require(blocks.num_states() == model.num_regimes(), ErrorCode::instance_mismatch,
            "block structure and market model disagree on the number of regimes");
    const RiccatiCoefficients full = full_coefficients(model);
    RiccatiCoefficients out;
    out.knots = full.knots;
    for (int s = 0; s < full.num_segments(); ++s) {
        std::vector<double> r(blocks.num_blocks(), 0.0), rh(blocks.num_blocks(), 0.0);
        for (int k = 0; k < blocks.num_blocks(); ++k) {
            const auto& b = blocks.recurrent_blocks[k];
            for (std::size_t j = 0; j < b.size(); ++j) {
                r[k] += mus[k](j) * full.r[s][b[j]];
                rh[k] += mus[k](j) * full.rho[s][b[j]];
            }
        }
        out.r.push_back(std::move(r));
        out.rho.push_back(std::move(rh));
    }
    return out;
}

std::vector<std::vector<Eigen::RowVectorXd>> aggregated_b(const MarketModel& model, const BlockStructure& blocks,
                                                          const std::vector<Eigen::VectorXd>& mus) {
    std::vector<std::vector<Eigen::RowVectorXd>> out(model.num_segments());
    for (int s = 0; s < model.num_segments(); ++s) {
        for (int k = 0; k < blocks.num_blocks(); ++k) {
            const auto& b = blocks.recurrent_blocks[k];
            Eigen::RowVectorXd avg = Eigen::RowVectorXd::Zero(model.controls());
            for (std::size_t j = 0; j < b.size(); ++j) {
                avg += mus[k](j) * model.coefficients(s, b[j]).b;
            }
            out[s].push_back(std::move(avg));
        }
    }
    return out;
}

}  // namespace twoscale
