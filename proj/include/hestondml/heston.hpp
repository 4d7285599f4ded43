#pragma once

#include <cmath>
#include <string>

#include "hestondml/errors.hpp"

namespace hestondml {

/// The five Heston parameters.
struct HestonParams {
    double kappa = 1.0;  ///< mean-reversion speed
    double theta = 0.04; ///< long-term variance
    double sigma = 0.3;  ///< volatility of variance
    double rho = -0.5;   ///< spot/variance correlation
    double v0 = 0.04;    ///< initial variance

    /// 2 kappa theta > sigma^2: the variance process never touches zero.
    bool feller_satisfied() const noexcept { return 2.0 * kappa * theta > sigma * sigma; }

    void validate() const {
        if (!(kappa > 0.0) || !std::isfinite(kappa)) throw ParameterError("HestonParams: kappa must be > 0");
        if (!(theta >= 0.0) || !std::isfinite(theta)) throw ParameterError("HestonParams: theta must be >= 0");
        if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("HestonParams: sigma must be > 0");
        if (!(v0 >= 0.0) || !std::isfinite(v0)) throw ParameterError("HestonParams: v0 must be >= 0");
        if (!(rho > -1.0 && rho < 1.0)) throw ParameterError("HestonParams: rho must lie in (-1, 1)");
    }

    bool operator==(const HestonParams&) const = default;
};

/// Option/market coordinates.
struct MarketPoint {
    double m = 0.0;   ///< log-moneyness ln(S/K)
    double tau = 1.0; ///< time to maturity in years
    double r = 0.0;   ///< continuously compounded rate

    /// Log-moneyness forward ln(S e^{r tau} / K).
    double log_forward_moneyness() const noexcept { return m + r * tau; }

    void validate() const {
        if (!(tau > 0.0) || !std::isfinite(tau)) throw ParameterError("MarketPoint: tau must be > 0");
        if (!std::isfinite(m)) throw ParameterError("MarketPoint: m must be finite");
        if (!std::isfinite(r)) throw ParameterError("MarketPoint: r must be finite");
    }
};

/// Smallest vol-of-variance accepted by the semi-analytic pricer; the closed
/// forms divide by sigma^2 and sigma^3.
inline constexpr double kSigmaFloor = 1e-4;

inline void validate_for_pricing(const MarketPoint& point, const HestonParams& params) {
    point.validate();
    params.validate();
    if (params.sigma < kSigmaFloor)
        throw ParameterError("sigma below the pricer floor of 1e-4 (use the Black-Scholes limit instead)");
}

}  // namespace hestondml
