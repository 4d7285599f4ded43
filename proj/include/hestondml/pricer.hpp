#pragma once

// Semi-analytic European put pricing under Heston in normalised forward units:
//   P^ = e^{r tau} P / K = 1 - (1/pi) Int_0^inf Re[e^{(iu+1/2)F} phi(u - i/2)] du / (u^2 + 1/4)
// with F = m + r tau the log-moneyness forward.

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "hestondml/charfn.hpp"
#include "hestondml/heston.hpp"
#include "hestondml/quadrature.hpp"

namespace hestondml {

namespace detail {

// Re[e^{(iu+1/2)F} phi(u - i/2)] / (pi (u^2 + 1/4)) and the shared pieces.
struct LiptonKernel {
    cplx forward_factor;  // e^{(iu+1/2)F}
    double weight;        // 1 / (pi (u^2 + 1/4))
};

inline LiptonKernel lipton_kernel(double u, double log_fwd) {
    const double amp = std::exp(0.5 * log_fwd);
    return {cplx(amp * std::cos(u * log_fwd), amp * std::sin(u * log_fwd)),
            1.0 / (std::numbers::pi * (u * u + 0.25))};
}

inline std::array<double, 1> put_integrand(double u, const MarketPoint& pt, const HestonParams& p) {
    const auto k = lipton_kernel(u, pt.log_forward_moneyness());
    const cplx phi = char_fn(cplx(u, -0.5), p, pt.tau);
    return {(k.forward_factor * phi).real() * k.weight};
}

}  // namespace detail

/// Normalised forward put with the full quadrature record (partition, error).
inline QuadratureResult<1> normalised_forward_put_detailed(const MarketPoint& point, const HestonParams& params,
                                                           const QuadratureConfig& quad = {}) {
    validate_for_pricing(point, params);
    auto res = integrate_half_line<1>([&](double u) { return detail::put_integrand(u, point, params); }, quad);
    res.value[0] = 1.0 - res.value[0];
    return res;
}

/// P^ in [0, 1]: the put price scaled by e^{r tau}/K.
inline double normalised_forward_put(const MarketPoint& point, const HestonParams& params,
                                     const QuadratureConfig& quad = {}) {
    return normalised_forward_put_detailed(point, params, quad).value[0];
}

/// P^ on a fixed quadrature partition (no adaptivity).
inline double normalised_forward_put_on_partition(const MarketPoint& point, const HestonParams& params,
                                                  const std::vector<Interval>& partition) {
    validate_for_pricing(point, params);
    return 1.0 - integrate_on_partition<1>([&](double u) { return detail::put_integrand(u, point, params); },
                                           partition)[0];
}

/// Put price in currency: K e^{-r tau} P^.
inline double put_price(const MarketPoint& point, const HestonParams& params, double strike,
                        const QuadratureConfig& quad = {}) {
    if (!(strike > 0.0)) throw ParameterError("put_price: strike must be > 0");
    return strike * std::exp(-point.r * point.tau) * normalised_forward_put(point, params, quad);
}

/// Normalised forward call through put-call parity: C^ = P^ + e^F - 1.
inline double normalised_forward_call(const MarketPoint& point, const HestonParams& params,
                                      const QuadratureConfig& quad = {}) {
    return normalised_forward_put(point, params, quad) + std::expm1(point.log_forward_moneyness());
}

/// Normalised forward call computed from Lipton's call formula in currency units
/// (unit strike, spot e^m), then rescaled by e^{r tau}.
inline double normalised_forward_call_direct(const MarketPoint& point, const HestonParams& params,
                                             const QuadratureConfig& quad = {}) {
    validate_for_pricing(point, params);
    const double spot = std::exp(point.m);
    const double discount = std::exp(-point.r * point.tau);
    const auto res = integrate_half_line<1>(
        [&](double u) { return detail::put_integrand(u, point, params); }, quad);
    const double call = spot - discount * res.value[0];
    return call / discount;
}

/// Black-Scholes normalised forward put N(-d2) - e^F N(-d1).
inline double bs_normalised_forward_put(double log_fwd, double vol, double tau) {
    if (!(vol > 0.0) || !(tau > 0.0)) throw ParameterError("bs_normalised_forward_put: vol and tau must be > 0");
    const double sd = vol * std::sqrt(tau);
    const double d1 = (log_fwd + 0.5 * sd * sd) / sd;
    const double d2 = d1 - sd;
    auto ncdf = [](double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); };
    return ncdf(-d2) - std::exp(log_fwd) * ncdf(-d1);
}

/// Black-Scholes vega of the normalised forward put, dP^/dvol.
inline double bs_normalised_forward_vega(double log_fwd, double vol, double tau) {
    const double sd = vol * std::sqrt(tau);
    const double d1 = (log_fwd + 0.5 * sd * sd) / sd;
    const double pdf = std::exp(-0.5 * d1 * d1) / std::sqrt(2.0 * std::numbers::pi);
    return std::exp(log_fwd) * pdf * std::sqrt(tau);
}

/// Time-averaged expected variance: the Black-Scholes volatility the model
/// collapses to as sigma -> 0.
inline double bs_effective_vol(const HestonParams& params, double tau) {
    if (!(tau > 0.0)) throw ParameterError("bs_effective_vol: tau must be > 0");
    const double x = params.kappa * tau;
    // (1 - e^{-x}) / x, with its series near zero.
    const double avg = std::abs(x) < 1e-8 ? 1.0 - 0.5 * x : -std::expm1(-x) / x;
    const double var = params.theta + avg * (params.v0 - params.theta);
    if (var < 0.0) throw DomainError("bs_effective_vol: negative effective variance");
    return std::sqrt(var);
}

}  // namespace hestondml
