#pragma once

// Heston characteristic function in the Gatheral-Taleb form, evaluated with
// care for the small-sigma and small-(d tau) regimes.

#include <cmath>
#include <complex>
#include <string>

#include "hestondml/errors.hpp"
#include "hestondml/heston.hpp"

namespace hestondml {

using cplx = std::complex<double>;

inline constexpr cplx kI{0.0, 1.0};

namespace detail {

inline cplx expm1(cplx x) {
    if (std::abs(x) < 1e-3) {
        // Taylor to fifth order; remainder below 1e-18 relative.
        return x * (1.0 + x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0))));
    }
    return std::exp(x) - 1.0;
}

inline cplx log1p(cplx w) {
    if (std::abs(w) < 1e-3) return w * (1.0 - w * (0.5 - w * (1.0 / 3.0 - w * (0.25 - w * 0.2))));
    return std::log(1.0 + w);
}

inline void require_finite(cplx v, const char* name) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
        throw DomainError(std::string("characteristic function: non-finite intermediate '") + name + "'");
}

}  // namespace detail

/// Every intermediate of phi_tau(u) = exp[A(u) + v0 B(u)].
struct CharFnTerms {
    cplx u;
    cplx alpha;          ///< -u(u+i)/2
    cplx beta;           ///< kappa - i u sigma rho
    double gamma = 0.0;  ///< sigma^2 / 2
    cplx d;              ///< sqrt(beta^2 - 4 alpha gamma), Re d >= 0
    cplx beta_minus_d;
    cplx beta_plus_d;
    cplx g;              ///< (beta - d)/(beta + d)
    cplx one_minus_g;
    cplx edt;            ///< e^{-d tau}
    cplx one_minus_edt;
    cplx one_minus_gedt; ///< 1 - g e^{-d tau}
    cplx log_ratio;      ///< ln[(g e^{-d tau} - 1)/(g - 1)]
    cplx A;
    cplx B;
    cplx phi;
};

/// Evaluates the characteristic function and exposes its intermediates.
/// The caller is responsible for parameter validation (see validate_for_pricing).
inline CharFnTerms char_fn_terms(cplx u, const HestonParams& p, double tau) {
    CharFnTerms t;
    t.u = u;
    t.alpha = -0.5 * u * (u + kI);
    t.beta = p.kappa - kI * u * p.sigma * p.rho;
    t.gamma = 0.5 * p.sigma * p.sigma;
    t.d = std::sqrt(t.beta * t.beta - 4.0 * t.alpha * t.gamma);
    detail::require_finite(t.d, "d");

    t.beta_plus_d = t.beta + t.d;
    const cplx direct = t.beta - t.d;
    // beta - d = 4 alpha gamma / (beta + d) avoids cancellation when sigma is small.
    if (std::abs(t.beta_plus_d) >= std::abs(direct) && std::abs(t.beta_plus_d) > 0.0)
        t.beta_minus_d = 4.0 * t.alpha * t.gamma / t.beta_plus_d;
    else
        t.beta_minus_d = direct;
    if (std::abs(t.beta_plus_d) == 0.0) throw DomainError("characteristic function: beta + d vanishes");
    t.g = t.beta_minus_d / t.beta_plus_d;
    t.one_minus_g = 2.0 * t.d / t.beta_plus_d;
    detail::require_finite(t.g, "g");

    const cplx dtau = t.d * tau;
    t.edt = std::exp(-dtau);
    t.one_minus_edt = -detail::expm1(-dtau);
    t.one_minus_gedt = 1.0 - t.g * t.edt;

    const double sigma2 = p.sigma * p.sigma;
    cplx ratio;  // (1 - e^{-d tau}) / (1 - g e^{-d tau})
    if (std::abs(t.one_minus_gedt) < 1e-14) {
        // g e^{-d tau} -> 1 only when d tau -> 0; first-order expansion in d.
        if (std::abs(dtau) > 1e-7) throw DomainError("characteristic function: degenerate 1 - g e^{-d tau}");
        const cplx bt = t.beta * tau;
        ratio = bt / (bt + 2.0);
        t.log_ratio = std::log((bt + 2.0) / 2.0);
    } else {
        ratio = t.one_minus_edt / t.one_minus_gedt;
        if (std::abs(t.one_minus_g) == 0.0) throw DomainError("characteristic function: g equals 1");
        t.log_ratio = detail::log1p(t.g * t.one_minus_edt / t.one_minus_g);
    }
    detail::require_finite(t.log_ratio, "log_ratio");

    t.B = t.beta_minus_d / sigma2 * ratio;
    t.A = p.kappa * p.theta / sigma2 * (t.beta_minus_d * tau - 2.0 * t.log_ratio);
    detail::require_finite(t.A, "A");
    detail::require_finite(t.B, "B");
    t.phi = std::exp(t.A + p.v0 * t.B);
    detail::require_finite(t.phi, "phi");
    return t;
}

/// phi_tau(u) for complex u.
inline cplx char_fn(cplx u, const HestonParams& p, double tau) { return char_fn_terms(u, p, tau).phi; }

}  // namespace hestondml
