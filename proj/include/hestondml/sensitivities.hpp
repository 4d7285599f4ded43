#pragma once

// Closed-form partial derivatives of the normalised forward put P^ with respect
// to its eight inputs. Every partial is a Lipton-type integral whose kernel is
// the derivative of e^{(iu+1/2)F} phi(u - i/2); all kernels share the
// characteristic-function intermediates, so one vector quadrature pass serves
// all of them.

#include <array>
#include <cmath>
#include <vector>

#include "hestondml/charfn.hpp"
#include "hestondml/pricer.hpp"

namespace hestondml {

/// dP^/dx for each input x.
struct Gradient8 {
    double d_theta = 0.0;
    double d_m = 0.0;
    double d_v0 = 0.0;
    double d_r = 0.0;
    double d_tau = 0.0;
    double d_kappa = 0.0;
    double d_rho = 0.0;
    double d_sigma = 0.0;

    /// Entries in the dataset input order (m, tau, r, kappa, v0, theta, sigma, rho).
    std::array<double, 8> in_input_order() const {
        return {d_m, d_tau, d_r, d_kappa, d_v0, d_theta, d_sigma, d_rho};
    }

    static Gradient8 from_input_order(const std::array<double, 8>& g) {
        Gradient8 out;
        out.d_m = g[0];
        out.d_tau = g[1];
        out.d_r = g[2];
        out.d_kappa = g[3];
        out.d_v0 = g[4];
        out.d_theta = g[5];
        out.d_sigma = g[6];
        out.d_rho = g[7];
        return out;
    }

    bool all_finite() const {
        for (double v : in_input_order())
            if (!std::isfinite(v)) return false;
        return true;
    }
};

struct PriceAndGradient {
    double price = 0.0;
    Gradient8 grad;
};

/// Derivatives of A(u), B(u) and phi_tau(u) with respect to the model
/// parameters and tau, evaluated at the same (complex) u as `t`.
struct CharFnDerivatives {
    cplx dA_dtheta, dA_dkappa, dB_dkappa, dA_drho, dB_drho, dA_dsigma, dB_dsigma;
    cplx dphi_dtau, dphi_dkappa, dphi_drho, dphi_dsigma;
};

inline CharFnDerivatives char_fn_derivatives(const CharFnTerms& t, const HestonParams& p, double tau) {
    const cplx z = t.u;
    const cplx& beta = t.beta;
    const cplx& d = t.d;
    const cplx& g = t.g;
    const cplx& e = t.edt;
    const cplx& bmd = t.beta_minus_d;
    const cplx& bpd = t.beta_plus_d;
    const cplx& omg = t.one_minus_g;     // 1 - g
    const cplx& ome = t.one_minus_edt;   // 1 - e^{-d tau}
    const cplx& omge = t.one_minus_gedt; // 1 - g e^{-d tau}
    const double s = p.sigma;
    const double s2 = s * s;
    const double kt = p.kappa * p.theta;
    const cplx bmd_s2 = bmd / s2;
    const cplx tb2 = 2.0 + tau * beta;
    const cplx iz = kI * z;

    CharFnDerivatives out;
    // A is proportional to theta; B does not depend on it.
    out.dA_dtheta = p.kappa / s2 * (bmd * tau - 2.0 * t.log_ratio);

    // dphi/dtau; B / (1 - e) is rewritten as bmd / (s^2 (1 - g e)) to stay finite as d tau -> 0.
    out.dphi_dtau = t.phi * (kt / s2 * (bmd - 2.0 * d * g * e / omge) + p.v0 * bmd_s2 * d * e * omg / (omge * omge));

    // kappa: 4g/(g-1) = -4g/(1-g).
    out.dA_dkappa = t.A / p.kappa - kt / (d * s2) * (-d * tau + tau * beta - 4.0 * g / omg + 2.0 * g * e * tb2 / omge);
    out.dB_dkappa = -t.B / d + bmd_s2 * tau * beta * e / (d * omge) - t.B * g * e * tb2 / (d * omge);

    // rho
    out.dA_drho = kt * iz / (d * s) * (tau * bmd - 2.0 * g * (-e * tb2 / omge + 2.0 / omg));
    out.dB_drho = iz * s / d * (t.B + e * (-tau * beta * bmd_s2 / omge + t.B * g * tb2 / omge));

    // sigma
    const cplx izr = iz * p.rho;
    const cplx dbeta_term = izr * beta + 2.0 * t.alpha * s;  // -(1/2) d(d^2)/dsigma shifted by beta
    const cplx bpd2 = bpd * bpd;
    // beta^2 - d^2 = 4 alpha gamma = 2 alpha s^2; (g-1) e - g e + 1 = 1 - e.
    const cplx dlog_dsigma =
        ((2.0 * izr * (2.0 * t.alpha * s2) + 4.0 * beta * t.alpha * s) * ome - tau * g * omg * e * bpd2 * dbeta_term) /
        (d * bpd2 * omg * omge);
    out.dA_dsigma = -2.0 * t.A / s + kt / s2 * (-iz * tau * p.rho + tau / d * dbeta_term - 2.0 * dlog_dsigma);

    const cplx q = ome / omge;
    const cplx dbmd_s2 = (s * (izr * bmd + 2.0 * t.alpha * s) - 2.0 * d * bmd) / (d * s2 * s);
    const cplx dq = (e * dbeta_term * (-tau * bpd2 * omge + ome * (2.0 * beta + tau * g * bpd2)) -
                     2.0 * izr * d * d * e * ome) /
                    (d * bpd2 * omge * omge);
    out.dB_dsigma = q * dbmd_s2 + bmd_s2 * dq;

    out.dphi_dkappa = t.phi * (out.dA_dkappa + p.v0 * out.dB_dkappa);
    out.dphi_drho = t.phi * (out.dA_drho + p.v0 * out.dB_drho);
    out.dphi_dsigma = t.phi * (out.dA_dsigma + p.v0 * out.dB_dsigma);
    return out;
}

namespace detail {

// Kernel slots: 0 price, 1 theta (without the 1/theta), 2 m, 3 v0, 4 tau (phi part),
// 5 kappa, 6 rho, 7 sigma. Each is Re[e^{(iu+1/2)F} X] / (pi (u^2 + 1/4)).
inline std::array<double, 8> gradient_integrand(double u, const MarketPoint& pt, const HestonParams& p,
                                                bool with_theta) {
    const auto k = lipton_kernel(u, pt.log_forward_moneyness());
    const auto t = char_fn_terms(cplx(u, -0.5), p, pt.tau);
    const auto dv = char_fn_derivatives(t, p, pt.tau);
    const cplx ef = k.forward_factor;
    const cplx efphi = ef * t.phi;
    auto re = [&](cplx v) { return v.real() * k.weight; };
    return {re(efphi),
            with_theta ? re(efphi * dv.dA_dtheta) : 0.0,
            re(efphi * cplx(0.5, u)),
            re(efphi * t.B),
            re(ef * dv.dphi_dtau),
            re(ef * dv.dphi_dkappa),
            re(ef * dv.dphi_drho),
            re(ef * dv.dphi_dsigma)};
}

inline PriceAndGradient assemble(const std::array<double, 8>& I, const MarketPoint& pt, bool with_theta) {
    PriceAndGradient out;
    out.price = 1.0 - I[0];
    Gradient8& g = out.grad;
    // dA/dtheta = A/theta; the kernel already carries A/theta.
    g.d_theta = with_theta ? -I[1] : 0.0;
    g.d_m = -I[2];
    g.d_v0 = -I[3];
    g.d_r = pt.tau * g.d_m;
    g.d_tau = pt.r * g.d_m - I[4];
    g.d_kappa = -I[5];
    g.d_rho = -I[6];
    g.d_sigma = -I[7];
    return out;
}

inline PriceAndGradient price_and_gradient_impl(const MarketPoint& point, const HestonParams& params,
                                                const QuadratureConfig& quad, bool with_theta) {
    validate_for_pricing(point, params);
    const auto res = integrate_half_line<8>(
        [&](double u) { return gradient_integrand(u, point, params, with_theta); }, quad);
    auto out = assemble(res.value, point, with_theta);
    if (!out.grad.all_finite()) throw DomainError("sensitivities: non-finite partial derivative");
    return out;
}

inline void require_positive_theta(const HestonParams& params) {
    if (!(params.theta > 0.0))
        throw DomainError("dP/dtheta needs theta > 0 (closed form uses A/theta); use finite differences at theta = 0");
}

}  // namespace detail

/// P^ and all eight partials from one shared quadrature pass. Requires theta > 0.
inline PriceAndGradient price_and_gradient(const MarketPoint& point, const HestonParams& params,
                                           const QuadratureConfig& quad = {}) {
    detail::require_positive_theta(params);
    return detail::price_and_gradient_impl(point, params, quad, true);
}

inline Gradient8 full_gradient(const MarketPoint& point, const HestonParams& params,
                               const QuadratureConfig& quad = {}) {
    return price_and_gradient(point, params, quad).grad;
}

// Single partials. They share the full pass, so they agree with full_gradient
// exactly; at theta = 0 the pass runs without the theta kernel.
inline double grad_theta(const MarketPoint& point, const HestonParams& params, const QuadratureConfig& quad = {}) {
    return full_gradient(point, params, quad).d_theta;
}

namespace detail {
inline Gradient8 gradient_any_theta(const MarketPoint& point, const HestonParams& params,
                                    const QuadratureConfig& quad) {
    return price_and_gradient_impl(point, params, quad, params.theta > 0.0).grad;
}
}  // namespace detail

inline double grad_m(const MarketPoint& point, const HestonParams& params, const QuadratureConfig& quad = {}) {
    return detail::gradient_any_theta(point, params, quad).d_m;
}
inline double grad_v0(const MarketPoint& point, const HestonParams& params, const QuadratureConfig& quad = {}) {
    return detail::gradient_any_theta(point, params, quad).d_v0;
}
/// tau * dP/dm, by identity.
inline double grad_r(const MarketPoint& point, const HestonParams& params, const QuadratureConfig& quad = {}) {
    return detail::gradient_any_theta(point, params, quad).d_r;
}
inline double grad_tau(const MarketPoint& point, const HestonParams& params, const QuadratureConfig& quad = {}) {
    return detail::gradient_any_theta(point, params, quad).d_tau;
}
inline double grad_kappa(const MarketPoint& point, const HestonParams& params, const QuadratureConfig& quad = {}) {
    return detail::gradient_any_theta(point, params, quad).d_kappa;
}
inline double grad_rho(const MarketPoint& point, const HestonParams& params, const QuadratureConfig& quad = {}) {
    return detail::gradient_any_theta(point, params, quad).d_rho;
}
inline double grad_sigma(const MarketPoint& point, const HestonParams& params, const QuadratureConfig& quad = {}) {
    return detail::gradient_any_theta(point, params, quad).d_sigma;
}

}  // namespace hestondml
