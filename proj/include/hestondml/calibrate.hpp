#pragma once

// Heston calibration to put quotes: weighted RMSE objective priced by the
// semi-analytic pricer or by a trained network, minimised with Nelder-Mead or
// differential evolution over five or three free parameters.

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hestondml/optim.hpp"
#include "hestondml/pricer.hpp"
#include "hestondml/training.hpp"

namespace hestondml {

struct Quote {
    double maturity = 0.0;  ///< years
    double strike = 0.0;
    double price = 0.0;     ///< market put price
    double rate = 0.0;      ///< continuously compounded, decimal
};

struct QuoteSet {
    double spot = 0.0;
    std::vector<Quote> quotes;

    void validate() const {
        if (!(spot > 0.0)) throw ParameterError("quotes: spot must be > 0");
        if (quotes.empty()) throw ParameterError("quotes: empty quote set");
        for (const auto& q : quotes)
            if (!(q.maturity > 0.0) || !(q.strike > 0.0) || !(q.price > 0.0) || !std::isfinite(q.rate))
                throw ParameterError("quotes: maturities, strikes and prices must be > 0");
    }
};

enum class Backend { analytic, network };
enum class CalibrationMode { five, three };

inline Backend backend_from_string(const std::string& s) {
    if (s == "analytic") return Backend::analytic;
    if (s == "network") return Backend::network;
    throw ParameterError("backend must be 'analytic' or 'network', got '" + s + "'");
}

inline CalibrationMode mode_from_string(const std::string& s) {
    if (s == "five") return CalibrationMode::five;
    if (s == "three") return CalibrationMode::three;
    throw ParameterError("mode must be 'five' or 'three', got '" + s + "'");
}

/// Parameter box in the order (kappa, theta, sigma, rho, v0).
struct ParamBounds {
    Range kappa{0.005, 3.0}, theta{0.0, 1.0}, sigma{0.1, 2.0}, rho{-0.9, 0.0}, v0{0.0, 1.0};
};

/// v0 implied by an at-the-money implied volatility.
inline double fix_v0_from_atm_iv(double atm_iv) {
    if (!(atm_iv >= 0.0) || !std::isfinite(atm_iv)) throw ParameterError("atm_iv must be >= 0");
    return atm_iv * atm_iv;
}

/// Starting points used for the market calibrations.
inline HestonParams five_param_initial_guess() { return {1.4719, 0.1021, 1.5986, -0.3899, 1.12e-5}; }
inline HestonParams three_param_initial_guess(double kappa, double v0) { return {kappa, 0.2752, 0.4571, -0.4477, v0}; }

inline constexpr double kThreeParamKappa = 0.15;

struct CalibrationProblem {
    QuoteSet quotes;
    std::vector<double> weights;  ///< empty: 1/n each
    ParamBounds bounds;
    CalibrationMode mode = CalibrationMode::five;
    double fixed_kappa = kThreeParamKappa;  ///< three-parameter mode only
    double fixed_v0 = 0.0;                  ///< three-parameter mode only
    Backend backend = Backend::analytic;
    const NetworkCheckpoint* network = nullptr;
    QuadratureConfig quad;

    void validate() const {
        quotes.validate();
        if (!weights.empty() && weights.size() != quotes.quotes.size())
            throw ParameterError("calibration: one weight per quote required");
        if (backend == Backend::network && network == nullptr)
            throw ParameterError("calibration: network backend needs a checkpoint");
    }

    std::vector<Range> free_bounds() const {
        if (mode == CalibrationMode::three) return {bounds.theta, bounds.sigma, bounds.rho};
        return {bounds.kappa, bounds.theta, bounds.sigma, bounds.rho, bounds.v0};
    }

    Eigen::VectorXd to_free(const HestonParams& p) const {
        if (mode == CalibrationMode::three) return Eigen::Vector3d(p.theta, p.sigma, p.rho);
        Eigen::VectorXd x(5);
        x << p.kappa, p.theta, p.sigma, p.rho, p.v0;
        return x;
    }

    HestonParams from_free(const Eigen::VectorXd& x) const {
        if (mode == CalibrationMode::three) return {fixed_kappa, x[0], x[1], x[2], fixed_v0};
        return {x[0], x[1], x[2], x[3], x[4]};
    }
};

inline constexpr double kPenaltyScale = 1e6;

/// Model put prices K e^{-r tau} P^ for every quote.
inline std::vector<double> model_prices(const HestonParams& p, const QuoteSet& qs, Backend backend,
                                        const NetworkCheckpoint* network = nullptr, const QuadratureConfig& quad = {}) {
    std::vector<double> out(qs.quotes.size());
    if (backend == Backend::analytic) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            const auto& q = qs.quotes[i];
            out[i] = put_price({std::log(qs.spot / q.strike), q.maturity, q.rate}, p, q.strike, quad);
        }
        return out;
    }
    if (!network) throw ParameterError("model_prices: network backend needs a checkpoint");
    RowMatrix raw(static_cast<Eigen::Index>(out.size()), static_cast<Eigen::Index>(kNumInputs));
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& q = qs.quotes[i];
        raw.row(static_cast<Eigen::Index>(i)) << std::log(qs.spot / q.strike), q.maturity, q.rate, p.kappa, p.v0,
            p.theta, p.sigma, p.rho;
    }
    const Eigen::VectorXd phat = predict_prices(*network, raw);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& q = qs.quotes[i];
        out[i] = q.strike * std::exp(-q.rate * q.maturity) * phat[static_cast<Eigen::Index>(i)];
    }
    return out;
}

/// Distance outside the box (0 inside).
inline double bounds_violation(const Eigen::VectorXd& x, const std::vector<Range>& box) {
    double d = 0.0;
    for (std::size_t j = 0; j < box.size(); ++j) {
        const double v = x[static_cast<Eigen::Index>(j)];
        d += std::max(0.0, box[j].lo - v) + std::max(0.0, v - box[j].hi);
    }
    return d;
}

/// sqrt(sum_i w_i (V_model - V_market)^2); out-of-box points score
/// 1e6 (1 + distance) and failed pricings 1e6.
inline double objective(const HestonParams& p, const CalibrationProblem& prob) {
    const double viol = bounds_violation(prob.to_free(p), prob.free_bounds());
    if (viol > 0.0 || !std::isfinite(viol)) return kPenaltyScale * (1.0 + (std::isfinite(viol) ? viol : 1e6));
    std::vector<double> model;
    try {
        model = model_prices(p, prob.quotes, prob.backend, prob.network, prob.quad);
    } catch (const std::exception&) {
        return kPenaltyScale;
    }
    const double n = static_cast<double>(model.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const double w = prob.weights.empty() ? 1.0 / n : prob.weights[i];
        const double e = model[i] - prob.quotes.quotes[i].price;
        acc += w * e * e;
    }
    const double j = std::sqrt(acc);
    return std::isfinite(j) ? j : kPenaltyScale;
}

struct CalibrationResult {
    HestonParams params;
    double objective = 0.0;
    int iterations = 0;
    std::size_t evaluations = 0;
    double seconds = 0.0;
    bool converged = false;
    std::vector<double> trace;
    std::vector<double> trace_seconds;
};

namespace detail {
inline CalibrationResult to_calibration_result(const OptimResult& r, const CalibrationProblem& prob, double seconds) {
    return {prob.from_free(r.x), r.fun, r.iterations, r.evaluations, seconds, r.converged, r.trace, r.trace_seconds};
}
}  // namespace detail

inline CalibrationResult calibrate_nelder_mead(const CalibrationProblem& prob, const HestonParams& initial,
                                               const NelderMeadConfig& cfg = {}) {
    prob.validate();
    const Eigen::VectorXd x0 = prob.to_free(initial);
    if (bounds_violation(x0, prob.free_bounds()) > 0.0)
        throw ParameterError("calibration: initial guess outside the bounds");
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = nelder_mead([&](const Eigen::VectorXd& x) { return objective(prob.from_free(x), prob); }, x0, cfg);
    return detail::to_calibration_result(r, prob,
                                         std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

inline CalibrationResult calibrate_differential_evolution(const CalibrationProblem& prob, const DeConfig& cfg = {},
                                                          OptimResult* raw = nullptr) {
    prob.validate();
    const auto box = prob.free_bounds();
    Eigen::VectorXd lo(static_cast<Eigen::Index>(box.size())), hi(static_cast<Eigen::Index>(box.size()));
    for (std::size_t j = 0; j < box.size(); ++j) {
        lo[static_cast<Eigen::Index>(j)] = box[j].lo;
        hi[static_cast<Eigen::Index>(j)] = box[j].hi;
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto r = differential_evolution([&](const Eigen::VectorXd& x) { return objective(prob.from_free(x), prob); }, lo,
                                    hi, cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto out = detail::to_calibration_result(r, prob, secs);
    if (raw) *raw = std::move(r);
    return out;
}

struct BackendComparison {
    std::array<double, 5> param_abs_diff{};  ///< |a - b| for kappa, theta, sigma, rho, v0
    double wall_clock_ratio = 0.0;           ///< a.seconds / b.seconds
    std::vector<double> market;
    std::vector<double> prices_a, prices_b;  ///< analytic prices at each optimum
    double mean_abs_error_a = 0.0, mean_abs_error_b = 0.0;
};

/// Re-prices both optima with the analytic pricer and reports the fit.
inline BackendComparison compare_backends(const CalibrationProblem& prob, const CalibrationResult& a,
                                          const CalibrationResult& b) {
    prob.quotes.validate();
    BackendComparison c;
    const auto& pa = a.params;
    const auto& pb = b.params;
    c.param_abs_diff = {std::abs(pa.kappa - pb.kappa), std::abs(pa.theta - pb.theta), std::abs(pa.sigma - pb.sigma),
                        std::abs(pa.rho - pb.rho), std::abs(pa.v0 - pb.v0)};
    c.wall_clock_ratio = b.seconds > 0.0 ? a.seconds / b.seconds : std::numeric_limits<double>::quiet_NaN();
    c.prices_a = model_prices(pa, prob.quotes, Backend::analytic, nullptr, prob.quad);
    c.prices_b = model_prices(pb, prob.quotes, Backend::analytic, nullptr, prob.quad);
    const double n = static_cast<double>(prob.quotes.quotes.size());
    for (std::size_t i = 0; i < prob.quotes.quotes.size(); ++i) {
        c.market.push_back(prob.quotes.quotes[i].price);
        c.mean_abs_error_a += std::abs(c.prices_a[i] - c.market[i]) / n;
        c.mean_abs_error_b += std::abs(c.prices_b[i] - c.market[i]) / n;
    }
    return c;
}

/// Best objective per iteration; the wall-clock column is optional so the file
/// can stay byte-reproducible.
inline void write_trace_csv(std::ostream& out, const CalibrationResult& r, bool with_elapsed = true) {
    out << (with_elapsed ? "iter,best_objective,elapsed_s\n" : "iter,best_objective\n");
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        out << i + 1 << ',' << io::fmt17(r.trace[i]);
        if (with_elapsed) out << ',' << io::fmt17(r.trace_seconds[i]);
        out << '\n';
    }
}

}  // namespace hestondml
