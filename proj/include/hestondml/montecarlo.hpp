#pragma once

// Full-truncation Euler Monte Carlo for the Heston model. This is a test
// oracle for the semi-analytic pricer, not a production engine.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "hestondml/errors.hpp"
#include "hestondml/heston.hpp"
#include "hestondml/parallel.hpp"

namespace hestondml {

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

namespace detail {

struct NormalPair {
    double z1;
    double z2;
};

// Box-Muller on 53-bit uniforms in (0, 1].
inline NormalPair box_muller(std::mt19937_64& rng) {
    constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
    const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * scale;
    const double u2 = static_cast<double>(rng() >> 11) * scale;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

// Simulates antithetic path pairs of X = ln(S/K) and averages payoff(X_tau)
// over each pair. Paths are split into fixed blocks with their own seed so the
// estimate does not depend on the worker count.
template <class Payoff>
McEstimate simulate_pairs(const MarketPoint& point, const HestonParams& p, std::size_t n_paths,
                          std::size_t n_steps, std::uint64_t seed, unsigned threads, Payoff payoff) {
    point.validate();
    p.validate();
    if (n_paths < 2) throw ParameterError("mc: n_paths must be >= 2");
    if (n_steps < 1) throw ParameterError("mc: n_steps must be >= 1");

    const std::size_t n_pairs = n_paths / 2;
    constexpr std::size_t kBlocks = 64;
    std::vector<double> sums(kBlocks, 0.0), sumsq(kBlocks, 0.0);

    const double dt = point.tau / static_cast<double>(n_steps);
    const double sqdt = std::sqrt(dt);
    const double rho_perp = std::sqrt(1.0 - p.rho * p.rho);

    parallel_for(kBlocks, threads, [&](std::size_t block) {
        const std::size_t begin = n_pairs * block / kBlocks;
        const std::size_t end = n_pairs * (block + 1) / kBlocks;
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(block)};
        std::mt19937_64 rng(seq);
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            double x[2] = {point.m, point.m};
            double v[2] = {p.v0, p.v0};
            for (std::size_t k = 0; k < n_steps; ++k) {
                const auto z = box_muller(rng);
                const double zv = p.rho * z.z1 + rho_perp * z.z2;
                for (int a = 0; a < 2; ++a) {
                    const double sign = a == 0 ? 1.0 : -1.0;
                    const double vp = v[a] > 0.0 ? v[a] : 0.0;
                    const double sv = std::sqrt(vp) * sqdt;
                    x[a] += (point.r - 0.5 * vp) * dt + sv * sign * z.z1;
                    v[a] += p.kappa * (p.theta - vp) * dt + p.sigma * sv * sign * zv;
                }
            }
            const double pair = 0.5 * (payoff(x[0]) + payoff(x[1]));
            s += pair;
            s2 += pair * pair;
        }
        sums[block] = s;
        sumsq[block] = s2;
    });

    double s = 0.0, s2 = 0.0;
    for (std::size_t b = 0; b < kBlocks; ++b) {
        s += sums[b];
        s2 += sumsq[b];
    }
    const double n = static_cast<double>(n_pairs);
    const double mean = s / n;
    const double var = n > 1 ? (s2 - n * mean * mean) / (n - 1.0) : 0.0;
    return {mean, std::sqrt(std::max(var, 0.0) / n)};
}

}  // namespace detail

/// Monte Carlo estimate of the normalised forward put E[(1 - S_tau/K)^+].
inline McEstimate mc_price(const MarketPoint& point, const HestonParams& params, std::size_t n_paths,
                           std::size_t n_steps, std::uint64_t seed, unsigned threads = default_threads()) {
    return detail::simulate_pairs(point, params, n_paths, n_steps, seed, threads,
                                  [](double x) { return x < 0.0 ? -std::expm1(x) : 0.0; });
}

/// Monte Carlo estimate of E[exp(X_tau)] where X_tau is the log forward return
/// ln(S_tau / S_0) - r tau; equals phi_tau(-i) = 1 for the exact model.
inline McEstimate mc_forward_moment(const HestonParams& params, double tau, std::size_t n_paths,
                                    std::size_t n_steps, std::uint64_t seed,
                                    unsigned threads = default_threads()) {
    const MarketPoint point{0.0, tau, 0.0};
    return detail::simulate_pairs(point, params, n_paths, n_steps, seed, threads,
                                  [](double x) { return std::exp(x); });
}

}  // namespace hestondml
