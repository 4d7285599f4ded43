#pragma once

// Derivative-free minimisers: Nelder-Mead simplex and differential evolution.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hestondml/errors.hpp"
#include "hestondml/parallel.hpp"

namespace hestondml {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct OptimResult {
    Eigen::VectorXd x;
    double fun = 0.0;
    int iterations = 0;
    std::size_t evaluations = 0;
    bool converged = false;
    std::vector<double> trace;  ///< best objective after each iteration / generation
    std::vector<double> trace_seconds;  ///< wall clock since the start, per trace entry
    std::vector<Eigen::VectorXd> population;  ///< final population (differential evolution only)
    std::vector<double> population_fun;
};

struct NelderMeadConfig {
    int max_iter = 1000;
    double xtol = 1e-6;  ///< simplex diameter (max distance to the best vertex)
    double ftol = 1e-6;  ///< spread of the vertex objectives
    double reflection = 1.0;
    double expansion = 2.0;
    double contraction = 0.5;
    double shrink = 0.5;
    int restarts = 2;  ///< fresh simplices around the converged point while they still improve by > ftol
};

/// Nelder-Mead. The initial simplex perturbs each coordinate of x0 by 5%
/// (0.00025 for zero coordinates). Stops when both the simplex diameter and
/// the objective spread fall under their tolerances, or after max_iter. A
/// converged simplex can collapse short of the minimum, so up to `restarts`
/// new simplices are built around the best point; the search ends once a
/// restart improves the best value by no more than ftol. Iterations and
/// max_iter span all restarts.
inline OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const NelderMeadConfig& cfg = {}) {
    const Eigen::Index n = x0.size();
    if (n < 1) throw ParameterError("nelder_mead: empty starting point");
    if (cfg.max_iter < 1) throw ParameterError("nelder_mead: max_iter must be >= 1");
    if (cfg.restarts < 0) throw ParameterError("nelder_mead: restarts must be >= 0");
    OptimResult res;
    const auto t0 = std::chrono::steady_clock::now();
    auto since = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    auto eval = [&](const Eigen::VectorXd& x) {
        ++res.evaluations;
        return f(x);
    };

    std::vector<Eigen::VectorXd> sim;
    std::vector<double> fs;
    std::vector<std::size_t> idx(static_cast<std::size_t>(n) + 1);

    auto order = [&] {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
        std::vector<Eigen::VectorXd> s2;
        std::vector<double> f2;
        for (std::size_t i : idx) {
            s2.push_back(sim[i]);
            f2.push_back(fs[i]);
        }
        sim.swap(s2);
        fs.swap(f2);
    };
    auto build = [&](const Eigen::VectorXd& x, std::optional<double> fx) {
        sim.assign(static_cast<std::size_t>(n) + 1, x);
        fs.assign(sim.size(), 0.0);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& v = sim[static_cast<std::size_t>(i) + 1];
            v[i] = v[i] != 0.0 ? 1.05 * v[i] : 0.00025;
        }
        for (std::size_t i = 0; i < sim.size(); ++i) {
            fs[i] = i == 0 && fx ? *fx : eval(sim[i]);
            if (!std::isfinite(fs[i])) throw DomainError("nelder_mead: non-finite objective on the initial simplex");
        }
        order();
    };
    build(x0, std::nullopt);

    const std::size_t last = sim.size() - 1;
    int restarts_left = cfg.restarts;
    double restart_from = std::numeric_limits<double>::infinity();
    while (res.iterations < cfg.max_iter) {
        double diam = 0.0, spread = 0.0;
        for (std::size_t i = 1; i < sim.size(); ++i) {
            diam = std::max(diam, (sim[i] - sim[0]).cwiseAbs().maxCoeff());
            spread = std::max(spread, std::abs(fs[i] - fs[0]));
        }
        if (diam <= cfg.xtol && spread <= cfg.ftol) {
            if (restarts_left == 0 || restart_from - fs[0] <= cfg.ftol) {
                res.converged = true;
                break;
            }
            --restarts_left;
            restart_from = fs[0];
            build(Eigen::VectorXd(sim[0]), fs[0]);
            continue;
        }
        ++res.iterations;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (std::size_t i = 0; i < last; ++i) centroid += sim[i];
        centroid /= static_cast<double>(n);

        const Eigen::VectorXd xr = centroid + cfg.reflection * (centroid - sim[last]);
        const double fr = eval(xr);
        bool do_shrink = false;
        if (fr < fs[0]) {
            const Eigen::VectorXd xe = centroid + cfg.reflection * cfg.expansion * (centroid - sim[last]);
            const double fe = eval(xe);
            if (fe < fr) {
                sim[last] = xe;
                fs[last] = fe;
            } else {
                sim[last] = xr;
                fs[last] = fr;
            }
        } else if (fr < fs[last - 1]) {
            sim[last] = xr;
            fs[last] = fr;
        } else if (fr < fs[last]) {
            // Outside contraction.
            const Eigen::VectorXd xc = centroid + cfg.contraction * cfg.reflection * (centroid - sim[last]);
            const double fc = eval(xc);
            if (fc <= fr) {
                sim[last] = xc;
                fs[last] = fc;
            } else {
                do_shrink = true;
            }
        } else {
            // Inside contraction.
            const Eigen::VectorXd xcc = centroid - cfg.contraction * (centroid - sim[last]);
            const double fcc = eval(xcc);
            if (fcc < fs[last]) {
                sim[last] = xcc;
                fs[last] = fcc;
            } else {
                do_shrink = true;
            }
        }
        if (do_shrink) {
            for (std::size_t i = 1; i < sim.size(); ++i) {
                sim[i] = sim[0] + cfg.shrink * (sim[i] - sim[0]);
                fs[i] = eval(sim[i]);
            }
        }
        order();
        res.trace.push_back(fs[0]);
        res.trace_seconds.push_back(since());
    }
    res.x = sim[0];
    res.fun = fs[0];
    return res;
}

enum class DeStrategy { best1bin, rand1bin };

inline DeStrategy de_strategy_from_string(const std::string& s) {
    if (s == "best1bin") return DeStrategy::best1bin;
    if (s == "rand1bin") return DeStrategy::rand1bin;
    throw ParameterError("unknown DE strategy '" + s + "' (use best1bin or rand1bin)");
}

struct DeConfig {
    DeStrategy strategy = DeStrategy::best1bin;
    int generations = 90;
    int population = 50;
    double tol = 1e-6;  ///< stop when std / |mean| of the population objectives drops below
    double F = 0.5;
    double Cr = 0.7;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

/// Differential evolution inside the box [lower, upper]. Mutants are clipped
/// to the box; trials of one generation are evaluated before any selection,
/// so the result does not depend on the thread count.
inline OptimResult differential_evolution(const Objective& f, const Eigen::VectorXd& lower,
                                          const Eigen::VectorXd& upper, const DeConfig& cfg = {}) {
    const Eigen::Index n = lower.size();
    if (n < 1 || upper.size() != n) throw ParameterError("differential_evolution: bad bounds");
    if ((upper.array() < lower.array()).any()) throw ParameterError("differential_evolution: upper < lower");
    if (cfg.population < 4) throw ParameterError("differential_evolution: population must be >= 4");
    if (cfg.generations < 1) throw ParameterError("differential_evolution: generations must be >= 1");
    if (!(cfg.F > 0.0 && cfg.F <= 2.0) || !(cfg.Cr >= 0.0 && cfg.Cr <= 1.0))
        throw ParameterError("differential_evolution: F must lie in (0, 2] and Cr in [0, 1]");

    const auto np = static_cast<std::size_t>(cfg.population);
    std::mt19937_64 rng(cfg.seed);
    auto u01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    auto pick = [&](std::size_t k) { return std::min(static_cast<std::size_t>(u01() * static_cast<double>(k)), k - 1); };

    OptimResult res;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Eigen::VectorXd> pop(np, Eigen::VectorXd(n));
    for (auto& p : pop)
        for (Eigen::Index j = 0; j < n; ++j) p[j] = lower[j] + (upper[j] - lower[j]) * u01();
    std::vector<double> fit(np);
    auto evaluate_all = [&](const std::vector<Eigen::VectorXd>& xs, std::vector<double>& out) {
        parallel_for(xs.size(), cfg.threads, [&](std::size_t i) {
            const double v = f(xs[i]);
            out[i] = std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
        });
        res.evaluations += xs.size();
    };
    evaluate_all(pop, fit);
    auto best_index = [&] { return static_cast<std::size_t>(std::min_element(fit.begin(), fit.end()) - fit.begin()); };

    std::vector<Eigen::VectorXd> trials(np, Eigen::VectorXd(n));
    std::vector<double> trial_fit(np);
    for (int g = 0; g < cfg.generations; ++g) {
        const std::size_t best = best_index();
        for (std::size_t i = 0; i < np; ++i) {
            std::size_t r[3];
            for (int k = 0; k < 3; ++k) {
                do {
                    r[k] = pick(np);
                } while (r[k] == i || (k > 0 && r[k] == r[0]) || (k > 1 && r[k] == r[1]));
            }
            const Eigen::VectorXd& base = cfg.strategy == DeStrategy::best1bin ? pop[best] : pop[r[0]];
            Eigen::VectorXd mutant = base + cfg.F * (pop[r[1]] - pop[r[2]]);
            mutant = mutant.cwiseMax(lower).cwiseMin(upper);
            const auto forced = static_cast<Eigen::Index>(pick(static_cast<std::size_t>(n)));
            for (Eigen::Index j = 0; j < n; ++j) trials[i][j] = (j == forced || u01() < cfg.Cr) ? mutant[j] : pop[i][j];
        }
        evaluate_all(trials, trial_fit);
        for (std::size_t i = 0; i < np; ++i)
            if (trial_fit[i] <= fit[i]) {
                pop[i] = trials[i];
                fit[i] = trial_fit[i];
            }
        ++res.iterations;
        res.trace.push_back(fit[best_index()]);
        res.trace_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

        double mean = 0.0;
        for (double v : fit) mean += v;
        mean /= static_cast<double>(np);
        double var = 0.0;
        for (double v : fit) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / static_cast<double>(np));
        if (std::isfinite(sd) && sd <= cfg.tol * std::abs(mean)) {
            res.converged = true;
            break;
        }
    }
    const std::size_t best = best_index();
    res.x = pop[best];
    res.fun = fit[best];
    res.population = pop;
    res.population_fun = fit;
    return res;
}

}  // namespace hestondml
