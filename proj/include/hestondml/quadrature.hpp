#pragma once

// Adaptive Gauss-Kronrod (7/15) quadrature of vector-valued integrands over
// [0, inf). The half-line is covered by geometrically growing segments until
// a segment's absolute mass drops under the tolerance; segments are then
// refined globally (largest error first) until every component converges.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <tuple>
#include <utility>
#include <vector>

#include "hestondml/errors.hpp"

namespace hestondml {

struct QuadratureConfig {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    /// Hard upper bound on the truncation point of the semi-infinite integral.
    double u_max = 1e5;
    std::size_t max_intervals = 4000;

    void validate() const {
        if (!(abs_tol > 0.0)) throw ParameterError("QuadratureConfig: abs_tol must be > 0");
        if (!(rel_tol >= 0.0)) throw ParameterError("QuadratureConfig: rel_tol must be >= 0");
        if (!(u_max > 0.0)) throw ParameterError("QuadratureConfig: u_max must be > 0");
        if (max_intervals < 1) throw ParameterError("QuadratureConfig: max_intervals must be >= 1");
    }
};

struct Interval {
    double a;
    double b;
};

template <std::size_t N>
struct QuadratureResult {
    std::array<double, N> value{};
    std::array<double, N> error{};
    double truncation = 0.0;
    std::size_t evaluations = 0;
    std::vector<Interval> partition;
};

namespace detail {

inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for the nodes kXgk[1], kXgk[3], kXgk[5], kXgk[7].
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <std::size_t N>
struct Panel {
    double a = 0.0;
    double b = 0.0;
    std::array<double, N> value{};
    std::array<double, N> error{};
    std::array<double, N> abs_value{};  // integral of |f_k|
    double mass = 0.0;                  // max over components of abs_value
    double priority = 0.0;
};

// QUADPACK qk15 applied to every component of f.
template <std::size_t N, class F>
Panel<N> gk15(F& f, double a, double b) {
    const double centre = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    std::array<std::array<double, N>, 15> fv;
    fv[0] = f(centre);
    for (std::size_t j = 0; j < 7; ++j) {
        const double dx = half * kXgk[j];
        fv[1 + 2 * j] = f(centre - dx);
        fv[2 + 2 * j] = f(centre + dx);
    }

    Panel<N> p;
    p.a = a;
    p.b = b;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    constexpr double tiny = std::numeric_limits<double>::min();
    for (std::size_t k = 0; k < N; ++k) {
        double kron = kWgk[7] * fv[0][k];
        double gauss = kWg[3] * fv[0][k];
        double resabs = kWgk[7] * std::abs(fv[0][k]);
        for (std::size_t j = 0; j < 7; ++j) {
            const double s = fv[1 + 2 * j][k] + fv[2 + 2 * j][k];
            kron += kWgk[j] * s;
            resabs += kWgk[j] * (std::abs(fv[1 + 2 * j][k]) + std::abs(fv[2 + 2 * j][k]));
            if (j % 2 == 1) gauss += kWg[j / 2] * s;
        }
        const double mean = 0.5 * kron;
        double resasc = kWgk[7] * std::abs(fv[0][k] - mean);
        for (std::size_t j = 0; j < 7; ++j)
            resasc += kWgk[j] * (std::abs(fv[1 + 2 * j][k] - mean) + std::abs(fv[2 + 2 * j][k] - mean));

        double err = std::abs((kron - gauss) * half);
        resabs *= std::abs(half);
        resasc *= std::abs(half);
        if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
        if (resabs > tiny / (50.0 * eps)) err = std::max(50.0 * eps * resabs, err);

        p.value[k] = kron * half;
        p.error[k] = err;
        p.abs_value[k] = resabs;
        p.mass = std::max(p.mass, resabs);
        p.priority = std::max(p.priority, err);
    }
    return p;
}

// A component is done when its error meets the tolerance, or when the error
// is within twice the rounding floor of the panels (50 eps times the integral
// of |f|), where further bisection cannot help.
template <std::size_t N>
bool converged(const std::array<double, N>& value, const std::array<double, N>& error,
               const std::array<double, N>& abs_value, const QuadratureConfig& cfg) {
    constexpr double floor = 100.0 * std::numeric_limits<double>::epsilon();
    for (std::size_t k = 0; k < N; ++k)
        if (error[k] > std::max({cfg.abs_tol, cfg.rel_tol * std::abs(value[k]), floor * abs_value[k]})) return false;
    return true;
}

}  // namespace detail

/// Integrates f over [0, inf). f maps double -> std::array<double, N>.
/// Throws IntegrationError when the tail is not negligible before u_max or the
/// interval budget is exhausted.
template <std::size_t N, class F>
QuadratureResult<N> integrate_half_line(F&& f, const QuadratureConfig& cfg) {
    cfg.validate();
    using P = detail::Panel<N>;
    auto cmp = [](const P& x, const P& y) { return x.priority < y.priority; };
    std::priority_queue<P, std::vector<P>, decltype(cmp)> heap(cmp);

    QuadratureResult<N> out;
    // Segments [0,1], [1,2], [2,4], ... ; the last one must carry negligible mass.
    const double tail_tol = 0.25 * cfg.abs_tol;
    double a = 0.0;
    double b = 1.0;
    bool tail_ok = false;
    double last_mass = 0.0;
    while (true) {
        P p = detail::gk15<N>(f, a, b);
        out.evaluations += 15;
        const double mass = p.mass;
        last_mass = mass;
        heap.push(std::move(p));
        if (mass < tail_tol && b >= 4.0) {
            out.truncation = b;
            tail_ok = true;
            break;
        }
        if (b >= cfg.u_max) {
            out.truncation = b;
            break;
        }
        a = b;
        b = std::min(2.0 * b, cfg.u_max);
    }
    if (!tail_ok) throw IntegrationError("semi-infinite integral has a non-negligible tail at u_max", last_mass);

    auto totals = [&](const auto& h) {
        std::array<double, N> v{}, e{}, m{};
        auto copy = h;
        while (!copy.empty()) {
            const P& top = copy.top();
            for (std::size_t k = 0; k < N; ++k) {
                v[k] += top.value[k];
                e[k] += top.error[k];
                m[k] += top.abs_value[k];
            }
            copy.pop();
        }
        return std::tuple{v, e, m};
    };

    // Running sums avoid re-scanning the heap on every refinement.
    std::array<double, N> value{}, error{}, abs_value{};
    std::tie(value, error, abs_value) = totals(heap);
    while (!detail::converged<N>(value, error, abs_value, cfg)) {
        if (heap.size() >= cfg.max_intervals) {
            double worst = 0.0;
            for (std::size_t k = 0; k < N; ++k) worst = std::max(worst, error[k]);
            throw IntegrationError("quadrature did not converge within the interval budget", worst);
        }
        P worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {
            double resid = 0.0;
            for (std::size_t k = 0; k < N; ++k) resid = std::max(resid, error[k]);
            throw IntegrationError("quadrature interval collapsed below machine resolution", resid);
        }
        P left = detail::gk15<N>(f, worst.a, mid);
        P right = detail::gk15<N>(f, mid, worst.b);
        out.evaluations += 30;
        for (std::size_t k = 0; k < N; ++k) {
            value[k] += left.value[k] + right.value[k] - worst.value[k];
            error[k] += left.error[k] + right.error[k] - worst.error[k];
            abs_value[k] += left.abs_value[k] + right.abs_value[k] - worst.abs_value[k];
        }
        heap.push(std::move(left));
        heap.push(std::move(right));
    }
    // Re-sum from scratch to drop the cancellation noise of the running update.
    std::array<double, N> ignored{};
    std::tie(out.value, out.error, ignored) = totals(heap);
    out.partition.reserve(heap.size());
    while (!heap.empty()) {
        out.partition.push_back({heap.top().a, heap.top().b});
        heap.pop();
    }
    std::sort(out.partition.begin(), out.partition.end(),
              [](const Interval& x, const Interval& y) { return x.a < y.a; });
    return out;
}

/// Applies the 15-point Kronrod rule on a frozen partition. Used by finite
/// difference checks so that perturbed evaluations share one discretisation.
template <std::size_t N, class F>
std::array<double, N> integrate_on_partition(F&& f, const std::vector<Interval>& partition) {
    std::array<double, N> sum{};
    for (const Interval& iv : partition) {
        const auto p = detail::gk15<N>(f, iv.a, iv.b);
        for (std::size_t k = 0; k < N; ++k) sum[k] += p.value[k];
    }
    return sum;
}

}  // namespace hestondml
