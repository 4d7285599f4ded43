#pragma once

// Synthetic training universe: Latin-hypercube inputs, pricer labels and
// differential labels, splitting and normalisation.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "hestondml/errors.hpp"
#include "hestondml/io.hpp"
#include "hestondml/parallel.hpp"
#include "hestondml/sensitivities.hpp"

namespace hestondml {

inline constexpr std::size_t kNumInputs = 8;
inline const std::array<std::string, kNumInputs> kInputNames = {"m", "tau", "r", "kappa", "v0", "theta", "sigma", "rho"};

using Vec8 = std::array<double, kNumInputs>;

struct Range {
    double lo = 0.0;
    double hi = 1.0;
    double width() const { return hi - lo; }
};

/// Sampling box in input order (m, tau, r, kappa, v0, theta, sigma, rho).
struct SamplingRanges {
    std::array<Range, kNumInputs> box = {{{-2.0, 2.0},
                                          {0.05, 20.0},
                                          {-0.01, 0.10},
                                          {0.005, 3.0},
                                          {0.0, 1.0},
                                          {0.0, 1.0},
                                          {0.1, 2.0},
                                          {-0.90, 0.0}}};

    Range& operator[](std::size_t i) { return box[i]; }
    const Range& operator[](std::size_t i) const { return box[i]; }

    void validate() const {
        for (std::size_t i = 0; i < kNumInputs; ++i)
            if (!(box[i].lo < box[i].hi)) throw ParameterError("ranges: lower must be < upper for " + kInputNames[i]);
    }

    /// Variance inputs floored at 1e-4 so every draw is priceable.
    SamplingRanges with_positive_variance() const {
        SamplingRanges out = *this;
        for (std::size_t i : {std::size_t{4}, std::size_t{5}}) out.box[i].lo = std::max(out.box[i].lo, 1e-4);
        out.validate();
        return out;
    }
};

inline nlohmann::json to_json(const SamplingRanges& r) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < kNumInputs; ++i) j[kInputNames[i]] = {r[i].lo, r[i].hi};
    return j;
}

inline SamplingRanges ranges_from_json(const nlohmann::json& j) {
    SamplingRanges r;
    for (std::size_t i = 0; i < kNumInputs; ++i) {
        if (!j.contains(kInputNames[i])) continue;
        const auto& v = j.at(kInputNames[i]);
        if (!v.is_array() || v.size() != 2) throw FormatError("ranges: '" + kInputNames[i] + "' must be [lo, hi]");
        r[i] = {v[0].get<double>(), v[1].get<double>()};
    }
    r.validate();
    return r;
}

inline MarketPoint market_point(const Vec8& x) { return {x[0], x[1], x[2]}; }
inline HestonParams heston_params(const Vec8& x) { return {x[3], x[5], x[6], x[7], x[4]}; }

struct LabeledSample {
    Vec8 x{};
    double y = 0.0;
    Vec8 xbar{};
};

enum class FellerMode { require, allow };

inline std::string to_string(FellerMode m) { return m == FellerMode::require ? "require" : "allow"; }

inline FellerMode feller_mode_from_string(const std::string& s) {
    if (s == "require") return FellerMode::require;
    if (s == "allow") return FellerMode::allow;
    throw ParameterError("feller mode must be 'require' or 'allow', got '" + s + "'");
}

namespace detail {
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline double uniform(std::mt19937_64& rng, const Range& r) { return r.lo + r.width() * uniform01(rng); }
}  // namespace detail

/// Random Latin hypercube: each column's n values fall in distinct equal-width
/// strata, jittered uniformly inside their stratum.
inline std::vector<Vec8> lhs_sample(std::size_t n, const SamplingRanges& ranges, std::uint64_t seed) {
    if (n < 1) throw ParameterError("lhs_sample: n must be >= 1");
    ranges.validate();
    std::mt19937_64 rng(seed);
    std::vector<Vec8> out(n);
    std::vector<std::size_t> perm(n);
    for (std::size_t j = 0; j < kNumInputs; ++j) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        // Fisher-Yates by hand: std::shuffle's algorithm is implementation-defined.
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t k = static_cast<std::size_t>(detail::uniform01(rng) * static_cast<double>(i));
            std::swap(perm[i - 1], perm[std::min(k, i - 1)]);
        }
        const Range& r = ranges[j];
        for (std::size_t i = 0; i < n; ++i) {
            const double u = (static_cast<double>(perm[i]) + detail::uniform01(rng)) / static_cast<double>(n);
            out[i][j] = std::min(r.lo + r.width() * u, r.hi);
        }
    }
    return out;
}

struct GenerateReport {
    std::size_t feller_redraws = 0;
    std::size_t pricing_failures = 0;
    std::vector<std::string> failure_log;
};

namespace detail {

inline bool feller_ok(const Vec8& x) { return 2.0 * x[3] * x[5] > x[6] * x[6]; }

// Redraws (kappa, theta, sigma) uniformly in their ranges until Feller holds.
inline std::size_t enforce_feller(Vec8& x, const SamplingRanges& r, std::mt19937_64& rng) {
    std::size_t draws = 0;
    while (!feller_ok(x)) {
        if (++draws > 1000000) throw ParameterError("generate: ranges admit no Feller-satisfying (kappa, theta, sigma)");
        x[3] = uniform(rng, r[3]);
        x[5] = uniform(rng, r[5]);
        x[6] = uniform(rng, r[6]);
    }
    return draws;
}

inline LabeledSample label(const Vec8& x, const QuadratureConfig& quad) {
    const auto pg = price_and_gradient(market_point(x), heston_params(x), quad);
    LabeledSample s;
    s.x = x;
    s.y = pg.price;
    s.xbar = pg.grad.in_input_order();
    if (!std::isfinite(s.y) || s.y < -1e-9 || s.y > 1.0 + 1e-9)
        throw DomainError("label outside [0, 1]: " + io::fmt17(s.y));
    return s;
}

}  // namespace detail

/// Labeled Latin-hypercube dataset. Output order follows the draw order
/// whatever the worker count; failed samples are re-drawn uniformly.
inline std::vector<LabeledSample> generate(std::size_t n, const SamplingRanges& ranges, FellerMode feller,
                                           const QuadratureConfig& quad, std::uint64_t seed,
                                           unsigned threads = default_threads(), GenerateReport* report = nullptr,
                                           const std::function<void(std::size_t, std::size_t)>& on_progress = {}) {
    const SamplingRanges eff = ranges.with_positive_variance();
    quad.validate();
    auto draws = lhs_sample(n, eff, seed);
    std::mt19937_64 redraw_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    GenerateReport rep;
    if (feller == FellerMode::require)
        for (auto& x : draws) rep.feller_redraws += detail::enforce_feller(x, eff, redraw_rng);

    std::vector<LabeledSample> out(n);
    std::vector<char> ok(n, 0);
    std::vector<std::string> why(n);
    std::vector<std::size_t> todo(n);
    std::iota(todo.begin(), todo.end(), std::size_t{0});
    const std::size_t max_failures = n / 100;
    std::atomic<std::size_t> done{0};
    std::mutex progress_mtx;
    const std::size_t every = std::max<std::size_t>(1, n / 100);

    while (!todo.empty()) {
        parallel_for(todo.size(), threads, [&](std::size_t k) {
            const std::size_t i = todo[k];
            try {
                out[i] = detail::label(draws[i], quad);
                ok[i] = 1;
                const std::size_t d = ++done;
                if (on_progress && (d % every == 0 || d == n)) {
                    std::lock_guard lock(progress_mtx);
                    on_progress(d, n);
                }
            } catch (const std::exception& e) {
                why[i] = e.what();
            }
        });
        std::vector<std::size_t> again;
        for (std::size_t i : todo) {
            if (ok[i]) continue;
            ++rep.pricing_failures;
            rep.failure_log.push_back("sample " + std::to_string(i) + ": " + why[i]);
            if (rep.pricing_failures > max_failures)
                throw IntegrationError("generate: pricing failure rate above 1% (" +
                                           std::to_string(rep.pricing_failures) + " of " + std::to_string(n) +
                                           "); last: " + why[i],
                                       0.0);
            for (std::size_t j = 0; j < kNumInputs; ++j) draws[i][j] = detail::uniform(redraw_rng, eff[j]);
            if (feller == FellerMode::require) rep.feller_redraws += detail::enforce_feller(draws[i], eff, redraw_rng);
            again.push_back(i);
        }
        todo = std::move(again);
    }
    if (report) *report = std::move(rep);
    return out;
}

struct DatasetSplit {
    std::vector<LabeledSample> train, val, test;
};

/// Random partition: floor(0.8n) train, floor(0.1n) validation, the rest test
/// (for other ratios: floor for train and validation, remainder to test).
inline DatasetSplit split(const std::vector<LabeledSample>& samples, std::uint64_t seed,
                          std::array<double, 3> ratios = {0.8, 0.1, 0.1}) {
    if (samples.empty()) throw ParameterError("split: empty dataset");
    const double total = ratios[0] + ratios[1] + ratios[2];
    if (!(ratios[0] > 0.0) || ratios[1] < 0.0 || ratios[2] < 0.0 || std::abs(total - 1.0) > 1e-9)
        throw ParameterError("split: ratios must be non-negative, train > 0, summing to 1");
    const std::size_t n = samples.size();
    const auto n_train = static_cast<std::size_t>(std::floor(ratios[0] * static_cast<double>(n) + 1e-9));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n) + 1e-9)));

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const auto k = static_cast<std::size_t>(detail::uniform01(rng) * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(k, i - 1)]);
    }
    DatasetSplit out;
    for (std::size_t k = 0; k < n; ++k) {
        auto& dst = k < n_train ? out.train : (k < n_train + n_val ? out.val : out.test);
        dst.push_back(samples[idx[k]]);
    }
    return out;
}

struct NormalisationStats {
    Vec8 x_mean{}, x_std{};
    double y_mean = 0.0, y_std = 1.0;
    Vec8 xbar_scale{};  // std(x_j) / std(y)
    Vec8 xbar_norm2{};  // mean square of the normalised differential column

    /// Zero-mean, unit-std stats: normalisation is the identity.
    static NormalisationStats identity() {
        NormalisationStats s;
        s.x_std.fill(1.0);
        s.xbar_scale.fill(1.0);
        s.xbar_norm2.fill(1.0);
        return s;
    }

    void validate() const {
        for (std::size_t j = 0; j < kNumInputs; ++j)
            if (!(x_std[j] > 0.0) || !(xbar_norm2[j] > 0.0) || !std::isfinite(x_mean[j]))
                throw ParameterError("normalisation: degenerate column " + kInputNames[j]);
        if (!(y_std > 0.0)) throw ParameterError("normalisation: label std must be > 0");
    }
};

inline NormalisationStats fit_normaliser(const std::vector<LabeledSample>& train) {
    if (train.size() < 2) throw ParameterError("fit_normaliser: need at least 2 training samples");
    const double n = static_cast<double>(train.size());
    NormalisationStats s;
    auto moments = [&](auto get, double& mean, double& sd) {
        double acc = 0.0;
        for (const auto& t : train) acc += get(t);
        mean = acc / n;
        double var = 0.0;
        for (const auto& t : train) var += (get(t) - mean) * (get(t) - mean);
        sd = std::sqrt(var / n);
    };
    for (std::size_t j = 0; j < kNumInputs; ++j)
        moments([j](const LabeledSample& t) { return t.x[j]; }, s.x_mean[j], s.x_std[j]);
    moments([](const LabeledSample& t) { return t.y; }, s.y_mean, s.y_std);
    if (!(s.y_std > 0.0)) throw ParameterError("fit_normaliser: constant labels");
    for (std::size_t j = 0; j < kNumInputs; ++j) {
        if (!(s.x_std[j] > 0.0)) throw ParameterError("fit_normaliser: constant input " + kInputNames[j]);
        s.xbar_scale[j] = s.x_std[j] / s.y_std;
        double acc = 0.0;
        for (const auto& t : train) acc += (t.xbar[j] * s.xbar_scale[j]) * (t.xbar[j] * s.xbar_scale[j]);
        s.xbar_norm2[j] = acc / n;
        if (!(s.xbar_norm2[j] > 0.0)) throw ParameterError("fit_normaliser: all-zero differential " + kInputNames[j]);
    }
    return s;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Normalised arrays: X and Xbar are n x 8, Y is n x 1.
struct NormalisedSet {
    RowMatrix X, Y, Xbar;
    Eigen::Index size() const { return X.rows(); }
};

inline Vec8 normalise_x(const NormalisationStats& s, const Vec8& x) {
    Vec8 out;
    for (std::size_t j = 0; j < kNumInputs; ++j) out[j] = (x[j] - s.x_mean[j]) / s.x_std[j];
    return out;
}

inline NormalisedSet normalise(const NormalisationStats& s, const std::vector<LabeledSample>& samples) {
    const auto n = static_cast<Eigen::Index>(samples.size());
    NormalisedSet out{RowMatrix(n, kNumInputs), RowMatrix(n, 1), RowMatrix(n, kNumInputs)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = samples[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < kNumInputs; ++j) {
            const auto c = static_cast<Eigen::Index>(j);
            out.X(i, c) = (t.x[j] - s.x_mean[j]) / s.x_std[j];
            out.Xbar(i, c) = t.xbar[j] * s.xbar_scale[j];
        }
        out.Y(i, 0) = (t.y - s.y_mean) / s.y_std;
    }
    return out;
}

inline std::vector<LabeledSample> invert(const NormalisationStats& s, const NormalisedSet& set) {
    std::vector<LabeledSample> out(static_cast<std::size_t>(set.size()));
    for (Eigen::Index i = 0; i < set.size(); ++i) {
        auto& t = out[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < kNumInputs; ++j) {
            const auto c = static_cast<Eigen::Index>(j);
            t.x[j] = set.X(i, c) * s.x_std[j] + s.x_mean[j];
            t.xbar[j] = set.Xbar(i, c) / s.xbar_scale[j];
        }
        t.y = set.Y(i, 0) * s.y_std + s.y_mean;
    }
    return out;
}

inline nlohmann::json to_json(const NormalisationStats& s) {
    return {{"x_mean", s.x_mean},         {"x_std", s.x_std},           {"y_mean", s.y_mean},
            {"y_std", s.y_std},           {"xbar_scale", s.xbar_scale}, {"xbar_norm2", s.xbar_norm2}};
}

inline NormalisationStats stats_from_json(const nlohmann::json& j) {
    NormalisationStats s;
    s.x_mean = j.at("x_mean").get<Vec8>();
    s.x_std = j.at("x_std").get<Vec8>();
    s.y_mean = j.at("y_mean").get<double>();
    s.y_std = j.at("y_std").get<double>();
    s.xbar_scale = j.at("xbar_scale").get<Vec8>();
    s.xbar_norm2 = j.at("xbar_norm2").get<Vec8>();
    s.validate();
    return s;
}

// ---- CSV ----

inline const std::string kDatasetHeader =
    "m,tau,r,kappa,v0,theta,sigma,rho,price,d_m,d_tau,d_r,d_kappa,d_v0,d_theta,d_sigma,d_rho";

inline void write_dataset_csv(std::ostream& out, const std::vector<LabeledSample>& samples) {
    out << kDatasetHeader << '\n';
    for (const auto& s : samples) {
        for (double v : s.x) out << io::fmt17(v) << ',';
        out << io::fmt17(s.y);
        for (double v : s.xbar) out << ',' << io::fmt17(v);
        out << '\n';
    }
}

inline void write_dataset_csv(const std::string& path, const std::vector<LabeledSample>& samples) {
    auto out = io::open_out(path);
    write_dataset_csv(out, samples);
    if (!out) throw FormatError("failed writing '" + path + "'");
}

inline std::vector<LabeledSample> read_dataset_csv(std::istream& in, const std::string& name = "dataset") {
    std::string line;
    if (!std::getline(in, line) || io::trim(line) != kDatasetHeader)
        throw FormatError(name + ": missing or unexpected header");
    std::vector<LabeledSample> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (io::trim(line).empty()) continue;
        const auto f = io::split(line);
        if (f.size() != 17) throw FormatError(name + ":" + std::to_string(lineno) + ": expected 17 fields");
        LabeledSample s;
        const std::string ctx = name + ":" + std::to_string(lineno);
        for (std::size_t j = 0; j < kNumInputs; ++j) s.x[j] = io::to_double(f[j], ctx);
        s.y = io::to_double(f[8], ctx);
        for (std::size_t j = 0; j < kNumInputs; ++j) s.xbar[j] = io::to_double(f[9 + j], ctx);
        out.push_back(s);
    }
    return out;
}

inline std::vector<LabeledSample> read_dataset_csv(const std::string& path) {
    auto in = io::open_in(path);
    return read_dataset_csv(in, path);
}

struct DatasetMeta {
    SamplingRanges ranges;
    std::uint64_t seed = 0;
    FellerMode feller = FellerMode::require;
    std::size_t n = 0;
    std::uint64_t split_seed = 0;
    NormalisationStats stats;
};

inline nlohmann::json to_json(const DatasetMeta& m) {
    return {{"ranges", to_json(m.ranges)}, {"seed", m.seed},           {"feller_mode", to_string(m.feller)},
            {"n", m.n},                    {"split_seed", m.split_seed}, {"normalisation", to_json(m.stats)}};
}

}  // namespace hestondml
