#pragma once

// Market inputs: put-quote files, business-day maturities, Treasury yield
// points and the Nelson-Siegel-Svensson curve.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <json.hpp>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "hestondml/calibrate.hpp"
#include "hestondml/io.hpp"
#include "hestondml/optim.hpp"

namespace hestondml {

// ---- dates ----

using Date = std::chrono::year_month_day;

inline Date parse_date(const std::string& s) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3)
        throw FormatError("bad date '" + s + "' (expected YYYY-MM-DD)");
    const Date date{std::chrono::year(y), std::chrono::month(m), std::chrono::day(d)};
    if (!date.ok()) throw FormatError("invalid calendar date '" + s + "'");
    return date;
}

inline std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

class HolidayCalendar {
public:
    HolidayCalendar() = default;
    explicit HolidayCalendar(const std::vector<Date>& days) {
        for (const auto& d : days) days_.insert(std::chrono::sys_days(d).time_since_epoch().count());
    }

    /// One YYYY-MM-DD per line; blank lines and '#' comments ignored.
    static HolidayCalendar read(std::istream& in) {
        std::vector<Date> days;
        std::string line;
        while (std::getline(in, line)) {
            auto t = io::trim(line.substr(0, line.find('#')));
            if (!t.empty()) days.push_back(parse_date(t));
        }
        return HolidayCalendar(days);
    }
    static HolidayCalendar read(const std::string& path) {
        auto in = io::open_in(path);
        return read(in);
    }

    bool is_business_day(std::chrono::sys_days d) const {
        const std::chrono::weekday wd{d};
        if (wd == std::chrono::Saturday || wd == std::chrono::Sunday) return false;
        return !days_.count(d.time_since_epoch().count());
    }

private:
    std::set<long> days_;
};

/// Business days in [from, to): weekends and holidays excluded; negative when to < from.
inline long business_days(const Date& from, const Date& to, const HolidayCalendar& cal) {
    auto a = std::chrono::sys_days(from), b = std::chrono::sys_days(to);
    long sign = 1;
    if (b < a) {
        std::swap(a, b);
        sign = -1;
    }
    long n = 0;
    for (auto d = a; d < b; d += std::chrono::days(1))
        if (cal.is_business_day(d)) ++n;
    return sign * n;
}

/// The date reached after `n` business days from `from` (n >= 0).
inline Date add_business_days(const Date& from, long n, const HolidayCalendar& cal) {
    auto d = std::chrono::sys_days(from);
    while (!cal.is_business_day(d)) d += std::chrono::days(1);
    for (long k = 0; k < n;) {
        d += std::chrono::days(1);
        if (cal.is_business_day(d)) ++k;
    }
    return Date{d};
}

inline constexpr double kTradingDaysPerYear = 252.0;
inline constexpr double kMinMaturity = 0.05;

// ---- quotes ----

struct RawPutQuote {
    Date expiry;
    double strike = 0.0;
    double bid = 0.0;
    double ask = 0.0;
};

inline const std::string kQuoteHeader = "expiry,strike,bid,ask";

struct LoadReport {
    std::size_t rows = 0;
    std::size_t malformed = 0;
    std::size_t dropped_zero_quote = 0;
    std::size_t dropped_short_maturity = 0;
    std::vector<std::string> warnings;
};

/// Reads `expiry,strike,bid,ask` rows (header optional). Malformed rows are
/// reported; more than 5% malformed aborts.
inline std::vector<RawPutQuote> read_raw_quotes(std::istream& in, LoadReport& rep, const std::string& name = "quotes") {
    std::vector<RawPutQuote> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = io::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (lineno == 1 && t.rfind("expiry", 0) == 0) continue;
        ++rep.rows;
        const auto f = io::split(t);
        RawPutQuote q;
        bool ok = f.size() == 4;
        if (ok) {
            try {
                q.expiry = parse_date(f[0]);
            } catch (const FormatError&) {
                ok = false;
            }
            ok = ok && io::parse_double(f[1], q.strike) && io::parse_double(f[2], q.bid) && io::parse_double(f[3], q.ask);
            // A zero side is a valid (empty) quote and is filtered later; a crossed book is not.
            ok = ok && q.strike > 0.0 && q.bid >= 0.0 && q.ask >= 0.0 && std::isfinite(q.ask) &&
                 (q.ask == 0.0 || q.bid == 0.0 || q.ask >= q.bid);
        }
        if (!ok) {
            ++rep.malformed;
            rep.warnings.push_back(name + ":" + std::to_string(lineno) + ": malformed row skipped");
            continue;
        }
        out.push_back(q);
    }
    if (rep.rows > 0 && static_cast<double>(rep.malformed) > 0.05 * static_cast<double>(rep.rows))
        throw FormatError(name + ": " + std::to_string(rep.malformed) + " of " + std::to_string(rep.rows) +
                          " rows malformed (limit 5%)");
    return out;
}

/// Quotes with business-day maturities (/252), zero bids or asks dropped,
/// maturities <= 0.05 dropped, mid prices and integer strikes. Rates are left
/// at 0 until attached from a curve or a rates file.
inline QuoteSet build_quotes(const std::vector<RawPutQuote>& raw, const Date& valuation, double spot,
                             const HolidayCalendar& cal, LoadReport* rep = nullptr) {
    if (!(spot > 0.0)) throw ParameterError("load_quotes: spot must be > 0");
    QuoteSet qs;
    qs.spot = spot;
    for (const auto& r : raw) {
        if (r.bid == 0.0 || r.ask == 0.0) {
            if (rep) ++rep->dropped_zero_quote;
            continue;
        }
        const double tau = static_cast<double>(business_days(valuation, r.expiry, cal)) / kTradingDaysPerYear;
        if (!(tau > kMinMaturity)) {
            if (rep) ++rep->dropped_short_maturity;
            continue;
        }
        qs.quotes.push_back({tau, std::trunc(r.strike), 0.5 * (r.bid + r.ask), 0.0});
    }
    return qs;
}

inline QuoteSet load_quotes(const std::string& path, const Date& valuation, double spot, const HolidayCalendar& cal,
                            LoadReport* report = nullptr) {
    LoadReport local;
    LoadReport& rep = report ? *report : local;
    auto in = io::open_in(path);
    const auto raw = read_raw_quotes(in, rep, path);
    return build_quotes(raw, valuation, spot, cal, &rep);
}

// ---- yield curve ----

struct NssParams {
    double b0 = 0.0, b1 = 0.0, b2 = 0.0, b3 = 0.0, l1 = 1.0, l2 = 5.0;
};

namespace detail {
// (1 - e^{-x}) / x with its limit at 0.
inline double nss_f1(double x) { return std::abs(x) < 1e-8 ? 1.0 - 0.5 * x : -std::expm1(-x) / x; }
inline double nss_f2(double x) { return nss_f1(x) - std::exp(-x); }
}  // namespace detail

inline double nss_rate(const NssParams& p, double tau) {
    if (!(tau > 0.0)) throw ParameterError("yield curve: maturity must be > 0");
    const double x1 = tau / p.l1, x2 = tau / p.l2;
    return p.b0 + p.b1 * detail::nss_f1(x1) + p.b2 * detail::nss_f2(x1) + p.b3 * detail::nss_f2(x2);
}

struct YieldPoint {
    double tau = 0.0;
    double rate = 0.0;  ///< decimal
};

struct YieldCurve {
    NssParams params;
    std::vector<YieldPoint> points;
    double rms = 0.0;

    double rate_at(double tau) const { return nss_rate(params, tau); }
};

/// The Daily Treasury Par Yield Curve of 2022-10-08, in percent.
inline std::vector<YieldPoint> treasury_points_2022_10_08_percent() {
    return {{1.0 / 12, 2.24}, {2.0 / 12, 2.43}, {3.0 / 12, 2.65}, {0.5, 3.13}, {1, 3.26},  {2, 3.23},
            {3, 3.13},        {5, 2.93},        {7, 2.86},        {10, 2.78}, {20, 3.27}, {30, 3.04}};
}

inline std::vector<YieldPoint> percent_to_decimal(std::vector<YieldPoint> pts) {
    for (auto& p : pts) p.rate /= 100.0;
    return pts;
}

namespace detail {

struct BetaFit {
    std::array<double, 4> beta{};
    double rms = std::numeric_limits<double>::infinity();
};

// Betas by linear least squares for fixed decay parameters.
inline BetaFit fit_betas(const std::vector<YieldPoint>& pts, double l1, double l2) {
    BetaFit out;
    if (!(l1 > 0.0) || !(l2 > 0.0)) return out;
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXd A(n, 4);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = pts[static_cast<std::size_t>(i)].tau;
        A(i, 0) = 1.0;
        A(i, 1) = nss_f1(t / l1);
        A(i, 2) = nss_f2(t / l1);
        A(i, 3) = nss_f2(t / l2);
        y[i] = pts[static_cast<std::size_t>(i)].rate;
    }
    const Eigen::VectorXd b = A.completeOrthogonalDecomposition().solve(y);
    if (!b.allFinite()) return out;
    for (int k = 0; k < 4; ++k) out.beta[static_cast<std::size_t>(k)] = b[k];
    out.rms = std::sqrt((A * b - y).squaredNorm() / static_cast<double>(n));
    return out;
}

}  // namespace detail

/// NSS fit: betas by linear least squares, decay parameters by Nelder-Mead on
/// log(lambda) from the starts {0.5, 2, 5} x {1, 5, 10}; best RMS wins.
inline YieldCurve fit_nss(const std::vector<YieldPoint>& pts) {
    if (pts.size() < 6) throw ParameterError("fit_nss: need at least 6 points");
    for (const auto& p : pts)
        if (!(p.tau > 0.0) || !std::isfinite(p.rate)) throw ParameterError("fit_nss: maturities must be > 0");
    YieldCurve best;
    best.points = pts;
    best.rms = std::numeric_limits<double>::infinity();
    auto f = [&](const Eigen::VectorXd& x) {
        if (std::abs(x[0]) > 8.0 || std::abs(x[1]) > 8.0) return 1e6;
        return detail::fit_betas(pts, std::exp(x[0]), std::exp(x[1])).rms;
    };
    NelderMeadConfig cfg;
    cfg.xtol = 1e-10;
    cfg.ftol = 1e-14;
    cfg.max_iter = 2000;
    for (double s1 : {0.5, 2.0, 5.0})
        for (double s2 : {1.0, 5.0, 10.0}) {
            const auto r = nelder_mead(f, Eigen::Vector2d(std::log(s1), std::log(s2)), cfg);
            const double l1 = std::exp(r.x[0]), l2 = std::exp(r.x[1]);
            const auto fit = detail::fit_betas(pts, l1, l2);
            if (std::isfinite(fit.rms) && fit.rms < best.rms) {
                best.params = {fit.beta[0], fit.beta[1], fit.beta[2], fit.beta[3], l1, l2};
                best.rms = fit.rms;
            }
        }
    if (!std::isfinite(best.rms)) throw DomainError("fit_nss: no start produced a valid fit");
    return best;
}

/// "b0 b1 b2 b3 l1 l2 rms" on one line.
inline void write_curve(std::ostream& out, const YieldCurve& c) {
    const auto& p = c.params;
    out << io::fmt17(p.b0) << ' ' << io::fmt17(p.b1) << ' ' << io::fmt17(p.b2) << ' ' << io::fmt17(p.b3) << ' '
        << io::fmt17(p.l1) << ' ' << io::fmt17(p.l2) << ' ' << io::fmt17(c.rms) << '\n';
}

inline YieldCurve read_curve(std::istream& in) {
    std::string line;
    while (std::getline(in, line) && io::trim(line).empty()) {
    }
    const auto f = io::split(io::trim(line), ' ');
    std::vector<double> v;
    for (const auto& s : f)
        if (!s.empty()) v.push_back(io::to_double(s, "curve"));
    if (v.size() != 7) throw FormatError("curve: expected 7 numbers (b0 b1 b2 b3 l1 l2 rms)");
    YieldCurve c;
    c.params = {v[0], v[1], v[2], v[3], v[4], v[5]};
    c.rms = v[6];
    if (!(c.params.l1 > 0.0) || !(c.params.l2 > 0.0)) throw FormatError("curve: decay parameters must be > 0");
    return c;
}

/// `tau_years,rate` rows (decimal rates).
inline std::vector<YieldPoint> read_rates_csv(std::istream& in, const std::string& name = "rates") {
    std::vector<YieldPoint> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = io::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (lineno == 1 && t.rfind("tau", 0) == 0) continue;
        const auto f = io::split(t);
        if (f.size() != 2) throw FormatError(name + ":" + std::to_string(lineno) + ": expected tau_years,rate");
        const std::string ctx = name + ":" + std::to_string(lineno);
        out.push_back({io::to_double(f[0], ctx), io::to_double(f[1], ctx)});
    }
    if (out.empty()) throw FormatError(name + ": no rates");
    std::sort(out.begin(), out.end(), [](const YieldPoint& a, const YieldPoint& b) { return a.tau < b.tau; });
    return out;
}

inline void attach_rates(QuoteSet& qs, const YieldCurve& curve) {
    for (auto& q : qs.quotes) q.rate = curve.rate_at(q.maturity);
}

/// Rates-file mode: a maturity within 1e-6 of a file entry takes that rate
/// verbatim; others interpolate linearly (flat beyond the ends).
inline double rate_from_table(const std::vector<YieldPoint>& table, double tau) {
    if (table.empty()) throw ParameterError("rates table is empty");
    for (const auto& p : table)
        if (std::abs(p.tau - tau) <= 1e-6) return p.rate;
    if (tau <= table.front().tau) return table.front().rate;
    if (tau >= table.back().tau) return table.back().rate;
    std::size_t k = 1;
    while (table[k].tau < tau) ++k;
    const auto& a = table[k - 1];
    const auto& b = table[k];
    return a.rate + (b.rate - a.rate) * (tau - a.tau) / (b.tau - a.tau);
}

inline void attach_rates(QuoteSet& qs, const std::vector<YieldPoint>& table) {
    for (auto& q : qs.quotes) q.rate = rate_from_table(table, q.maturity);
}

// ---- synthetic quotes ----

struct SynthesisOptions {
    double noise = 0.0;  ///< half-spread as a fraction of the price; 0 gives bid = ask = model price
    std::uint64_t seed = 0;
};

struct SyntheticQuotes {
    std::vector<RawPutQuote> raw;
    QuoteSet quotes;  ///< what load_quotes will read back (mid prices, rates attached)
    bool feller_satisfied = true;
};

/// Model put quotes on a maturity x strike grid. Expiries are placed
/// round(tau * 252) business days after the valuation date, so the loaded
/// maturities are the grid values up to 1/252 rounding.
inline SyntheticQuotes synthesize_quotes(const HestonParams& params, const std::vector<double>& maturities,
                                         const std::vector<double>& strikes, double spot, const YieldCurve& curve,
                                         const Date& valuation, const HolidayCalendar& cal,
                                         const SynthesisOptions& opt = {}, const QuadratureConfig& quad = {}) {
    if (!(spot > 0.0)) throw ParameterError("synthesize_quotes: spot must be > 0");
    if (opt.noise < 0.0 || opt.noise >= 1.0) throw ParameterError("synthesize_quotes: noise must lie in [0, 1)");
    SyntheticQuotes out;
    out.feller_satisfied = params.feller_satisfied();
    out.quotes.spot = spot;
    std::mt19937_64 rng(opt.seed);
    for (double tau_req : maturities) {
        if (!(tau_req > 0.0)) throw ParameterError("synthesize_quotes: maturities must be > 0");
        const long days = std::lround(tau_req * kTradingDaysPerYear);
        const Date expiry = add_business_days(valuation, days, cal);
        const double tau = static_cast<double>(business_days(valuation, expiry, cal)) / kTradingDaysPerYear;
        const double r = curve.rate_at(tau);
        for (double k : strikes) {
            const double strike = std::trunc(k);
            if (!(strike > 0.0)) throw ParameterError("synthesize_quotes: strikes must be >= 1");
            const double price = put_price({std::log(spot / strike), tau, r}, params, strike, quad);
            double bid = price, ask = price;
            if (opt.noise > 0.0) {
                const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
                const double half = opt.noise * price * (0.5 + u);
                bid = price - half;
                ask = price + half;
            }
            out.raw.push_back({expiry, strike, bid, ask});
            if (tau > kMinMaturity && bid > 0.0) out.quotes.quotes.push_back({tau, strike, 0.5 * (bid + ask), r});
        }
    }
    return out;
}

inline void write_raw_quotes(std::ostream& out, const std::vector<RawPutQuote>& raw) {
    out << kQuoteHeader << '\n';
    for (const auto& q : raw)
        out << format_date(q.expiry) << ',' << io::fmt17(q.strike) << ',' << io::fmt17(q.bid) << ','
            << io::fmt17(q.ask) << '\n';
}

}  // namespace hestondml
