// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [--cache-dir DIR] [--only 1,7,14] [--threads N]
//
// The 16,384-sample dataset is cached in the cache directory (it takes a few
// minutes to label on one core); delete it to regenerate.

#include <sys/wait.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hestondml/hestondml.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace hestondml;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}
std::string sci(double v) { return fmt("%.3e", v); }

// ---- shared fixtures ----

struct Shared {
    fs::path cache;
    unsigned threads = 1;

    // 200 Latin-hypercube points over the full sampling box (Feller not imposed).
    const std::vector<Vec8>& lhs_points() {
        if (!lhs_) lhs_ = lhs_sample(200, SamplingRanges{}.with_positive_variance(), 20240601);
        return *lhs_;
    }

    static constexpr std::uint64_t kDataSeed = 3283;

    const std::vector<LabeledSample>& dataset() {
        if (data_) return *data_;
        fs::create_directories(cache);
        const fs::path file = cache / "heston_16384_feller_seed3283.csv";
        if (fs::exists(file)) {
            data_ = read_dataset_csv(file.string());
            if (data_->size() == 16384) return *data_;
        }
        std::cerr << "labelling 16384 samples (cached at " << file << ")\n";
        GenerateReport rep;
        data_ = generate(16384, SamplingRanges{}, FellerMode::require, QuadratureConfig{}, kDataSeed, threads, &rep);
        write_dataset_csv(file.string(), *data_);
        return *data_;
    }

    const DatasetSplit& splits() {
        if (!splits_) splits_ = split(dataset(), kDataSeed);
        return *splits_;
    }

    // 200 epochs at a constant 1e-3 on the default 4x50 network and batch layout.
    static TrainingConfig long_schedule(double lambda) {
        TrainingConfig c;
        c.epochs = 200;
        c.lr = LrSchedule::constant(1e-3);
        c.lambda = lambda;
        c.value_only = lambda == 0.0;
        c.seed = kDataSeed;
        return c;
    }

    const TrainResult& dml() {
        if (!dml_) dml_ = train(splits(), NetworkSpec{}, long_schedule(1.0));
        return *dml_;
    }
    const TrainResult& classical() {
        if (!classical_) classical_ = train(splits(), NetworkSpec{}, long_schedule(0.0));
        return *classical_;
    }

    // Criterion-10 quote set, shared with the timing comparison.
    static constexpr double kSpot = 100.0;
    static HestonParams reference_params() { return {1.4719, 0.1072, 1.5986, -0.3899, 1.12e-5}; }
    static HestonParams perturbed_start() {
        const auto p = reference_params();
        return {1.2 * p.kappa, 0.8 * p.theta, 1.2 * p.sigma, 0.8 * p.rho, 1.2 * p.v0};
    }

    const QuoteSet& round_trip_quotes() {
        if (quotes_) return *quotes_;
        const Date valuation = parse_date("2022-10-07");
        const HolidayCalendar cal;
        const auto curve = fit_nss(percent_to_decimal(treasury_points_2022_10_08_percent()));
        std::vector<double> strikes;
        for (int k = 0; k < 15; ++k) strikes.push_back(80.0 + 3.0 * k);
        const auto syn = synthesize_quotes(reference_params(), {0.25, 0.5, 1.0, 2.0, 3.0}, strikes, kSpot, curve,
                                           valuation, cal);
        // Through the quote file format and back, as a user would.
        std::stringstream file;
        write_raw_quotes(file, syn.raw);
        LoadReport rep;
        quotes_ = build_quotes(read_raw_quotes(file, rep), valuation, kSpot, cal);
        attach_rates(*quotes_, curve);
        return *quotes_;
    }

private:
    std::optional<std::vector<Vec8>> lhs_;
    std::optional<std::vector<LabeledSample>> data_;
    std::optional<DatasetSplit> splits_;
    std::optional<TrainResult> dml_, classical_;
    std::optional<QuoteSet> quotes_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- criteria ----

// 1. Analytic partials against central finite differences.
Outcome greeks_vs_fd(Shared& s) {
    constexpr double kRel = 1e-4, kAbs = 1e-7, kMaxSeconds = 300.0;
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::size_t bad = 0, failed_pricing = 0;
    std::string where;
    for (const auto& x : s.lhs_points()) {
        Vec8 a{};
        try {
            a = full_gradient(market_point(x), heston_params(x)).in_input_order();
        } catch (const std::exception& e) {
            ++failed_pricing;
            where = e.what();
            continue;
        }
        const auto fd = oracle::fd_gradient(x);
        for (std::size_t j = 0; j < 8; ++j) {
            const double excess = std::abs(a[j] - fd[j]) / std::max(kRel * std::abs(fd[j]), kAbs);
            if (excess > 1.0) ++bad;
            if (excess > worst) {
                worst = excess;
                where = kInputNames[j];
            }
        }
    }
    const double secs = seconds_since(t0);
    return {bad == 0 && failed_pricing == 0 && secs < kMaxSeconds,
            "200 points x 8 partials; " + std::to_string(bad) + " outside tolerance, " +
                std::to_string(failed_pricing) + " unpriceable; worst |a-fd|/max(1e-4|fd|,1e-7) = " +
                fmt("%.3f", worst) + " (" + where + "); " + fmt("%.1f", secs) + " s (limit 300 s)"};
}

// 2. d_r = tau d_m.
Outcome rate_identity(Shared& s) {
    double worst = 0.0;
    std::size_t n = 0;
    auto check = [&](double d_r, double d_m, double tau) {
        const double ref = tau * d_m;
        worst = std::max(worst, std::abs(d_r - ref) / std::max(std::abs(ref), std::numeric_limits<double>::min()));
        ++n;
    };
    for (const auto& x : s.lhs_points()) {
        const auto g = full_gradient(market_point(x), heston_params(x));
        check(g.d_r, g.d_m, x[1]);
    }
    for (const auto& smp : s.dataset()) check(smp.xbar[2], smp.xbar[0], smp.x[1]);
    return {worst <= std::numeric_limits<double>::epsilon(),
            std::to_string(n) + " points; max relative gap " + sci(worst) + " (limit machine epsilon 2.2e-16)"};
}

// 3. Black-Scholes embedding.
Outcome bs_embedding(Shared&) {
    constexpr double kTol = 1e-5;
    const double v = 0.04;
    const HestonParams p{1.5, v, 1e-4, -0.5, v};
    double worst = 0.0;
    int n = 0;
    for (double m : {-1.0, -0.5, 0.0, 0.5, 1.0})
        for (double tau : {0.1, 0.5, 1.0, 2.0, 5.0})
            for (double r : {-0.01, 0.03, 0.1}) {
                const MarketPoint pt{m, tau, r};
                const double h = normalised_forward_put(pt, p);
                const double bs = bs_normalised_forward_put(pt.log_forward_moneyness(), std::sqrt(v), tau);
                worst = std::max(worst, std::abs(h - bs));
                ++n;
            }
    return {worst < kTol, std::to_string(n) + " grid points; max |P^ - BS| = " + sci(worst) + " (limit 1e-5)"};
}

// 4. Monte Carlo oracle.
Outcome monte_carlo(Shared& s) {
    constexpr std::size_t kPaths = 1000000;
    constexpr double kSe = 3.0;
    const auto ranges = SamplingRanges{}.with_positive_variance();
    auto pts = lhs_sample(20, ranges, 777);
    std::mt19937_64 rng(778);
    for (auto& x : pts) detail::enforce_feller(x, ranges, rng);
    double worst = 0.0;
    int outside = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& x = pts[i];
        // At least 800 steps: with fewer, Euler bias on short-dated far out-of-the-money puts reaches 2-3 SE.
        const std::size_t steps = std::max<std::size_t>(800, static_cast<std::size_t>(std::ceil(100.0 * x[1])));
        const auto mc = mc_price(market_point(x), heston_params(x), kPaths, steps, 1000 + i, s.threads);
        const double z = std::abs(normalised_forward_put(market_point(x), heston_params(x)) - mc.estimate) /
                         std::max(mc.std_error, 1e-300);
        worst = std::max(worst, z);
        if (z > kSe) ++outside;
    }
    return {outside == 0, "20 Feller points, 1e6 paths, max(800, 100 tau) steps; " + std::to_string(outside) +
                              " outside 3 SE; worst |P^ - MC| / SE = " + fmt("%.2f", worst)};
}

// 5. Put-call parity against an independent call integral, and no-arbitrage bounds.
Outcome parity_and_bounds(Shared& s) {
    const QuadratureConfig quad;
    const double tol = 2.0 * quad.abs_tol;
    double worst_parity = 0.0, worst_bound = 0.0;
    std::size_t n_parity = 0, n_bounds = 0, skipped = 0;
    auto bound_gap = [](double phat, double F) {
        const double lower = std::max(0.0, -std::expm1(F));
        return std::max({0.0, lower - phat, phat - 1.0});
    };
    for (const auto& x : s.lhs_points()) {
        const auto pt = market_point(x);
        const auto p = heston_params(x);
        const double F = pt.log_forward_moneyness();
        const double phat = normalised_forward_put(pt, p, quad);
        worst_bound = std::max(worst_bound, bound_gap(phat, F));
        ++n_bounds;
        double chat = 0.0;
        try {
            chat = oracle::normalised_forward_call_p1p2(pt, p, quad);
        } catch (const IntegrationError&) {
            ++skipped;  // the 1/u call integrand has a slower tail than the put
            continue;
        }
        // The P1 integral enters scaled by e^F.
        worst_parity = std::max(worst_parity, std::abs(chat - phat - std::expm1(F)) / std::max(1.0, std::exp(F)));
        ++n_parity;
    }
    for (const auto& smp : s.dataset()) {
        worst_bound = std::max(worst_bound, bound_gap(smp.y, smp.x[0] + smp.x[2] * smp.x[1]));
        ++n_bounds;
    }
    // Labels are quadrature results, so the bounds can only hold to the integration tolerance.
    return {worst_parity <= tol && worst_bound <= quad.abs_tol && skipped == 0,
            "parity on " + std::to_string(n_parity) + " points (" + std::to_string(skipped) +
                " call integrals unconverged): max |C^-P^-(e^F-1)|/max(1,e^F) = " + sci(worst_parity) +
                " (limit 2e-10); bounds on " + std::to_string(n_bounds) + " points: max violation " +
                sci(worst_bound) + " (limit 1e-10)"};
}

// 6. Twin-network adjoint against finite differences of the forward pass.
Outcome twin_adjoint(Shared&) {
    constexpr double kRel = 1e-5, kFloor = 1e-3, kH = 1e-6;
    std::vector<std::pair<int, int>> archs = {{1, 1}, {2, 5}, {3, 20}, {4, 50}, {6, 100}};
    std::mt19937_64 rng(606);
    for (int k = 0; k < 5; ++k)
        archs.emplace_back(1 + static_cast<int>(rng() % 6), 1 + static_cast<int>(rng() % 100));
    double worst = 0.0;
    std::string where;
    for (std::size_t a = 0; a < archs.size(); ++a) {
        NetworkSpec spec;
        spec.hidden_layers = archs[a].first;
        spec.neurons = archs[a].second;
        spec.wide_deep = a % 2 == 1;
        Network net = init_network(spec, 100 + a);
        if (spec.wide_deep) net.params.wide = RowMatrix::Random(spec.n_inputs, 1);
        for (auto& b : net.params.b) b = 0.1 * RowMatrix::Random(b.rows(), b.cols());
        const RowMatrix X = RowMatrix::Random(8, spec.n_inputs);
        ForwardCache cache;
        forward(net, X, &cache);
        const RowMatrix g = adjoint(net, cache);
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            for (Eigen::Index j = 0; j < X.cols(); ++j) {
                RowMatrix up = X.row(i), dn = X.row(i);
                up(0, j) += kH;
                dn(0, j) -= kH;
                const double fd = (forward(net, up)(0, 0) - forward(net, dn)(0, 0)) / (2.0 * kH);
                const double err = std::abs(g(i, j) - fd) / std::max(std::abs(fd), kFloor);
                if (err > worst) {
                    worst = err;
                    where = std::to_string(spec.hidden_layers) + "x" + std::to_string(spec.neurons);
                }
            }
    }
    return {worst <= kRel, std::to_string(archs.size()) + " architectures up to 6x100 (half wide & deep); max " +
                               "|adjoint-fd|/max(|fd|,1e-3) = " + sci(worst) + " at " + where + " (limit 1e-5)"};
}

// 7. DML accuracy and ordering against the classical network.
Outcome dml_vs_classical(Shared& s) {
    const double dml = mse_bp(s.dml().checkpoint, s.splits().test);
    const double cls = mse_bp(s.classical().checkpoint, s.splits().test);
    return {dml <= 1.5 && dml < cls, "16,384 Feller samples, 4x50 softplus, 200 epochs at lr 1e-3; test MSE DML " +
                                         fmt("%.4f", dml) + " bp (limit 1.5), classical " + fmt("%.4f", cls) + " bp"};
}

// 8. At least a factor of two from the differential labels.
Outcome small_data_advantage(Shared& s) {
    const double dml = mse_bp(s.dml().checkpoint, s.splits().test);
    const double cls = mse_bp(s.classical().checkpoint, s.splits().test);
    return {2.0 * dml <= cls, "classical / DML test MSE = " + fmt("%.3f", cls / dml) + " (limit >= 2)"};
}

// 9. Gradient clipping at 4 on the 6x50 configuration.
Outcome gradient_clipping(Shared& s) {
    constexpr double kClip = 4.0;
    NetworkSpec spec;
    spec.hidden_layers = 6;
    spec.neurons = 50;
    int clipped_wins = 0;
    double max_norm = 0.0;
    std::size_t events = 0;
    std::ostringstream d;
    for (std::uint64_t seed : {1, 2, 3}) {
        TrainingConfig c;
        c.epochs = 97;
        c.lr = LrSchedule::constant(1e-2);
        c.seed = seed;
        const auto plain = train(s.splits(), spec, c);
        c.grad_clip = kClip;
        const auto clipped = train(s.splits(), spec, c);
        max_norm = std::max(max_norm, clipped.max_clipped_norm);
        events += clipped.clip_events;
        const double a = mse_bp(clipped.checkpoint, s.splits().test);
        const double b = mse_bp(plain.checkpoint, s.splits().test);
        if (a <= b) ++clipped_wins;
        d << " seed " << seed << ": " << fmt("%.3f", a) << " vs " << fmt("%.3f", b) << " bp;";
    }
    return {max_norm <= kClip + 1e-9 && clipped_wins >= 2,
            "6x50, lr 1e-2, 97 epochs;" + d.str() + " clipped <= unclipped on " + std::to_string(clipped_wins) +
                "/3 seeds; " + std::to_string(events) + " clip events, max post-clip norm " + fmt("%.12g", max_norm)};
}

// 10. Round-trip calibration through the quote file format.
Outcome round_trip_calibration(Shared& s) {
    CalibrationProblem prob;
    prob.quotes = s.round_trip_quotes();
    NelderMeadConfig nm;
    nm.xtol = nm.ftol = 1e-6;
    nm.max_iter = 20000;
    const auto r = calibrate_nelder_mead(prob, Shared::perturbed_start(), nm);
    const auto t = Shared::reference_params();
    const double errs[5] = {std::abs(r.params.kappa - t.kappa), std::abs(r.params.theta - t.theta),
                            std::abs(r.params.sigma - t.sigma), std::abs(r.params.rho - t.rho),
                            std::abs(r.params.v0 - t.v0)};
    const double worst = *std::max_element(std::begin(errs), std::end(errs));
    std::ostringstream d;
    d << prob.quotes.quotes.size() << " quotes (5 maturities x 15 strikes); " << r.iterations
      << " iterations; max |param error| " << sci(worst) << " (limit 1e-2); objective " << sci(r.objective)
      << " (limit 1e-6); market-file comparison not applicable (no quote files supplied)";
    return {worst <= 1e-2 && r.objective < 1e-6, d.str()};
}

// 11. Network backend speed-up on the same problem and optimizer.
Outcome backend_speedup(Shared& s) {
    CalibrationProblem prob;
    prob.quotes = s.round_trip_quotes();
    NelderMeadConfig nm;
    nm.xtol = nm.ftol = 0.0;  // fixed budget: both backends run every iteration
    nm.max_iter = 300;
    const auto a = calibrate_nelder_mead(prob, Shared::perturbed_start(), nm);
    prob.backend = Backend::network;
    prob.network = &s.dml().checkpoint;
    const auto b = calibrate_nelder_mead(prob, Shared::perturbed_start(), nm);
    const double ratio = a.seconds / b.seconds;
    const double per_eval = (a.seconds / static_cast<double>(a.evaluations)) /
                            (b.seconds / static_cast<double>(b.evaluations));
    return {ratio >= 5.0, "Nelder-Mead, 300 iterations each: analytic " + fmt("%.3f", a.seconds) + " s, network " +
                              fmt("%.4f", b.seconds) + " s, ratio " + fmt("%.1f", ratio) +
                              " (limit >= 5); per evaluation " + fmt("%.1f", per_eval)};
}

// 12. Differential evolution on Rastrigin.
Outcome de_rastrigin(Shared& s) {
    auto rastrigin = [](const Eigen::VectorXd& x) {
        double v = 10.0 * static_cast<double>(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) v += x[i] * x[i] - 10.0 * std::cos(2.0 * std::numbers::pi * x[i]);
        return v;
    };
    std::ostringstream d;
    bool ok = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        DeConfig cfg;
        cfg.strategy = DeStrategy::best1bin;
        cfg.population = 50;
        cfg.F = 0.5;
        cfg.Cr = 0.7;
        cfg.generations = 200;
        cfg.seed = seed;
        cfg.threads = s.threads;
        const auto r = differential_evolution(rastrigin, Eigen::VectorXd::Constant(3, -5.12),
                                              Eigen::VectorXd::Constant(3, 5.12), cfg);
        const double dist = r.x.cwiseAbs().maxCoeff();
        ok = ok && dist <= 1e-3 && r.iterations <= 200;
        d << " seed " << seed << ": |x|max " << sci(dist) << " in " << r.iterations << " gen;";
    }
    return {ok, "3-d Rastrigin on [-5.12, 5.12]^3, pop 50, F 0.5, Cr 0.7 (limit |x| <= 1e-3);" + d.str()};
}

// 13. Nelson-Siegel-Svensson fits.
Outcome nss_fits(Shared&) {
    const NssParams truth{0.035, -0.015, 0.02, -0.01, 1.2, 6.0};
    std::vector<YieldPoint> pts;
    for (const auto& q : treasury_points_2022_10_08_percent()) pts.push_back({q.tau, nss_rate(truth, q.tau)});
    const auto self = fit_nss(pts);
    double worst = 0.0;
    for (const auto& q : pts) worst = std::max(worst, std::abs(self.rate_at(q.tau) - q.rate));
    const auto treasury = fit_nss(percent_to_decimal(treasury_points_2022_10_08_percent()));
    return {worst <= 1e-6 && treasury.rms < 30e-4, "self-fit max |rate error| " + sci(worst) +
                                                       " (limit 1e-6); Treasury 12-point RMS " +
                                                       fmt("%.2f", treasury.rms * 1e4) + " bp (limit 30)"};
}

// 14. Byte-identical re-runs of every CLI stage from its manifest.
int sh(const std::string& cmd) {
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && !e.path().filename().string().starts_with("timing"))
            files[fs::relative(e.path(), dir).string()] = io::read_file(e.path().string());
    return files;
}

Outcome manifest_determinism(Shared& s) {
    const fs::path root = s.cache / "determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string cli = std::string("\"") + HESTONDML_CLI_PATH + "\" --quiet ";
    auto p = [&](const std::string& rel) { return "\"" + (root / rel).string() + "\""; };
    {
        std::ofstream space((root / "space.json").string());
        space << R"({"hidden_layers": [1, 2], "neurons": [8]})" << '\n';
    }
    struct Stage {
        std::string name, args, manifest;
    };
    const std::vector<Stage> stages = {
        {"generate", "generate --n 256 --seed 7 --out " + p("generate/data.csv"), "generate/data.csv.manifest.json"},
        {"train",
         "train --data " + p("generate/data.csv") + " --out " + p("train/model.ckpt") +
             " --hidden-layers 2 --neurons 16 --epochs 5 --batches-per-epoch 4 --batch-size 32 --seed 3",
         "train/model.ckpt.manifest.json"},
        {"evaluate",
         "evaluate --checkpoint " + p("train/model.ckpt") + " --data " + p("generate/data.csv") + " --out " +
             p("evaluate/metrics.csv"),
         "evaluate/metrics.csv.manifest.json"},
        {"gridsearch",
         "gridsearch --space " + p("space.json") + " --data " + p("generate/data.csv") + " --out " +
             p("gridsearch/leaderboard.csv") + " --best-checkpoint " + p("gridsearch/best.ckpt") +
             " --batches-per-epoch 2 --batch-size 32",
         "gridsearch/leaderboard.csv.manifest.json"},
        {"fit-curve", "fit-curve --out " + p("fit-curve/curve.txt"), "fit-curve/curve.txt.manifest.json"},
        {"synthesize",
         "synthesize --kappa 1.4719 --theta 0.1072 --sigma 1.5986 --rho -0.3899 --v0 1.12e-5 --curve " +
             p("fit-curve/curve.txt") + " --noise 0.01 --seed 5 --out " + p("synthesize/quotes.csv"),
         "synthesize/quotes.csv.manifest.json"},
        {"calibrate",
         "calibrate --quotes " + p("synthesize/quotes.csv") + " --curve " + p("fit-curve/curve.txt") +
             " --valuation 2022-10-07 --spot 100 --backend both --checkpoint " + p("train/model.ckpt") +
             " --optimizer de --generations 3 --population 10 --seed 1 --out-dir " + p("calibrate"),
         "calibrate/manifest.json"},
    };
    std::ostringstream d;
    bool ok = true;
    for (const auto& st : stages) {
        const fs::path dir = root / st.name;
        if (sh(cli + st.args + " > /dev/null 2>&1") != 0) {
            return {false, "stage " + st.name + " failed to run"};
        }
        const auto first = snapshot(dir);
        const fs::path manifest = root / st.manifest;
        const fs::path saved = root / (st.name + ".manifest.json");
        fs::copy_file(manifest, saved, fs::copy_options::overwrite_existing);
        fs::remove_all(dir);
        if (sh(cli + "replay \"" + saved.string() + "\" > /dev/null 2>&1") != 0)
            return {false, "replay of " + st.name + " failed"};
        const auto second = snapshot(dir);
        const bool same = first == second && !first.empty();
        ok = ok && same;
        d << ' ' << st.name << (same ? " identical" : " DIFFERS") << " (" << first.size() << " files);";
    }
    return {ok, "CLI stages re-run from their manifests:" + d.str()};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hestondml acceptance suite"};
    Shared shared;
    std::string cache = "acceptance_cache";
    std::vector<int> only;
    shared.threads = default_threads();
    app.add_option("--cache-dir", cache, "directory for cached datasets and scratch files");
    app.add_option("--only", only, "run only these criteria")->delimiter(',');
    app.add_option("--threads", shared.threads, "worker threads");
    CLI11_PARSE(app, argc, argv);
    shared.cache = cache;
    fs::create_directories(shared.cache);

    const std::vector<std::pair<std::string, std::function<Outcome(Shared&)>>> criteria = {
        {"greeks match finite differences", greeks_vs_fd},
        {"d_r equals tau d_m", rate_identity},
        {"Black-Scholes embedding", bs_embedding},
        {"Monte Carlo oracle", monte_carlo},
        {"parity and bounds", parity_and_bounds},
        {"twin-network adjoint", twin_adjoint},
        {"DML vs classical", dml_vs_classical},
        {"small-data advantage", small_data_advantage},
        {"gradient clipping", gradient_clipping},
        {"round-trip calibration", round_trip_calibration},
        {"network backend speed-up", backend_speedup},
        {"differential evolution on Rastrigin", de_rastrigin},
        {"Nelson-Siegel-Svensson fits", nss_fits},
        {"manifest determinism", manifest_determinism},
    };
    const std::set<int> selected(only.begin(), only.end());
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second(shared);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("[%s] %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
