// hestondml command-line tool: pricing, dataset generation, training,
// evaluation, calibration, grid search and yield-curve utilities.
//
// Exit codes: 0 success, 1 domain or numerical failure, 2 usage error.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hestondml/hestondml.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hestondml;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    unsigned threads = 0;
    bool quiet = false;

    unsigned worker_count() const { return threads > 0 ? threads : default_threads(); }
};

// ---- small helpers ----

std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    for (const auto& f : io::split(text))
        if (!f.empty()) out.push_back(io::to_double(f, what));
    if (out.empty()) throw UsageError(what + ": empty list");
    return out;
}

// "lo:hi:n" -> n evenly spaced values, or a comma list.
std::vector<double> parse_grid(const std::string& text, const std::string& what) {
    if (text.find(':') == std::string::npos) return parse_list(text, what);
    const auto f = io::split(text, ':');
    if (f.size() != 3) throw UsageError(what + ": expected lo:hi:n");
    const double lo = io::to_double(f[0], what), hi = io::to_double(f[1], what);
    const int n = static_cast<int>(io::to_double(f[2], what));
    if (n < 1 || hi < lo) throw UsageError(what + ": need n >= 1 and hi >= lo");
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
    return out;
}

// key=value lines; blank lines, '#' comments and [section] headers ignored.
std::map<std::string, std::string> read_key_values(const std::string& path) {
    std::map<std::string, std::string> kv;
    std::istringstream in(io::read_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = io::trim(line.substr(0, line.find('#')));
        if (t.empty() || t.front() == '[') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw FormatError(path + ":" + std::to_string(lineno) + ": expected key=value");
        kv[io::trim(t.substr(0, eq))] = io::trim(t.substr(eq + 1));
    }
    return kv;
}

void write_text(const std::string& path, const std::string& text) {
    if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    auto out = io::open_out(path);
    out << text;
    if (!out) throw FormatError("failed writing '" + path + "'");
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string num(double v) { return io::fmt17(v); }

// Explicitly set options of a subcommand, as an argument list that replays the run.
std::vector<std::string> resolved_args(const CLI::App* sub) {
    std::vector<std::string> argv{sub->get_name()};
    for (const CLI::Option* o : sub->get_options()) {
        if (o->get_lnames().empty() || o->count() == 0) continue;
        const std::string name = "--" + o->get_lnames().front();
        if (name == "--help") continue;
        if (o->get_type_size() == 0) {
            if (o->as<bool>()) argv.push_back(name);
            continue;
        }
        for (const auto& r : o->results()) {
            argv.push_back(name);
            argv.push_back(r);
        }
    }
    return argv;
}

// Every option with its effective value (defaults included).
json resolved_options(const CLI::App* sub) {
    json j = json::object();
    for (const CLI::Option* o : sub->get_options()) {
        if (o->get_lnames().empty() || o->get_lnames().front() == "help") continue;
        const auto& key = o->get_lnames().front();
        if (o->count() > 0) {
            if (o->get_type_size() == 0) j[key] = o->as<bool>();
            else j[key] = o->results().size() == 1 ? json(o->results().front()) : json(o->results());
        } else if (!o->get_default_str().empty()) {
            j[key] = o->get_default_str();
        } else {
            j[key] = nullptr;
        }
    }
    return j;
}

// No timestamps or host data: identical inputs give an identical manifest.
void write_manifest(const std::string& path, const CLI::App* sub, json extra = json::object()) {
    json m;
    m["tool"] = "hestondml";
    m["version"] = HESTONDML_VERSION;
    m["subcommand"] = sub->get_name();
    m["argv"] = resolved_args(sub);
    m["options"] = resolved_options(sub);
    m["build"] = {{"compiler", __VERSION__},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)}};
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    write_json(path, m);
}

// Throttled progress line with an ETA on stderr.
class Progress {
public:
    Progress(std::string label, bool quiet) : label_(std::move(label)), quiet_(quiet) {}
    void operator()(std::size_t done, std::size_t total) {
        if (quiet_) return;
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
        const double eta = done > 0 ? secs * static_cast<double>(total - done) / static_cast<double>(done) : 0.0;
        std::fprintf(stderr, "\r%s %zu/%zu (%.0f%%) elapsed %.1fs eta %.1fs", label_.c_str(), done, total,
                     100.0 * static_cast<double>(done) / static_cast<double>(total), secs, eta);
        if (done == total) std::fprintf(stderr, "\n");
        std::fflush(stderr);
    }

private:
    std::string label_;
    bool quiet_;
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

void add_heston_options(CLI::App* s, HestonParams& p, bool required) {
    s->add_option("--kappa", p.kappa, "mean-reversion speed")->required(required);
    s->add_option("--theta", p.theta, "long-term variance")->required(required);
    s->add_option("--sigma", p.sigma, "volatility of variance")->required(required);
    s->add_option("--rho", p.rho, "spot/variance correlation")->required(required);
    s->add_option("--v0", p.v0, "initial variance")->required(required);
}

QuadratureConfig tolerance_config(double tol) {
    QuadratureConfig q;
    q.abs_tol = q.rel_tol = tol;
    return q;
}

// ---- price / greeks ----

struct PointOptions {
    HestonParams params;
    MarketPoint point;
    std::optional<double> strike;
    double tol = 1e-10;
    std::string csv;
};

void add_point_options(CLI::App* s, PointOptions& o) {
    add_heston_options(s, o.params, true);
    s->add_option("--m", o.point.m, "log-moneyness ln(S/K)")->required();
    s->add_option("--tau", o.point.tau, "time to maturity in years")->required();
    s->add_option("--r", o.point.r, "risk-free rate (decimal)")->required();
    s->add_option("--strike", o.strike, "strike K; also prints K e^{-r tau} P^");
    s->add_option("--tol", o.tol, "quadrature tolerance")->capture_default_str();
    s->add_option("--csv", o.csv, "also write the table to this CSV file");
}

int cmd_price(const PointOptions& o) {
    const double phat = normalised_forward_put(o.point, o.params, tolerance_config(o.tol));
    std::ostringstream t;
    t << "quantity,value\n" << "phat," << num(phat) << '\n';
    if (o.strike) t << "put_price," << num(*o.strike * std::exp(-o.point.r * o.point.tau) * phat) << '\n';
    std::cout << t.str();
    if (!o.csv.empty()) write_text(o.csv, t.str());
    return 0;
}

// Central differences on the quadrature partition of a tight solve, so the
// difference quotient sees no adaptive-mesh noise. One-sided next to v0 = 0 or theta = 0.
std::array<double, 8> fd_gradient(const MarketPoint& pt, const HestonParams& p) {
    const auto part = normalised_forward_put_detailed(pt, p, tolerance_config(1e-13)).partition;
    const Vec8 x = {pt.m, pt.tau, pt.r, p.kappa, p.v0, p.theta, p.sigma, p.rho};
    auto f = [&](const Vec8& z) { return normalised_forward_put_on_partition(market_point(z), heston_params(z), part); };
    std::array<double, 8> g{};
    for (std::size_t j = 0; j < 8; ++j) {
        const double h = 1e-5 * std::max(std::abs(x[j]), 0.01);
        Vec8 up = x, dn = x;
        up[j] += h;
        const bool one_sided = (j == 4 || j == 5) && x[j] - h <= 0.0;
        if (one_sided) {
            g[j] = (f(up) - f(x)) / h;
        } else {
            dn[j] -= h;
            g[j] = (f(up) - f(dn)) / (2.0 * h);
        }
    }
    return g;
}

int cmd_greeks(const PointOptions& o, bool check_fd) {
    const auto quad = tolerance_config(o.tol);
    const auto pg = o.params.theta > 0.0 ? price_and_gradient(o.point, o.params, quad)
                                         : PriceAndGradient{normalised_forward_put(o.point, o.params, quad),
                                                            detail::gradient_any_theta(o.point, o.params, quad)};
    const auto g = pg.grad.in_input_order();
    std::array<double, 8> fd{};
    if (check_fd) fd = fd_gradient(o.point, o.params);
    std::ostringstream t;
    t << (check_fd ? "input,analytic,fd,abs_diff\n" : "input,analytic\n");
    for (std::size_t j = 0; j < 8; ++j) {
        const bool theta_undefined = j == 5 && !(o.params.theta > 0.0);
        t << kInputNames[j] << ',' << (theta_undefined ? "nan" : num(g[j]));
        if (check_fd) t << ',' << num(fd[j]) << ',' << (theta_undefined ? "nan" : num(std::abs(g[j] - fd[j])));
        t << '\n';
    }
    t << "phat," << num(pg.price) << (check_fd ? ",," : "") << '\n';
    std::cout << t.str();
    if (!o.csv.empty()) write_text(o.csv, t.str());
    return 0;
}

// ---- generate ----

struct GenerateOptions {
    std::size_t n = 16384;
    std::string ranges;
    std::string feller = "require";
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    double tol = 1e-10;
    std::string out;
};

int cmd_generate(const GenerateOptions& o, const Globals& g, const CLI::App* sub) {
    const SamplingRanges ranges =
        o.ranges.empty() ? SamplingRanges{} : ranges_from_json(json::parse(io::read_file(o.ranges)));
    ranges.validate();
    const FellerMode feller = feller_mode_from_string(o.feller);
    GenerateReport rep;
    Progress progress("generate", g.quiet);
    const auto data = generate(o.n, ranges, feller, tolerance_config(o.tol), o.seed, g.worker_count(), &rep,
                               std::ref(progress));
    write_dataset_csv(o.out, data);

    DatasetMeta meta;
    meta.ranges = ranges;
    meta.seed = o.seed;
    meta.feller = feller;
    meta.n = o.n;
    meta.split_seed = o.split_seed;
    const auto parts = split(data, o.split_seed);
    meta.stats = fit_normaliser(parts.train);
    json side = to_json(meta);
    side["split_sizes"] = {parts.train.size(), parts.val.size(), parts.test.size()};
    side["feller_redraws"] = rep.feller_redraws;
    side["pricing_failures"] = rep.pricing_failures;
    side["failure_log"] = rep.failure_log;
    write_json(o.out + ".meta.json", side);
    write_manifest(o.out + ".manifest.json", sub);
    if (!g.quiet)
        std::cerr << "wrote " << data.size() << " samples to " << o.out << " (" << rep.feller_redraws
                  << " Feller redraws, " << rep.pricing_failures << " pricing failures)\n";
    return 0;
}

// ---- train / evaluate / gridsearch ----

struct TrainOptions {
    std::string data;
    std::string spec_file;
    std::string out;
    std::string history;
    std::string mode = "dml";
    std::optional<int> hidden_layers, neurons;
    std::optional<bool> wide_deep;
    std::optional<double> dropout;
    std::optional<double> lambda;
    int epochs = 50;
    int batches_per_epoch = 16;
    int batch_size = 819;
    std::string lr = "one_cycle";
    double weight_decay = 1e-4;
    std::optional<double> grad_clip;
    std::optional<int> patience;
    double l1 = 0.0, l2 = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
};

// "one_cycle", a constant, or breakpoints "epoch:lr,epoch:lr,...".
std::optional<LrSchedule> parse_lr(const std::string& text) {
    if (text == "one_cycle") return std::nullopt;
    if (text.find(':') == std::string::npos) return LrSchedule::constant(io::to_double(text, "--lr"));
    LrSchedule s;
    for (const auto& item : io::split(text)) {
        const auto f = io::split(item, ':');
        if (f.size() != 2) throw UsageError("--lr: expected epoch:lr pairs");
        s.points.emplace_back(io::to_double(f[0], "--lr"), io::to_double(f[1], "--lr"));
    }
    s.validate();
    return s;
}

NetworkSpec resolve_spec(const TrainOptions& o) {
    NetworkSpec spec;
    if (!o.spec_file.empty()) {
        for (const auto& [k, v] : read_key_values(o.spec_file)) {
            if (k == "hidden_layers") spec.hidden_layers = static_cast<int>(io::to_double(v, k));
            else if (k == "neurons") spec.neurons = static_cast<int>(io::to_double(v, k));
            else if (k == "wide_deep") spec.wide_deep = v == "1" || v == "true";
            else if (k == "dropout_rate") spec.dropout_rate = io::to_double(v, k);
            else throw FormatError(o.spec_file + ": unknown key '" + k + "'");
        }
    }
    if (o.hidden_layers) spec.hidden_layers = *o.hidden_layers;
    if (o.neurons) spec.neurons = *o.neurons;
    if (o.wide_deep) spec.wide_deep = *o.wide_deep;
    if (o.dropout) spec.dropout_rate = *o.dropout;
    spec.validate();
    return spec;
}

TrainingConfig resolve_training(const TrainOptions& o) {
    TrainingConfig c;
    c.epochs = o.epochs;
    c.batches_per_epoch = o.batches_per_epoch;
    c.batch_size = o.batch_size;
    c.lr = parse_lr(o.lr);
    if (o.mode != "dml" && o.mode != "classical") throw UsageError("--mode must be dml or classical");
    c.lambda = o.lambda ? *o.lambda : (o.mode == "classical" ? 0.0 : 1.0);
    c.value_only = c.lambda == 0.0;
    c.weight_decay = o.weight_decay;
    c.grad_clip = o.grad_clip;
    if (o.patience) c.early_stopping = EarlyStopping{*o.patience};
    c.l1 = o.l1;
    c.l2 = o.l2;
    c.seed = o.seed;
    c.validate();
    return c;
}

void add_train_options(CLI::App* s, TrainOptions& o, bool with_outputs) {
    s->add_option("--data", o.data, "dataset CSV")->required();
    if (with_outputs) {
        s->add_option("--out", o.out, "checkpoint file to write")->required();
        s->add_option("--history", o.history, "loss-history CSV (default <out>.history.csv)");
        s->add_option("--spec", o.spec_file, "network spec file (key=value)");
        s->add_option("--mode", o.mode, "dml or classical (lambda = 0)")->capture_default_str();
        s->add_option("--hidden-layers", o.hidden_layers);
        s->add_option("--neurons", o.neurons);
        s->add_option("--wide-deep", o.wide_deep);
        s->add_option("--dropout", o.dropout);
        s->add_option("--lambda", o.lambda, "differential weight (overrides --mode)");
        s->add_option("--epochs", o.epochs)->capture_default_str();
        s->add_option("--lr", o.lr, "one_cycle, a constant, or epoch:lr,epoch:lr,...")->capture_default_str();
        s->add_option("--grad-clip", o.grad_clip);
        s->add_option("--patience", o.patience, "early-stopping patience");
    }
    s->add_option("--batches-per-epoch", o.batches_per_epoch, "0: one full pass per epoch")->capture_default_str();
    s->add_option("--batch-size", o.batch_size)->capture_default_str();
    s->add_option("--weight-decay", o.weight_decay)->capture_default_str();
    s->add_option("--l1", o.l1)->capture_default_str();
    s->add_option("--l2", o.l2)->capture_default_str();
    s->add_option("--seed", o.seed)->capture_default_str();
    s->add_option("--split-seed", o.split_seed)->capture_default_str();
}

int cmd_train(const TrainOptions& o, const Globals& g, const CLI::App* sub) {
    const NetworkSpec spec = resolve_spec(o);
    const TrainingConfig cfg = resolve_training(o);
    const auto parts = split(read_dataset_csv(o.data), o.split_seed);
    const auto result = train(parts, spec, cfg, [&](const EpochRecord& e) {
        if (!g.quiet)
            std::fprintf(stderr, "epoch %d/%d train %.6e val %.6e lr %.3e\n", e.epoch, cfg.epochs, e.train_loss,
                         e.val_loss, e.lr);
    });
    save_checkpoint(o.out, result.checkpoint);
    const std::string history = o.history.empty() ? o.out + ".history.csv" : o.history;
    {
        std::ostringstream h;
        write_history_csv(h, result.history);
        write_text(history, h.str());
    }
    const double val_bp = parts.val.empty() ? std::nan("") : mse_bp(result.checkpoint, parts.val);
    const double test_bp = parts.test.empty() ? std::nan("") : mse_bp(result.checkpoint, parts.test);
    write_manifest(o.out + ".manifest.json", sub,
                   {{"resolved_spec",
                     {{"hidden_layers", spec.hidden_layers},
                      {"neurons", spec.neurons},
                      {"wide_deep", spec.wide_deep},
                      {"dropout_rate", spec.dropout_rate}}},
                    {"lambda", cfg.lambda}});
    std::cout << "epochs_run," << result.checkpoint.meta.epochs_run << "\nval_mse_bp," << num(val_bp)
              << "\ntest_mse_bp," << num(test_bp) << "\nclip_events," << result.clip_events << '\n';
    return 0;
}

struct EvaluateOptions {
    std::string checkpoint, data, split_name = "test", out;
    std::uint64_t split_seed = 0;
};

int cmd_evaluate(const EvaluateOptions& o, const CLI::App* sub) {
    const auto cp = load_checkpoint(o.checkpoint);
    const auto all = read_dataset_csv(o.data);
    std::vector<LabeledSample> samples;
    if (o.split_name == "all") {
        samples = all;
    } else {
        const auto parts = split(all, o.split_seed);
        if (o.split_name == "train") samples = parts.train;
        else if (o.split_name == "val") samples = parts.val;
        else if (o.split_name == "test") samples = parts.test;
        else throw UsageError("--split must be train, val, test or all");
    }
    const double bp = mse_bp(cp, samples);
    double max_err = 0.0;
    for (const auto& s : samples) max_err = std::max(max_err, std::abs(predict_price(cp, s.x) - s.y));
    std::ostringstream t;
    t << "split,n,mse_bp,max_abs_error\n"
      << o.split_name << ',' << samples.size() << ',' << num(bp) << ',' << num(max_err) << '\n';
    std::cout << t.str();
    if (!o.out.empty()) {
        write_text(o.out, t.str());
        write_manifest(o.out + ".manifest.json", sub);
    }
    return 0;
}

struct GridOptions {
    std::string space, out, best_checkpoint;
    TrainOptions base;
};

int cmd_gridsearch(const GridOptions& o, const Globals& g, const CLI::App* sub) {
    const auto space = search_space_from_json(json::parse(io::read_file(o.space)));
    const auto parts = split(read_dataset_csv(o.base.data), o.base.split_seed);
    TrainOptions base = o.base;
    const auto res = grid_search(parts, space, NetworkSpec{}, resolve_training(base), [&](const LeaderboardRow& r) {
        if (!g.quiet)
            std::fprintf(stderr, "run %zu: val_loss %.6e val_mse_bp %.4f\n", r.run, r.val_loss, r.val_mse_bp);
    });
    std::ostringstream t;
    write_leaderboard_csv(t, res);
    write_text(o.out, t.str());
    if (!o.best_checkpoint.empty()) save_checkpoint(o.best_checkpoint, res.best_checkpoint);
    write_manifest(o.out + ".manifest.json", sub);
    std::cout << t.str();
    return 0;
}

// ---- curves, quotes, calibration ----

YieldCurve treasury_curve() { return fit_nss(percent_to_decimal(treasury_points_2022_10_08_percent())); }

YieldCurve load_curve(const std::string& path) {
    auto in = io::open_in(path);
    return read_curve(in);
}

HolidayCalendar load_holidays(const std::string& path) {
    return path.empty() ? HolidayCalendar{} : HolidayCalendar::read(path);
}

struct FitCurveOptions {
    std::string points, out;
    bool percent = false;
};

int cmd_fit_curve(const FitCurveOptions& o, const CLI::App* sub) {
    std::vector<YieldPoint> pts;
    if (o.points.empty()) {
        pts = percent_to_decimal(treasury_points_2022_10_08_percent());
    } else {
        auto in = io::open_in(o.points);
        pts = read_rates_csv(in, o.points);
        if (o.percent) pts = percent_to_decimal(pts);
    }
    const auto curve = fit_nss(pts);
    std::ostringstream t;
    write_curve(t, curve);
    std::cout << "b0 b1 b2 b3 l1 l2 rms\n" << t.str();
    if (!o.out.empty()) {
        write_text(o.out, t.str());
        write_manifest(o.out + ".manifest.json", sub);
    }
    return 0;
}

struct SynthesizeOptions {
    HestonParams params;
    std::string maturities = "0.25,0.5,1,2,3";
    std::string strikes;
    double spot = 100.0;
    std::string valuation = "2022-10-07";
    std::string holidays;
    std::optional<double> rate;
    std::string curve;
    double noise = 0.0;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_synthesize(const SynthesizeOptions& o, const Globals& g, const CLI::App* sub) {
    YieldCurve curve;
    if (o.rate) curve.params = {*o.rate, 0.0, 0.0, 0.0, 1.0, 5.0};
    else curve = o.curve.empty() ? treasury_curve() : load_curve(o.curve);
    const auto strikes = o.strikes.empty() ? parse_grid(num(0.8 * o.spot) + ":" + num(1.2 * o.spot) + ":15", "strikes")
                                           : parse_grid(o.strikes, "--strikes");
    SynthesisOptions so;
    so.noise = o.noise;
    so.seed = o.seed;
    const auto syn = synthesize_quotes(o.params, parse_grid(o.maturities, "--maturities"), strikes, o.spot, curve,
                                       parse_date(o.valuation), load_holidays(o.holidays), so);
    std::ostringstream t;
    write_raw_quotes(t, syn.raw);
    write_text(o.out, t.str());
    write_json(o.out + ".meta.json", {{"feller_satisfied", syn.feller_satisfied},
                                      {"quotes", syn.raw.size()},
                                      {"usable_quotes", syn.quotes.quotes.size()},
                                      {"spot", o.spot},
                                      {"valuation", o.valuation}});
    write_manifest(o.out + ".manifest.json", sub, {{"feller_satisfied", syn.feller_satisfied}});
    if (!syn.feller_satisfied && !g.quiet) std::cerr << "warning: parameters violate the Feller condition\n";
    std::cout << "wrote " << syn.raw.size() << " quotes to " << o.out << '\n';
    return 0;
}

struct CalibrateOptions {
    std::string quotes, valuation, holidays, rates, curve, out_dir;
    double spot = 0.0;
    std::string backend = "analytic";
    std::string checkpoint;
    std::string optimizer = "nm";
    std::string mode = "five";
    std::optional<double> atm_iv;
    double fixed_kappa = kThreeParamKappa;
    std::string initial;
    int max_iter = 1000;
    int restarts = 2;
    double xtol = 1e-6, ftol = 1e-6;
    int generations = 90, population = 50;
    double de_tol = 1e-6, F = 0.5, Cr = 0.7;
    std::string strategy = "best1bin";
    std::uint64_t seed = 0;
};

void write_params_csv(const std::string& path, const CalibrationResult& r) {
    const auto& p = r.params;
    std::ostringstream t;
    t << "kappa,theta,sigma,rho,v0,objective,iterations,evaluations,converged,feller\n"
      << num(p.kappa) << ',' << num(p.theta) << ',' << num(p.sigma) << ',' << num(p.rho) << ',' << num(p.v0) << ','
      << num(r.objective) << ',' << r.iterations << ',' << r.evaluations << ',' << (r.converged ? 1 : 0) << ','
      << (p.feller_satisfied() ? 1 : 0) << '\n';
    write_text(path, t.str());
}

int cmd_calibrate(const CalibrateOptions& o, const Globals& g, const CLI::App* sub) {
    LoadReport rep;
    QuoteSet qs = load_quotes(o.quotes, parse_date(o.valuation), o.spot, load_holidays(o.holidays), &rep);
    for (const auto& w : rep.warnings)
        if (!g.quiet) std::cerr << "warning: " << w << '\n';
    if (!o.rates.empty()) {
        auto in = io::open_in(o.rates);
        attach_rates(qs, read_rates_csv(in, o.rates));
    } else {
        attach_rates(qs, o.curve.empty() ? treasury_curve() : load_curve(o.curve));
    }
    qs.validate();

    CalibrationProblem prob;
    prob.quotes = qs;
    prob.mode = mode_from_string(o.mode);
    prob.fixed_kappa = o.fixed_kappa;
    if (prob.mode == CalibrationMode::three) {
        if (!o.atm_iv) throw UsageError("--mode three needs --atm-iv");
        prob.fixed_v0 = fix_v0_from_atm_iv(*o.atm_iv);
    }
    HestonParams x0 = prob.mode == CalibrationMode::three ? three_param_initial_guess(prob.fixed_kappa, prob.fixed_v0)
                                                          : five_param_initial_guess();
    if (!o.initial.empty()) {
        const auto v = parse_list(o.initial, "--initial");
        if (v.size() != 5) throw UsageError("--initial needs kappa,theta,sigma,rho,v0");
        x0 = {v[0], v[1], v[2], v[3], v[4]};
        if (prob.mode == CalibrationMode::three) {
            x0.kappa = prob.fixed_kappa;
            x0.v0 = prob.fixed_v0;
        }
    }

    std::optional<NetworkCheckpoint> cp;
    std::vector<Backend> backends;
    if (o.backend == "both") backends = {Backend::analytic, Backend::network};
    else backends = {backend_from_string(o.backend)};
    if (std::find(backends.begin(), backends.end(), Backend::network) != backends.end()) {
        if (o.checkpoint.empty()) throw UsageError("the network backend needs --checkpoint");
        cp = load_checkpoint(o.checkpoint);
    }
    if (o.optimizer != "nm" && o.optimizer != "de") throw UsageError("--optimizer must be nm or de");

    fs::create_directories(o.out_dir);
    const fs::path dir(o.out_dir);
    std::vector<CalibrationResult> results;
    std::ostringstream timing;
    timing << "backend,seconds\n";
    for (Backend b : backends) {
        prob.backend = b;
        prob.network = cp ? &*cp : nullptr;
        CalibrationResult r;
        if (o.optimizer == "nm") {
            NelderMeadConfig nm;
            nm.max_iter = o.max_iter;
            nm.restarts = o.restarts;
            nm.xtol = o.xtol;
            nm.ftol = o.ftol;
            r = calibrate_nelder_mead(prob, x0, nm);
        } else {
            DeConfig de;
            de.strategy = de_strategy_from_string(o.strategy);
            de.generations = o.generations;
            de.population = o.population;
            de.tol = o.de_tol;
            de.F = o.F;
            de.Cr = o.Cr;
            de.seed = o.seed;
            de.threads = g.worker_count();
            r = calibrate_differential_evolution(prob, de);
        }
        const std::string tag = b == Backend::analytic ? "analytic" : "network";
        write_params_csv((dir / ("result_" + tag + ".csv")).string(), r);
        std::ostringstream tr, trt;
        write_trace_csv(tr, r, false);
        write_text((dir / ("trace_" + tag + ".csv")).string(), tr.str());
        write_trace_csv(trt, r);
        write_text((dir / ("timing_trace_" + tag + ".csv")).string(), trt.str());
        // Price comparison at the optimum, re-priced analytically.
        const auto model = model_prices(r.params, qs, Backend::analytic);
        std::ostringstream pc;
        pc << "maturity,strike,market,model\n";
        for (std::size_t i = 0; i < qs.quotes.size(); ++i)
            pc << num(qs.quotes[i].maturity) << ',' << num(qs.quotes[i].strike) << ',' << num(qs.quotes[i].price)
               << ',' << num(model[i]) << '\n';
        write_text((dir / ("prices_" + tag + ".csv")).string(), pc.str());
        timing << tag << ',' << num(r.seconds) << '\n';
        std::cout << tag << ": kappa " << r.params.kappa << " theta " << r.params.theta << " sigma " << r.params.sigma
                  << " rho " << r.params.rho << " v0 " << r.params.v0 << " objective " << r.objective << " ("
                  << r.seconds << " s, " << r.evaluations << " evaluations)\n";
        results.push_back(std::move(r));
    }
    write_text((dir / "timing.csv").string(), timing.str());

    if (results.size() == 2) {
        const auto c = compare_backends(prob, results[0], results[1]);
        const char* names[5] = {"kappa", "theta", "sigma", "rho", "v0"};
        const auto& a = results[0].params;
        const auto& b = results[1].params;
        const double va[5] = {a.kappa, a.theta, a.sigma, a.rho, a.v0};
        const double vb[5] = {b.kappa, b.theta, b.sigma, b.rho, b.v0};
        std::ostringstream t;
        t << "quantity,analytic,network,abs_diff\n";
        for (int k = 0; k < 5; ++k) t << names[k] << ',' << num(va[k]) << ',' << num(vb[k]) << ',' << num(c.param_abs_diff[static_cast<std::size_t>(k)]) << '\n';
        t << "mean_abs_price_error," << num(c.mean_abs_error_a) << ',' << num(c.mean_abs_error_b) << ",\n";
        write_text((dir / "comparison.csv").string(), t.str());
        std::ostringstream p;
        p << "maturity,strike,market,analytic_optimum,network_optimum\n";
        for (std::size_t i = 0; i < c.market.size(); ++i)
            p << num(qs.quotes[i].maturity) << ',' << num(qs.quotes[i].strike) << ',' << num(c.market[i]) << ','
              << num(c.prices_a[i]) << ',' << num(c.prices_b[i]) << '\n';
        write_text((dir / "comparison_prices.csv").string(), p.str());
        std::cout << "wall-clock ratio analytic/network: " << c.wall_clock_ratio << '\n';
    }
    write_manifest((dir / "manifest.json").string(), sub,
                   {{"quotes_used", qs.quotes.size()},
                    {"rows_read", rep.rows},
                    {"dropped_zero_quote", rep.dropped_zero_quote},
                    {"dropped_short_maturity", rep.dropped_short_maturity},
                    {"malformed", rep.malformed}});
    return 0;
}

int run(std::vector<std::string> args);

int cmd_replay(const std::string& manifest) {
    const auto m = json::parse(io::read_file(manifest));
    if (!m.contains("argv")) throw FormatError(manifest + ": no recorded arguments");
    return run(m.at("argv").get<std::vector<std::string>>());
}

// Builds the parser, parses `args` and dispatches. Library errors propagate.
int run(std::vector<std::string> args) {
    CLI::App app{"Heston pricing, differential-ML surrogate training and calibration toolkit", "hestondml"};
    app.set_version_flag("--version", HESTONDML_VERSION);
    app.set_config("--config", "", "INI/TOML config file; [subcommand] sections, flags override");
    app.require_subcommand(1);
    Globals g;
    app.add_option("--threads", g.threads, "worker threads (default: HESTONDML_THREADS or all cores)");
    app.add_flag("--quiet", g.quiet, "no progress output");
    app.fallthrough();

    PointOptions price_o, greeks_o;
    auto* price = app.add_subcommand("price", "normalised forward put P^ (and K-scaled price)");
    add_point_options(price, price_o);
    auto* greeks = app.add_subcommand("greeks", "eight analytic partial derivatives of P^");
    add_point_options(greeks, greeks_o);
    bool check_fd = false;
    greeks->add_flag("--check-fd", check_fd, "also print central finite differences");

    GenerateOptions gen_o;
    auto* gen = app.add_subcommand("generate", "labelled Latin-hypercube dataset");
    gen->add_option("--n", gen_o.n, "number of samples")->capture_default_str();
    gen->add_option("--ranges", gen_o.ranges, "JSON sampling ranges (default: the reference table)");
    gen->add_option("--feller", gen_o.feller, "require or allow")->capture_default_str();
    gen->add_option("--seed", gen_o.seed)->capture_default_str();
    gen->add_option("--split-seed", gen_o.split_seed, "split used for the normalisation stats sidecar")
        ->capture_default_str();
    gen->add_option("--tol", gen_o.tol, "quadrature tolerance")->capture_default_str();
    gen->add_option("--out", gen_o.out, "dataset CSV")->required();

    TrainOptions train_o;
    auto* trn = app.add_subcommand("train", "train a twin network on a dataset");
    add_train_options(trn, train_o, true);

    EvaluateOptions eval_o;
    auto* evl = app.add_subcommand("evaluate", "test-set MSE of a checkpoint in basis points");
    evl->add_option("--checkpoint", eval_o.checkpoint)->required();
    evl->add_option("--data", eval_o.data)->required();
    evl->add_option("--split", eval_o.split_name, "train, val, test or all")->capture_default_str();
    evl->add_option("--split-seed", eval_o.split_seed)->capture_default_str();
    evl->add_option("--out", eval_o.out, "metrics CSV");

    GridOptions grid_o;
    auto* grid = app.add_subcommand("gridsearch", "exhaustive hyperparameter search");
    grid->add_option("--space", grid_o.space, "JSON search space")->required();
    grid->add_option("--out", grid_o.out, "leaderboard CSV")->required();
    grid->add_option("--best-checkpoint", grid_o.best_checkpoint, "write the winner's checkpoint here");
    add_train_options(grid, grid_o.base, false);

    SynthesizeOptions syn_o;
    auto* syn = app.add_subcommand("synthesize", "model put quotes in the quote-file format");
    add_heston_options(syn, syn_o.params, true);
    syn->add_option("--maturities", syn_o.maturities, "comma list or lo:hi:n (years)")->capture_default_str();
    syn->add_option("--strikes", syn_o.strikes, "comma list or lo:hi:n (default 0.8-1.2 spot, 15 strikes)");
    syn->add_option("--spot", syn_o.spot)->capture_default_str();
    syn->add_option("--valuation", syn_o.valuation, "YYYY-MM-DD")->capture_default_str();
    syn->add_option("--holidays", syn_o.holidays, "holiday file");
    auto* flat = syn->add_option("--rate", syn_o.rate, "flat rate (decimal)");
    syn->add_option("--curve", syn_o.curve, "curve file (default: NSS fit of the built-in Treasury table)")
        ->excludes(flat);
    syn->add_option("--noise", syn_o.noise, "bid/ask half-spread as a fraction of price")->capture_default_str();
    syn->add_option("--seed", syn_o.seed)->capture_default_str();
    syn->add_option("--out", syn_o.out, "quote CSV")->required();

    FitCurveOptions fit_o;
    auto* fit = app.add_subcommand("fit-curve", "Nelson-Siegel-Svensson fit");
    fit->add_option("--points", fit_o.points, "tau_years,rate CSV (default: built-in Treasury table)");
    fit->add_flag("--percent", fit_o.percent, "rates in the points file are percents");
    fit->add_option("--out", fit_o.out, "curve file");

    CalibrateOptions cal_o;
    auto* cal = app.add_subcommand("calibrate", "calibrate Heston parameters to put quotes");
    cal->add_option("--quotes", cal_o.quotes, "quote CSV expiry,strike,bid,ask")->required();
    cal->add_option("--valuation", cal_o.valuation, "YYYY-MM-DD")->required();
    cal->add_option("--spot", cal_o.spot)->required();
    cal->add_option("--holidays", cal_o.holidays, "holiday file");
    auto* rates = cal->add_option("--rates", cal_o.rates, "tau_years,rate CSV used verbatim");
    cal->add_option("--curve", cal_o.curve, "curve file (default: NSS fit of the built-in Treasury table)")
        ->excludes(rates);
    cal->add_option("--backend", cal_o.backend, "analytic, network or both")->capture_default_str();
    cal->add_option("--checkpoint", cal_o.checkpoint, "network checkpoint");
    cal->add_option("--optimizer", cal_o.optimizer, "nm or de")->capture_default_str();
    cal->add_option("--mode", cal_o.mode, "five or three")->capture_default_str();
    cal->add_option("--atm-iv", cal_o.atm_iv, "at-the-money implied vol; v0 = atm_iv^2 in three mode");
    cal->add_option("--fixed-kappa", cal_o.fixed_kappa, "kappa in three mode")->capture_default_str();
    cal->add_option("--initial", cal_o.initial, "starting point kappa,theta,sigma,rho,v0");
    cal->add_option("--max-iter", cal_o.max_iter)->capture_default_str();
    cal->add_option("--restarts", cal_o.restarts, "Nelder-Mead restarts after convergence")->capture_default_str();
    cal->add_option("--xtol", cal_o.xtol)->capture_default_str();
    cal->add_option("--ftol", cal_o.ftol)->capture_default_str();
    cal->add_option("--generations", cal_o.generations)->capture_default_str();
    cal->add_option("--population", cal_o.population)->capture_default_str();
    cal->add_option("--de-tol", cal_o.de_tol)->capture_default_str();
    cal->add_option("--F", cal_o.F)->capture_default_str();
    cal->add_option("--Cr", cal_o.Cr)->capture_default_str();
    cal->add_option("--strategy", cal_o.strategy, "best1bin or rand1bin")->capture_default_str();
    cal->add_option("--seed", cal_o.seed)->capture_default_str();
    cal->add_option("--out-dir", cal_o.out_dir)->required();

    std::string manifest;
    auto* replay = app.add_subcommand("replay", "re-run a command from its manifest");
    replay->add_option("manifest", manifest)->required();

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*price) return cmd_price(price_o);
    if (*greeks) return cmd_greeks(greeks_o, check_fd);
    if (*gen) return cmd_generate(gen_o, g, gen);
    if (*trn) return cmd_train(train_o, g, trn);
    if (*evl) return cmd_evaluate(eval_o, evl);
    if (*grid) return cmd_gridsearch(grid_o, g, grid);
    if (*syn) return cmd_synthesize(syn_o, g, syn);
    if (*fit) return cmd_fit_curve(fit_o, fit);
    if (*cal) return cmd_calibrate(cal_o, g, cal);
    if (*replay) return cmd_replay(manifest);
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(std::vector<std::string>(argv + 1, argv + argc));
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const ParameterError& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed JSON input: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
