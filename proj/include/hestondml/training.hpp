#pragma once

// Mini-batch AdamW training of the twin network on values and differentials.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hestondml/dataset.hpp"
#include "hestondml/twinnet.hpp"

namespace hestondml {

/// Learning rate as a piecewise log-linear function of (fractional) epoch.
struct LrSchedule {
    std::vector<std::pair<double, double>> points;  // (epoch, lr), epochs increasing

    /// 1e-8 up to 1e-2 over the first 30% of training, then down to 1e-6.
    static LrSchedule one_cycle(int epochs, double lo = 1e-8, double peak = 1e-2, double end = 1e-6) {
        const double e = static_cast<double>(epochs);
        return {{{0.0, lo}, {0.3 * e, peak}, {e, end}}};
    }
    static LrSchedule constant(double lr) { return {{{0.0, lr}}}; }

    void validate() const {
        if (points.empty()) throw ParameterError("lr schedule: no breakpoints");
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!(points[i].second > 0.0)) throw ParameterError("lr schedule: rates must be > 0");
            if (i > 0 && !(points[i].first > points[i - 1].first))
                throw ParameterError("lr schedule: breakpoint epochs must increase");
        }
    }

    double at(double epoch) const {
        if (epoch <= points.front().first) return points.front().second;
        if (epoch >= points.back().first) return points.back().second;
        std::size_t k = 1;
        while (points[k].first < epoch) ++k;
        const auto [e0, r0] = points[k - 1];
        const auto [e1, r1] = points[k];
        const double t = (epoch - e0) / (e1 - e0);
        return std::exp(std::log(r0) + t * (std::log(r1) - std::log(r0)));
    }
};

struct EarlyStopping {
    int patience = 10;
};

struct TrainingConfig {
    int epochs = 50;
    int batches_per_epoch = 16;  ///< 0: one pass over the data per epoch, short last batch kept
    int batch_size = 819;
    std::optional<LrSchedule> lr;  ///< default: one_cycle(epochs)
    double lambda = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-4;
    std::optional<double> grad_clip;
    std::optional<EarlyStopping> early_stopping;
    double l1 = 0.0;  ///< optional weight penalties, off by default
    double l2 = 0.0;
    std::uint64_t seed = 0;
    bool value_only = false;  ///< skip the adjoint graph entirely

    LrSchedule schedule() const { return lr ? *lr : LrSchedule::one_cycle(epochs); }

    void validate() const {
        if (epochs < 1) throw ParameterError("training: epochs must be >= 1");
        if (batches_per_epoch < 0) throw ParameterError("training: batches_per_epoch must be >= 0");
        if (batch_size < 1) throw ParameterError("training: batch_size must be >= 1");
        if (!(lambda >= 0.0)) throw ParameterError("training: lambda must be >= 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
            throw ParameterError("training: invalid Adam coefficients");
        if (weight_decay < 0.0 || l1 < 0.0 || l2 < 0.0) throw ParameterError("training: penalties must be >= 0");
        if (grad_clip && !(*grad_clip > 0.0)) throw ParameterError("training: grad_clip must be > 0");
        if (early_stopping && early_stopping->patience < 1) throw ParameterError("training: patience must be >= 1");
        schedule().validate();
    }
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    double grad_norm_max = 0.0;
};

struct TrainingMetadata {
    int epochs_run = 0;
    double final_train_loss = 0.0;
    double final_val_loss = 0.0;
    double best_val_loss = 0.0;
    int best_epoch = 0;
    std::uint64_t seed = 0;
    double lambda = 1.0;
};

struct NetworkCheckpoint {
    Network net;
    NormalisationStats stats;
    TrainingMetadata meta;
};

struct TrainResult {
    NetworkCheckpoint checkpoint;
    std::vector<EpochRecord> history;
    std::size_t clip_events = 0;
    double max_clipped_norm = 0.0;  ///< largest post-clip norm over steps that were clipped
};

/// Loss of a whole set in inference mode (no dropout), evaluated in fixed-size chunks.
inline double evaluate_loss(const Network& net, const NormalisedSet& set, const DifferentialWeights& w,
                            bool value_only = false) {
    const Eigen::Index n = set.size();
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    constexpr Eigen::Index chunk = 4096;
    double total = 0.0;
    for (Eigen::Index s = 0; s < n; s += chunk) {
        const Eigen::Index k = std::min(chunk, n - s);
        ForwardCache c;
        const RowMatrix y = forward(net, set.X.middleRows(s, k), &c);
        double part = (y - set.Y.middleRows(s, k)).squaredNorm();
        if (!value_only && w.lambda != 0.0) {
            const RowMatrix d = adjoint(net, c) - set.Xbar.middleRows(s, k);
            part += w.lambda * (d.array().square().rowwise() * w.column_weight.array()).sum();
        }
        total += part;
    }
    return total / static_cast<double>(n);
}

namespace detail {

inline RowMatrix gather(const RowMatrix& m, const std::vector<Eigen::Index>& rows) {
    RowMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

inline void shuffle(std::vector<Eigen::Index>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto k = std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i)), i - 1);
        std::swap(v[i - 1], v[k]);
    }
}

}  // namespace detail

/// Trains a freshly initialised network (seeded by config.seed) on normalised splits.
inline TrainResult train(const NormalisedSet& train_set, const NormalisedSet& val_set, const NormalisationStats& stats,
                         const NetworkSpec& spec, const TrainingConfig& config,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    spec.validate();
    config.validate();
    const Eigen::Index n = train_set.size();
    if (n < 1) throw ParameterError("train: empty training set");
    if (train_set.X.cols() != spec.n_inputs) throw ParameterError("train: input width does not match the network architecture");

    const auto schedule = config.schedule();
    const auto weights = DifferentialWeights::from_stats(stats, config.lambda);
    Network net = init_network(spec, config.seed);
    Params m1 = Params::zeros_like(net.params), m2 = Params::zeros_like(net.params);
    std::mt19937_64 batch_rng(config.seed + 1);
    DropoutState dropout(config.seed + 2);
    DropoutState* drop = spec.dropout_rate > 0.0 ? &dropout : nullptr;

    const int bpe = config.batches_per_epoch > 0
                        ? config.batches_per_epoch
                        : static_cast<int>((n + config.batch_size - 1) / config.batch_size);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    TrainResult result;
    std::optional<Params> best;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0, since_best = 0;
    std::uint64_t step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        detail::shuffle(order, batch_rng);
        double grad_norm_max = 0.0, lr = 0.0;
        for (int b = 0; b < bpe; ++b) {
            std::vector<Eigen::Index> rows;
            if (config.batches_per_epoch > 0) {
                // Fixed-size batches wrapping around the shuffled order.
                for (int k = 0; k < config.batch_size; ++k)
                    rows.push_back(order[static_cast<std::size_t>((static_cast<Eigen::Index>(b) * config.batch_size + k) % n)]);
            } else {
                const Eigen::Index start = static_cast<Eigen::Index>(b) * config.batch_size;
                for (Eigen::Index k = start; k < std::min<Eigen::Index>(start + config.batch_size, n); ++k)
                    rows.push_back(order[static_cast<std::size_t>(k)]);
            }
            auto lg = loss_and_gradient(net, detail::gather(train_set.X, rows), detail::gather(train_set.Y, rows),
                                        detail::gather(train_set.Xbar, rows), weights, drop, config.value_only);
            if (config.l1 > 0.0 || config.l2 > 0.0) {
                net.params.for_each(
                    [&](auto& p, auto& g, bool is_weight) {
                        if (!is_weight) return;
                        lg.loss += config.l1 * p.cwiseAbs().sum() + config.l2 * p.squaredNorm();
                        g += config.l1 * p.unaryExpr([](double v) { return double((v > 0) - (v < 0)); }) +
                             2.0 * config.l2 * p;
                    },
                    lg.grad);
            }
            const double norm = std::sqrt(lg.grad.squared_norm());
            if (!std::isfinite(lg.loss) || !std::isfinite(norm)) {
                std::ostringstream msg;
                msg << "training diverged at epoch " << epoch + 1 << ", batch " << b + 1 << ": loss " << lg.loss
                    << ", gradient norm " << norm << " (consider gradient clipping or a lower learning rate)";
                throw TrainingError(msg.str());
            }
            grad_norm_max = std::max(grad_norm_max, norm);
            if (config.grad_clip && norm > *config.grad_clip) {
                const double scale = *config.grad_clip / norm;
                lg.grad.for_each([&](auto& g, bool) { g *= scale; });
                ++result.clip_events;
                result.max_clipped_norm = std::max(result.max_clipped_norm, std::sqrt(lg.grad.squared_norm()));
            }

            ++step;
            lr = schedule.at(static_cast<double>(epoch) + static_cast<double>(b) / bpe);
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            net.params.for_each(
                [&](auto& p, auto& g, auto& mm, auto& vv, bool is_weight) {
                    mm = config.beta1 * mm + (1.0 - config.beta1) * g;
                    vv = config.beta2 * vv + (1.0 - config.beta2) * g.cwiseProduct(g);
                    if (is_weight) p *= 1.0 - lr * config.weight_decay;
                    p.array() -= lr * (mm.array() / bc1) / ((vv.array() / bc2).sqrt() + config.epsilon);
                },
                lg.grad, m1, m2);
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_loss = evaluate_loss(net, train_set, weights, config.value_only);
        rec.val_loss = val_set.size() ? evaluate_loss(net, val_set, weights, config.value_only) : rec.train_loss;
        rec.lr = lr;
        rec.grad_norm_max = grad_norm_max;
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (rec.val_loss < best_val) {
            best_val = rec.val_loss;
            best_epoch = rec.epoch;
            since_best = 0;
            if (config.early_stopping) best = net.params;
        } else if (config.early_stopping && ++since_best >= config.early_stopping->patience) {
            break;
        }
    }

    if (config.early_stopping && best) net.params = *best;
    const auto& last = result.history.back();
    TrainingMetadata meta;
    meta.epochs_run = last.epoch;
    meta.final_train_loss = config.early_stopping ? result.history[static_cast<std::size_t>(best_epoch - 1)].train_loss
                                                  : last.train_loss;
    meta.final_val_loss = config.early_stopping ? best_val : last.val_loss;
    meta.best_val_loss = best_val;
    meta.best_epoch = best_epoch;
    meta.seed = config.seed;
    meta.lambda = config.lambda;
    result.checkpoint = NetworkCheckpoint{std::move(net), stats, meta};
    return result;
}

/// Convenience overload: normalises the splits with train-split statistics.
inline TrainResult train(const DatasetSplit& splits, const NetworkSpec& spec, const TrainingConfig& config,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    const auto stats = fit_normaliser(splits.train);
    return train(normalise(stats, splits.train), normalise(stats, splits.val), stats, spec, config, on_epoch);
}

inline void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
    out << "epoch,train_loss,val_loss,lr,grad_norm_max\n";
    for (const auto& r : history)
        out << r.epoch << ',' << io::fmt17(r.train_loss) << ',' << io::fmt17(r.val_loss) << ',' << io::fmt17(r.lr)
            << ',' << io::fmt17(r.grad_norm_max) << '\n';
}

// ---- prediction ----

/// Raw inputs (rows of m, tau, r, kappa, v0, theta, sigma, rho) to P^ in original units.
inline Eigen::VectorXd predict_prices(const NetworkCheckpoint& cp, const RowMatrix& raw) {
    RowMatrix x(raw.rows(), raw.cols());
    for (Eigen::Index j = 0; j < raw.cols(); ++j)
        x.col(j) = (raw.col(j).array() - cp.stats.x_mean[static_cast<std::size_t>(j)]) /
                   cp.stats.x_std[static_cast<std::size_t>(j)];
    const RowMatrix y = forward(cp.net, x);
    return (y.col(0).array() * cp.stats.y_std + cp.stats.y_mean).matrix();
}

inline double predict_price(const NetworkCheckpoint& cp, const Vec8& raw) {
    RowMatrix x(1, static_cast<Eigen::Index>(kNumInputs));
    for (std::size_t j = 0; j < kNumInputs; ++j) x(0, static_cast<Eigen::Index>(j)) = raw[j];
    return predict_prices(cp, x)[0];
}

/// Network estimate of (P^, dP^/dx) in original units.
inline PriceAndGradient predict_gradient(const NetworkCheckpoint& cp, const Vec8& raw) {
    const auto xn = normalise_x(cp.stats, raw);
    RowMatrix x(1, static_cast<Eigen::Index>(kNumInputs));
    for (std::size_t j = 0; j < kNumInputs; ++j) x(0, static_cast<Eigen::Index>(j)) = xn[j];
    ForwardCache c;
    const RowMatrix y = forward(cp.net, x, &c);
    const RowMatrix g = adjoint(cp.net, c);
    Vec8 grad;
    for (std::size_t j = 0; j < kNumInputs; ++j) grad[j] = g(0, static_cast<Eigen::Index>(j)) / cp.stats.xbar_scale[j];
    return {y(0, 0) * cp.stats.y_std + cp.stats.y_mean, Gradient8::from_input_order(grad)};
}

/// Mean squared price error on de-normalised P^, in basis points (1 bp = 1e-4).
inline double mse_bp(const NetworkCheckpoint& cp, const std::vector<LabeledSample>& samples) {
    if (samples.empty()) throw ParameterError("mse_bp: empty sample set");
    RowMatrix raw(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(kNumInputs));
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = 0; j < kNumInputs; ++j)
            raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples[i].x[j];
    const Eigen::VectorXd pred = predict_prices(cp, raw);
    double acc = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double e = pred[static_cast<Eigen::Index>(i)] - samples[i].y;
        acc += e * e;
    }
    return acc / static_cast<double>(samples.size()) / 1e-4;
}

}  // namespace hestondml
