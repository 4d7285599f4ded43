#pragma once

// Exhaustive hyperparameter search over a user-supplied product space.

#include <functional>
#include <json.hpp>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "hestondml/training.hpp"

namespace hestondml {

/// A learning rate choice: a constant value or the default one-cycle schedule.
struct LrChoice {
    std::optional<double> constant;  ///< empty: one-cycle

    std::string label() const { return constant ? io::fmt17(*constant) : "one_cycle"; }
};

/// Each axis lists candidate values; an axis left empty keeps the base setting.
struct SearchSpace {
    std::vector<int> hidden_layers;
    std::vector<int> neurons;
    std::vector<int> epochs;
    std::vector<std::optional<int>> patience;     ///< nullopt: no early stopping
    std::vector<std::optional<double>> grad_clip; ///< nullopt: no clipping
    std::vector<LrChoice> lr;
    std::vector<bool> wide_deep;
    std::vector<double> lambda;
};

struct TrialConfig {
    NetworkSpec spec;
    TrainingConfig config;
};

struct LeaderboardRow {
    std::size_t run = 0;
    TrialConfig trial;
    std::string lr_label;
    double val_loss = 0.0;
    double val_mse_bp = 0.0;
    int epochs_run = 0;
};

struct GridSearchResult {
    std::vector<LeaderboardRow> leaderboard;  ///< in run order
    std::size_t best = 0;                     ///< index into leaderboard
    NetworkCheckpoint best_checkpoint;
};

inline SearchSpace search_space_from_json(const nlohmann::json& j) {
    SearchSpace s;
    auto ints = [&](const char* key, std::vector<int>& dst) {
        if (j.contains(key)) dst = j.at(key).get<std::vector<int>>();
    };
    ints("hidden_layers", s.hidden_layers);
    ints("neurons", s.neurons);
    ints("epochs", s.epochs);
    if (j.contains("patience"))
        for (const auto& v : j.at("patience")) s.patience.push_back(v.is_null() ? std::nullopt : std::optional<int>(v.get<int>()));
    if (j.contains("grad_clip"))
        for (const auto& v : j.at("grad_clip"))
            s.grad_clip.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    if (j.contains("lr"))
        for (const auto& v : j.at("lr")) {
            if (v.is_string() && v.get<std::string>() == "one_cycle") s.lr.push_back({});
            else if (v.is_number()) s.lr.push_back({v.get<double>()});
            else throw FormatError("search space: lr entries must be numbers or \"one_cycle\"");
        }
    if (j.contains("wide_deep")) s.wide_deep = j.at("wide_deep").get<std::vector<bool>>();
    if (j.contains("lambda")) s.lambda = j.at("lambda").get<std::vector<double>>();
    for (const auto& [key, _] : j.items())
        if (key != "hidden_layers" && key != "neurons" && key != "epochs" && key != "patience" && key != "grad_clip" &&
            key != "lr" && key != "wide_deep" && key != "lambda")
            throw FormatError("search space: unknown axis '" + key + "'");
    return s;
}

/// All combinations, last axis varying fastest.
inline std::vector<std::pair<TrialConfig, std::string>> expand(const SearchSpace& space, const NetworkSpec& base_spec,
                                                               const TrainingConfig& base) {
    std::vector<std::pair<TrialConfig, std::string>> out{{TrialConfig{base_spec, base}, base.lr ? "base" : "one_cycle"}};
    auto axis = [&out](const auto& values, auto apply) {
        if (values.empty()) return;
        std::vector<std::pair<TrialConfig, std::string>> next;
        for (const auto& t : out)
            for (const auto& v : values) {
                auto c = t;
                apply(c, v);
                next.push_back(std::move(c));
            }
        out = std::move(next);
    };
    axis(space.hidden_layers, [](auto& c, int v) { c.first.spec.hidden_layers = v; });
    axis(space.neurons, [](auto& c, int v) { c.first.spec.neurons = v; });
    axis(space.epochs, [](auto& c, int v) { c.first.config.epochs = v; });
    axis(space.patience, [](auto& c, std::optional<int> v) {
        c.first.config.early_stopping = v ? std::optional<EarlyStopping>(EarlyStopping{*v}) : std::nullopt;
    });
    axis(space.grad_clip, [](auto& c, std::optional<double> v) { c.first.config.grad_clip = v; });
    axis(space.lr, [](auto& c, const LrChoice& v) {
        c.first.config.lr = v.constant ? std::optional<LrSchedule>(LrSchedule::constant(*v.constant)) : std::nullopt;
        c.second = v.label();
    });
    axis(space.wide_deep, [](auto& c, bool v) { c.first.spec.wide_deep = v; });
    axis(space.lambda, [](auto& c, double v) { c.first.config.lambda = v; });
    return out;
}

/// Trains every combination with the base seed; the winner has the lowest
/// validation loss (first one on ties).
inline GridSearchResult grid_search(const DatasetSplit& splits, const SearchSpace& space, const NetworkSpec& base_spec,
                                    const TrainingConfig& base,
                                    const std::function<void(const LeaderboardRow&)>& on_run = {}) {
    const auto trials = expand(space, base_spec, base);
    for (const auto& [t, _] : trials) {
        t.spec.validate();
        t.config.validate();
    }
    const auto stats = fit_normaliser(splits.train);
    const auto tr = normalise(stats, splits.train);
    const auto va = normalise(stats, splits.val);
    GridSearchResult res;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const auto& [trial, label] = trials[i];
        auto r = train(tr, va, stats, trial.spec, trial.config);
        LeaderboardRow row;
        row.run = i + 1;
        row.trial = trial;
        row.lr_label = label;
        // Selection uses the loss of the returned weights on the value target
        // plus differentials, as trained.
        row.val_loss = evaluate_loss(r.checkpoint.net, va, DifferentialWeights::from_stats(stats, trial.config.lambda),
                                     trial.config.value_only);
        row.val_mse_bp = splits.val.empty() ? std::numeric_limits<double>::quiet_NaN() : mse_bp(r.checkpoint, splits.val);
        row.epochs_run = r.checkpoint.meta.epochs_run;
        if (row.val_loss < best_loss) {
            best_loss = row.val_loss;
            res.best = i;
            res.best_checkpoint = r.checkpoint;
        }
        res.leaderboard.push_back(row);
        if (on_run) on_run(row);
    }
    return res;
}

inline void write_leaderboard_csv(std::ostream& out, const GridSearchResult& res) {
    out << "run,hidden_layers,neurons,epochs,patience,grad_clip,lr,wide_deep,lambda,epochs_run,val_loss,val_mse_bp,best\n";
    for (std::size_t i = 0; i < res.leaderboard.size(); ++i) {
        const auto& r = res.leaderboard[i];
        const auto& c = r.trial.config;
        out << r.run << ',' << r.trial.spec.hidden_layers << ',' << r.trial.spec.neurons << ',' << c.epochs << ','
            << (c.early_stopping ? std::to_string(c.early_stopping->patience) : "none") << ','
            << (c.grad_clip ? io::fmt17(*c.grad_clip) : "none") << ',' << r.lr_label << ','
            << (r.trial.spec.wide_deep ? 1 : 0) << ',' << io::fmt17(c.lambda) << ',' << r.epochs_run << ','
            << io::fmt17(r.val_loss) << ',' << io::fmt17(r.val_mse_bp) << ',' << (i == res.best ? 1 : 0) << '\n';
    }
}

}  // namespace hestondml
