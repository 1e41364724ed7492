#pragma once

// Adam training on 1/2 * MSE with best-validation model selection, and
// variance-based edge pruning followed by fine-tuning.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "quirk/data.hpp"
#include "quirk/diagnostics.hpp"
#include "quirk/errors.hpp"
#include "quirk/format.hpp"
#include "quirk/network.hpp"
#include "quirk/random.hpp"

namespace quirk {

inline double rmse(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.empty()) throw InvalidInput("rmse of an empty sample");
    if (predictions.size() != targets.size()) throw ShapeError("rmse: predictions and targets differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - targets[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(predictions.size()));
}

struct TrainConfig {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 64;
    std::size_t max_steps = 2000;
    std::uint64_t seed = 0;
    std::size_t early_stop_patience = 500; ///< steps without validation improvement; 0 disables
    std::size_t eval_every = 25;
    double prune_threshold = 0.05; ///< tau, relative to the largest edge score of the same layer
    std::size_t fine_tune_steps = 500;
    std::size_t threads = 1;

    void validate() const {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
        if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
        if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
        if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
        if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
        if (eval_every == 0) throw ConfigError("eval_every must be at least 1");
        if (!(prune_threshold >= 0.0) || !std::isfinite(prune_threshold)) throw ConfigError("prune_threshold must be >= 0");
        if (threads == 0) throw ConfigError("threads must be at least 1");
    }
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update. `state.step` is advanced first, so the
/// first call uses t = 1. A non-finite gradient or result throws and leaves
/// `params` untouched.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const TrainConfig& config) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
    const std::size_t t = state.step + 1;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    std::vector<double> m(params.size()), v(params.size()), next(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!std::isfinite(grads[k])) throw NumericError("non-finite gradient at step " + std::to_string(t));
        m[k] = config.beta1 * state.m[k] + (1.0 - config.beta1) * grads[k];
        v[k] = config.beta2 * state.v[k] + (1.0 - config.beta2) * grads[k] * grads[k];
        next[k] = params[k] - config.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + config.epsilon);
        if (!std::isfinite(next[k])) throw NumericError("parameter update diverged at step " + std::to_string(t));
    }
    std::copy(next.begin(), next.end(), params.begin());
    state.m = std::move(m);
    state.v = std::move(v);
    state.step = t;
}

struct HistoryRow {
    std::size_t step = 0;
    double train_rmse = 0.0;
    double val_rmse = 0.0;
    double elapsed_ms = 0.0;
};

struct TrainHistory {
    std::vector<HistoryRow> rows; ///< one row per evaluation
    std::size_t best_step = 0;
    double best_val_rmse = std::numeric_limits<double>::infinity();
    std::size_t steps_run = 0;
    bool early_stopped = false;
};

struct TrainResult {
    Model model;
    TrainHistory history;
};

inline double evaluate_rmse(const Model& model, const Dataset::Subset& data, std::size_t threads = 1) {
    return rmse(predict(model, data.inputs, data.input_dim, threads), data.targets);
}

/// Continues training `model` (input normalisation must already be fitted)
/// for config.max_steps Adam steps on the training split.
inline TrainResult fit(Model model, const Dataset& dataset, const TrainConfig& config) {
    config.validate();
    dataset.validate();
    model.validate();
    if (dataset.input_dim() != model.spec.input_dim)
        throw ShapeError("dataset has " + std::to_string(dataset.input_dim()) + " inputs, network expects " +
                         std::to_string(model.spec.input_dim));
    if (!model.input_norm_fitted()) throw StateError("fit: input normalisation has not been fitted");
    if (dataset.split.train.empty()) throw InvalidInput("training split is empty");

    const auto train_set = dataset.gather(dataset.split.train);
    const auto val_set = dataset.split.validation.empty() ? train_set : dataset.gather(dataset.split.validation);
    const std::size_t n = train_set.size();
    const std::size_t batch = std::min(config.batch_size, n);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(config.seed, 0xBA7C4));
    std::size_t cursor = n;
    std::vector<double> bx, by;

    auto params = flatten_parameters(model);
    AdamState adam(params.size());
    TrainResult result{model, {}};
    auto& hist = result.history;
    const auto start = std::chrono::steady_clock::now();

    auto record = [&](std::size_t step) {
        HistoryRow row;
        row.step = step;
        row.train_rmse = evaluate_rmse(model, train_set, config.threads);
        row.val_rmse = evaluate_rmse(model, val_set, config.threads);
        row.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (!std::isfinite(row.train_rmse) || !std::isfinite(row.val_rmse))
            throw NumericError("loss became non-finite at step " + std::to_string(step));
        hist.rows.push_back(row);
        if (row.val_rmse < hist.best_val_rmse) {
            hist.best_val_rmse = row.val_rmse;
            hist.best_step = step;
            result.model = model;
        }
    };

    record(0);
    for (std::size_t step = 1; step <= config.max_steps; ++step) {
        bx.clear();
        by.clear();
        for (std::size_t b = 0; b < batch; ++b) {
            if (cursor == n) {
                rng.shuffle(std::span<std::size_t>(order));
                cursor = 0;
            }
            const std::size_t r = order[cursor++];
            bx.insert(bx.end(), train_set.inputs.begin() + static_cast<std::ptrdiff_t>(r * train_set.input_dim),
                      train_set.inputs.begin() + static_cast<std::ptrdiff_t>((r + 1) * train_set.input_dim));
            by.push_back(train_set.targets[r]);
        }
        ModelGradient g;
        try {
            g = network_backward(Batch{bx, by, train_set.input_dim}, model, config.threads);
        } catch (const NumericError& e) {
            throw NumericError("step " + std::to_string(step) + ": " + e.what());
        }
        if (!std::isfinite(g.loss)) throw NumericError("loss became non-finite at step " + std::to_string(step));
        const auto grad = g.flatten(model);
        adam_step(params, grad, adam, config);
        assign_parameters(model, params);
        hist.steps_run = step;

        if (step % config.eval_every == 0 || step == config.max_steps) {
            record(step);
            if (config.early_stop_patience > 0 && step - hist.best_step >= config.early_stop_patience) {
                hist.early_stopped = true;
                break;
            }
        }
    }
    return result;
}

/// Fresh model from `spec`, input normalisation fitted on the training split,
/// then fit().
inline TrainResult train(const Dataset& dataset, const NetworkSpec& spec, const TrainConfig& config) {
    dataset.validate();
    if (dataset.input_dim() != spec.input_dim)
        throw ShapeError("dataset has " + std::to_string(dataset.input_dim()) + " inputs, network expects " +
                         std::to_string(spec.input_dim));
    Model model = Model::initialize(spec);
    model.input_norm = fit_feature_ranges(dataset.inputs, dataset.input_dim(), dataset.split.train);
    return fit(std::move(model), dataset, config);
}

inline void write_history_csv(std::ostream& out, const TrainHistory& h) {
    out << "step,train_rmse,val_rmse,elapsed_ms\n";
    for (const auto& r : h.rows)
        out << r.step << ',' << format_double(r.train_rmse) << ',' << format_double(r.val_rmse) << ','
            << format_double(r.elapsed_ms) << '\n';
}

inline void save_history_csv(const TrainHistory& h, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_history_csv(out, h);
    if (!out) throw IoError("failed writing '" + path + "'");
}

// --- pruning -----------------------------------------------------------------

struct EdgeScore {
    EdgeId edge;
    double score = 0.0; ///< standard deviation of the edge output over the training inputs
};

/// Scores of every active edge, in (layer, input, unit) order.
inline std::vector<EdgeScore> edge_scores(const Model& model, const Dataset& dataset) {
    if (dataset.split.train.empty()) throw InvalidInput("training split is empty");
    const detail::CompiledModel compiled(model);
    const auto edges = model.active_edges();
    std::vector<double> sum(edges.size(), 0.0), sum_sq(edges.size(), 0.0);
    std::vector<std::vector<double>> outputs(edges.size());
    for (std::size_t r : dataset.split.train) {
        const auto trace = trace_normalized(normalize_input(dataset.row(r), model), model);
        for (std::size_t k = 0; k < edges.size(); ++k) {
            const auto& e = edges[k];
            outputs[k].push_back(compiled.kernels[e.layer][model.edge_index(e)].value(trace.activations[e.layer][e.input]));
        }
    }
    std::vector<EdgeScore> out;
    for (std::size_t k = 0; k < edges.size(); ++k) {
        double mean = 0.0;
        for (double v : outputs[k]) mean += v;
        mean /= static_cast<double>(outputs[k].size());
        double var = 0.0;
        for (double v : outputs[k]) var += (v - mean) * (v - mean);
        out.push_back({edges[k], std::sqrt(var / static_cast<double>(outputs[k].size()))});
    }
    return out;
}

namespace detail {

inline void deactivate(Model& m, const EdgeId& e) { m.layers[e.layer].active[m.edge_index(e)] = 0; }

// Removes edges that can no longer carry signal: outgoing edges of hidden
// units without inputs, and incoming edges of hidden units without outputs.
inline void cascade_dead_units(Model& m) {
    const std::size_t num_layers = m.spec.layers.size();
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t l = 0; l + 1 < num_layers; ++l) {
            const auto& ls = m.spec.layers[l];
            const auto& next = m.spec.layers[l + 1];
            for (std::size_t u = 0; u < ls.units; ++u) {
                std::size_t outgoing = 0;
                for (std::size_t v = 0; v < next.units; ++v) outgoing += m.layers[l + 1].active[u * next.units + v];
                const std::size_t incoming = m.active_fan_in(l, u);
                if (incoming == 0 && outgoing > 0) {
                    for (std::size_t v = 0; v < next.units; ++v) m.layers[l + 1].active[u * next.units + v] = 0;
                    changed = true;
                }
                if (outgoing == 0 && incoming > 0) {
                    for (std::size_t i = 0; i < ls.fan_in; ++i) m.layers[l].active[i * ls.units + u] = 0;
                    changed = true;
                }
            }
        }
    }
}

} // namespace detail

struct PruneResult {
    Model model;
    std::vector<EdgeId> removed; ///< every deactivated edge, including cascaded ones
    bool refused = false;
    std::size_t params_before = 0;
    std::size_t params_after = 0;
    TrainHistory fine_tune;
};

/// Structural part of pruning: removes active edges scoring below tau times
/// the largest score in the same layer, then cascades through dead units.
/// No fine-tuning.
inline PruneResult prune_edges(const Model& model, const Dataset& dataset, double tau) {
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw InvalidInput("prune threshold must be a finite value >= 0");
    PruneResult result{model, {}, false, param_count(model), param_count(model), {}};
    const auto scores = edge_scores(model, dataset);
    std::vector<double> layer_max(model.spec.layers.size(), 0.0);
    for (const auto& s : scores) layer_max[s.edge.layer] = std::max(layer_max[s.edge.layer], s.score);
    Model pruned = model;
    for (const auto& s : scores)
        if (s.score < tau * layer_max[s.edge.layer]) detail::deactivate(pruned, s.edge);
    detail::cascade_dead_units(pruned);
    if (pruned.active_fan_in(pruned.spec.layers.size() - 1, 0) == 0) {
        diagnostics().refused_prunes.fetch_add(1, std::memory_order_relaxed);
        warn("prune refused: threshold " + format_double(tau) + " would disconnect the output unit");
        result.refused = true;
        return result;
    }
    for (const auto& e : model.active_edges())
        if (!pruned.is_active(e)) result.removed.push_back(e);
    result.model = std::move(pruned);
    result.params_after = param_count(result.model);
    return result;
}

/// prune_edges with config.prune_threshold, then config.fine_tune_steps of
/// training on the surviving parameters.
inline PruneResult prune(const Model& model, const Dataset& dataset, const TrainConfig& config) {
    config.validate();
    auto result = prune_edges(model, dataset, config.prune_threshold);
    if (result.refused || result.removed.empty() || config.fine_tune_steps == 0) return result;
    TrainConfig tune = config;
    tune.max_steps = config.fine_tune_steps;
    tune.seed = mix_seed(config.seed, 0xF17E);
    auto tuned = fit(result.model, dataset, tune);
    result.model = std::move(tuned.model);
    result.fine_tune = std::move(tuned.history);
    return result;
}

} // namespace quirk
