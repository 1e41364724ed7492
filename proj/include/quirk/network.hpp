#pragma once

// Network assembly: layers of units that sum DR edge activations, rescale
// layers between them, and an optional scalar dense head.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "quirk/diagnostics.hpp"
#include "quirk/dr.hpp"
#include "quirk/errors.hpp"
#include "quirk/parallel.hpp"
#include "quirk/random.hpp"

namespace quirk {

struct LayerSpec {
    std::size_t fan_in = 1;
    std::size_t units = 1;
    std::size_t dr_layers = 1;
    std::size_t qubits_per_edge = 1;
    bool entangle = false;
    bool rescale_bias = false; ///< b of the rescale following this layer (unused on the last layer)

    std::size_t edges() const noexcept { return fan_in * units; }
    bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
    std::size_t input_dim = 1;
    std::vector<LayerSpec> layers;
    bool dense_head = false;
    std::uint64_t seed = 0;
    GateTemplate gates;

    /// widths = {input_dim, hidden..., 1}; one DR depth shared by every edge.
    static NetworkSpec from_widths(const std::vector<std::size_t>& widths, std::size_t dr_layers, bool dense_head,
                                   std::uint64_t seed = 0) {
        return from_widths(widths, std::vector<std::size_t>(widths.size() > 1 ? widths.size() - 1 : 0, dr_layers),
                           dense_head, seed);
    }

    static NetworkSpec from_widths(const std::vector<std::size_t>& widths, const std::vector<std::size_t>& dr_layers,
                                   bool dense_head, std::uint64_t seed = 0) {
        if (widths.size() < 2) throw InvalidInput("a network needs at least an input width and one layer width");
        if (dr_layers.size() != widths.size() - 1) throw ShapeError("need one DR depth per layer");
        NetworkSpec spec;
        spec.input_dim = widths.front();
        spec.dense_head = dense_head;
        spec.seed = seed;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            LayerSpec layer;
            layer.fan_in = widths[l];
            layer.units = widths[l + 1];
            layer.dr_layers = dr_layers[l];
            spec.layers.push_back(layer);
        }
        spec.validate();
        return spec;
    }

    void validate() const {
        if (input_dim == 0) throw InvalidInput("input_dim must be positive");
        if (layers.empty()) throw InvalidInput("network needs at least one layer");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& layer = layers[l];
            if (layer.fan_in == 0 || layer.units == 0 || layer.dr_layers == 0 || layer.qubits_per_edge == 0)
                throw InvalidInput("layer " + std::to_string(l) + ": all sizes must be positive");
            const std::size_t expected = l == 0 ? input_dim : layers[l - 1].units;
            if (layer.fan_in != expected)
                throw ShapeError("layer " + std::to_string(l) + " fan_in " + std::to_string(layer.fan_in) +
                                 " does not match previous width " + std::to_string(expected));
            if (layer.qubits_per_edge > kHardMaxQubits)
                throw CapacityError("layer " + std::to_string(l) + " qubits_per_edge exceeds hard cap");
        }
        if (layers.back().units != 1) throw ShapeError("the output layer must have exactly one unit");
    }

    bool operator==(const NetworkSpec&) const = default;
};

struct EdgeId {
    std::size_t layer = 0;
    std::size_t input = 0;
    std::size_t unit = 0;

    auto operator<=>(const EdgeId&) const = default;
};

inline std::string to_string(const EdgeId& e) {
    return "(" + std::to_string(e.layer) + "," + std::to_string(e.input) + "," + std::to_string(e.unit) + ")";
}

struct FeatureRange {
    double min = 0.0;
    double max = 1.0;

    bool operator==(const FeatureRange&) const = default;
};

/// Edges of one layer, indexed input * units + unit.
struct LayerParams {
    std::vector<DRParams> edges;
    std::vector<std::uint8_t> active;
};

struct Model {
    NetworkSpec spec;
    std::vector<LayerParams> layers;
    double dense_w = 1.0;
    double dense_b = 0.0;
    std::vector<FeatureRange> input_norm; ///< empty until fitted

    /// Fresh model: angles ~ Uniform(-pi, pi) from spec.seed, dense_w = 1, dense_b = 0.
    static Model initialize(const NetworkSpec& spec) {
        spec.validate();
        Model m;
        m.spec = spec;
        Rng rng(mix_seed(spec.seed, 0x51ED));
        for (const auto& layer : spec.layers) {
            LayerParams lp;
            for (std::size_t e = 0; e < layer.edges(); ++e)
                lp.edges.push_back(DRParams::uniform(layer.dr_layers, rng, layer.qubits_per_edge, layer.entangle, spec.gates));
            lp.active.assign(layer.edges(), 1);
            m.layers.push_back(std::move(lp));
        }
        return m;
    }

    std::size_t edge_index(const EdgeId& e) const { return e.input * spec.layers.at(e.layer).units + e.unit; }

    void check_edge(const EdgeId& e) const {
        if (e.layer >= spec.layers.size() || e.input >= spec.layers[e.layer].fan_in || e.unit >= spec.layers[e.layer].units)
            throw LookupError("no edge " + to_string(e) + " in this network");
    }

    const DRParams& edge(const EdgeId& e) const {
        check_edge(e);
        return layers[e.layer].edges[edge_index(e)];
    }
    DRParams& edge(const EdgeId& e) {
        check_edge(e);
        return layers[e.layer].edges[edge_index(e)];
    }

    bool is_active(const EdgeId& e) const {
        check_edge(e);
        return layers[e.layer].active[edge_index(e)] != 0;
    }

    /// Number of surviving incoming edges of a unit; this is the |I| used by
    /// the rescale that follows the unit.
    std::size_t active_fan_in(std::size_t layer, std::size_t unit) const {
        const auto& ls = spec.layers.at(layer);
        std::size_t n = 0;
        for (std::size_t i = 0; i < ls.fan_in; ++i) n += layers[layer].active[i * ls.units + unit];
        return n;
    }

    std::vector<EdgeId> active_edges() const {
        std::vector<EdgeId> out;
        for (std::size_t l = 0; l < spec.layers.size(); ++l)
            for (std::size_t i = 0; i < spec.layers[l].fan_in; ++i)
                for (std::size_t u = 0; u < spec.layers[l].units; ++u)
                    if (layers[l].active[i * spec.layers[l].units + u]) out.push_back({l, i, u});
        return out;
    }

    bool input_norm_fitted() const noexcept { return !input_norm.empty(); }

    void validate() const {
        spec.validate();
        if (layers.size() != spec.layers.size()) throw ShapeError("model has the wrong number of layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& ls = spec.layers[l];
            if (layers[l].edges.size() != ls.edges() || layers[l].active.size() != ls.edges())
                throw ShapeError("layer " + std::to_string(l) + " has the wrong number of edges");
            for (const auto& e : layers[l].edges) {
                e.validate();
                if (e.num_layers != ls.dr_layers || e.num_qubits != ls.qubits_per_edge || e.entangle != ls.entangle ||
                    !(e.gates == spec.gates))
                    throw ShapeError("layer " + std::to_string(l) + " edge parameters do not match the layer spec");
            }
        }
        if (!std::isfinite(dense_w) || !std::isfinite(dense_b)) throw InvalidInput("dense head parameters must be finite");
        if (!input_norm.empty()) {
            if (input_norm.size() != spec.input_dim) throw ShapeError("input_norm must have one entry per input");
            for (const auto& r : input_norm)
                if (!(r.min < r.max) || !std::isfinite(r.min) || !std::isfinite(r.max))
                    throw InvalidInput("input_norm ranges must be finite with min < max");
        }
    }
};

/// Per-feature (min, max) from the selected rows of a row-major matrix.
/// Constant features get a unit-width range centred on their value.
inline std::vector<FeatureRange> fit_feature_ranges(std::span<const double> inputs, std::size_t dim,
                                                    std::span<const std::size_t> rows) {
    if (dim == 0 || rows.empty()) throw InvalidInput("cannot fit input normalisation on no data");
    std::vector<FeatureRange> out(dim, FeatureRange{INFINITY, -INFINITY});
    for (std::size_t r : rows)
        for (std::size_t j = 0; j < dim; ++j) {
            const double v = inputs[r * dim + j];
            out[j].min = std::min(out[j].min, v);
            out[j].max = std::max(out[j].max, v);
        }
    for (auto& f : out)
        if (!(f.min < f.max)) {
            f.min -= 0.5;
            f.max += 0.5;
        }
    return out;
}

/// Affine map of raw features onto [0, pi]; values outside the fitted range are clamped.
inline std::vector<double> normalize_input(std::span<const double> raw, const Model& model) {
    if (!model.input_norm_fitted()) throw StateError("input normalisation has not been fitted");
    if (raw.size() != model.spec.input_dim)
        throw ShapeError("input has " + std::to_string(raw.size()) + " features, model expects " +
                         std::to_string(model.spec.input_dim));
    std::vector<double> out(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j) {
        if (!std::isfinite(raw[j])) throw InvalidInput("input feature is not finite");
        const auto& r = model.input_norm[j];
        double v = (raw[j] - r.min) / (r.max - r.min) * std::numbers::pi;
        if (v < 0.0 || v > std::numbers::pi) {
            diagnostics().clamped_network_inputs.fetch_add(1, std::memory_order_relaxed);
            v = std::clamp(v, 0.0, std::numbers::pi);
        }
        out[j] = v;
    }
    return out;
}

/// ((v / |I|) + (1 - b)) / 2 * pi. Inputs beyond +-|I| are clamped; the
/// result is kept inside [0, pi].
inline double rescale(double value, std::size_t fan_in, bool bias) {
    if (fan_in == 0) throw InvalidInput("rescale: fan_in must be positive");
    const double bound = static_cast<double>(fan_in);
    if (value < -bound || value > bound) {
        diagnostics().clamped_rescale_inputs.fetch_add(1, std::memory_order_relaxed);
        value = std::clamp(value, -bound, bound);
    }
    const double out = ((value / bound) + (bias ? 0.0 : 1.0)) / 2.0 * std::numbers::pi;
    return std::clamp(out, 0.0, std::numbers::pi);
}

inline std::vector<double> rescale(std::span<const double> values, std::size_t fan_in, bool bias) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = rescale(values[i], fan_in, bias);
    return out;
}

/// Unit outputs of one layer: unit u = sum over active inputs i of DR(x_i; theta_iu).
inline std::vector<double> layer_forward(std::span<const double> inputs, const Model& model, std::size_t layer) {
    const auto& ls = model.spec.layers.at(layer);
    if (inputs.size() != ls.fan_in)
        throw ShapeError("layer " + std::to_string(layer) + " expects " + std::to_string(ls.fan_in) + " inputs, got " +
                         std::to_string(inputs.size()));
    std::vector<double> out(ls.units, 0.0);
    const auto& lp = model.layers[layer];
    for (std::size_t i = 0; i < ls.fan_in; ++i)
        for (std::size_t u = 0; u < ls.units; ++u) {
            const std::size_t e = i * ls.units + u;
            if (lp.active[e]) out[u] += dr_forward(inputs[i], lp.edges[e]);
        }
    return out;
}

/// Intermediate values of one forward pass.
struct ForwardTrace {
    std::vector<std::vector<double>> activations; ///< input of each layer, in [0, pi]
    std::vector<std::vector<double>> unit_sums;   ///< pre-rescale unit outputs of each layer
    double output = 0.0;
};

/// Forward pass from inputs that are already normalised into [0, pi].
inline ForwardTrace trace_normalized(std::span<const double> normalized, const Model& model) {
    if (normalized.size() != model.spec.input_dim)
        throw ShapeError("input has " + std::to_string(normalized.size()) + " features, model expects " +
                         std::to_string(model.spec.input_dim));
    ForwardTrace t;
    std::vector<double> act(normalized.begin(), normalized.end());
    for (std::size_t l = 0; l < model.spec.layers.size(); ++l) {
        t.activations.push_back(act);
        auto sums = layer_forward(act, model, l);
        t.unit_sums.push_back(sums);
        if (l + 1 < model.spec.layers.size()) {
            act.resize(sums.size());
            for (std::size_t u = 0; u < sums.size(); ++u) {
                const std::size_t n = model.active_fan_in(l, u);
                act[u] = n == 0 ? 0.0 : rescale(sums[u], n, model.spec.layers[l].rescale_bias);
            }
        }
    }
    const double last = t.unit_sums.back().front();
    t.output = model.spec.dense_head ? model.dense_w * last + model.dense_b : last;
    return t;
}

inline double forward_normalized(std::span<const double> normalized, const Model& model) {
    return trace_normalized(normalized, model).output;
}

inline double network_forward(std::span<const double> raw_input, const Model& model) {
    return forward_normalized(normalize_input(raw_input, model), model);
}

/// Trainable parameters: every active edge angle plus the two dense terms.
inline std::size_t param_count(const Model& model) {
    std::size_t n = model.spec.dense_head ? 2 : 0;
    for (const auto& e : model.active_edges()) n += model.edge(e).size();
    return n;
}

/// Active edge angles in (layer, input, unit) order, then dense w, b.
inline std::vector<double> flatten_parameters(const Model& model) {
    std::vector<double> out;
    for (const auto& e : model.active_edges()) {
        const auto& t = model.edge(e).thetas;
        out.insert(out.end(), t.begin(), t.end());
    }
    if (model.spec.dense_head) {
        out.push_back(model.dense_w);
        out.push_back(model.dense_b);
    }
    return out;
}

inline void assign_parameters(Model& model, std::span<const double> flat) {
    if (flat.size() != param_count(model)) throw ShapeError("flat parameter vector has the wrong length");
    std::size_t k = 0;
    for (const auto& e : model.active_edges())
        for (auto& t : model.edge(e).thetas) t = flat[k++];
    if (model.spec.dense_head) {
        model.dense_w = flat[k++];
        model.dense_b = flat[k++];
    }
}

/// Gradient of 1/2 * mean squared error, shaped like the model.
struct ModelGradient {
    std::vector<std::vector<std::vector<double>>> edges; ///< [layer][edge][angle]; zero for inactive edges
    double dense_w = 0.0;
    double dense_b = 0.0;
    double loss = 0.0;         ///< 1/2 * mean squared error
    double sum_squared = 0.0;  ///< sum of squared residuals
    std::size_t samples = 0;

    static ModelGradient zeros_like(const Model& model) {
        ModelGradient g;
        for (const auto& lp : model.layers) {
            std::vector<std::vector<double>> layer;
            for (const auto& e : lp.edges) layer.emplace_back(e.size(), 0.0);
            g.edges.push_back(std::move(layer));
        }
        return g;
    }

    void add(const ModelGradient& other) {
        for (std::size_t l = 0; l < edges.size(); ++l)
            for (std::size_t e = 0; e < edges[l].size(); ++e)
                for (std::size_t k = 0; k < edges[l][e].size(); ++k) edges[l][e][k] += other.edges[l][e][k];
        dense_w += other.dense_w;
        dense_b += other.dense_b;
        sum_squared += other.sum_squared;
        samples += other.samples;
    }

    /// Same order as flatten_parameters.
    std::vector<double> flatten(const Model& model) const {
        std::vector<double> out;
        for (const auto& e : model.active_edges()) {
            const auto& g = edges[e.layer][model.edge_index(e)];
            out.insert(out.end(), g.begin(), g.end());
        }
        if (model.spec.dense_head) {
            out.push_back(dense_w);
            out.push_back(dense_b);
        }
        return out;
    }
};

/// Rows of a row-major input matrix with their targets. Inputs are raw
/// features, mapped through the model's input normalisation.
struct Batch {
    std::span<const double> inputs;
    std::span<const double> targets;
    std::size_t input_dim = 0;

    std::size_t size() const noexcept { return targets.size(); }
};

namespace detail {

// Kernels for every edge of a model, compiled once per parameter update.
struct CompiledModel {
    std::vector<std::vector<DRKernel>> kernels;
    std::vector<std::vector<std::size_t>> fan_in; ///< active fan-in per unit

    explicit CompiledModel(const Model& model) {
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            std::vector<DRKernel> layer;
            for (const auto& e : model.layers[l].edges) layer.emplace_back(e, std::max(kDefaultMaxQubits, e.num_qubits));
            kernels.push_back(std::move(layer));
            std::vector<std::size_t> counts;
            for (std::size_t u = 0; u < model.spec.layers[l].units; ++u) counts.push_back(model.active_fan_in(l, u));
            fan_in.push_back(std::move(counts));
        }
    }
};

// Accumulates residual-weighted gradients of rows [begin, end) into g.
inline void accumulate_gradient(const Model& model, const CompiledModel& compiled, const Batch& batch,
                                std::size_t begin, std::size_t end, double inv_n, ModelGradient& g) {
    const std::size_t num_layers = model.spec.layers.size();
    std::vector<std::vector<double>> act(num_layers), sums(num_layers), dx(num_layers);
    std::vector<std::vector<std::vector<double>>> dtheta(num_layers);
    std::vector<std::vector<std::uint8_t>> saturated(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) {
        const auto& ls = model.spec.layers[l];
        act[l].resize(ls.fan_in);
        sums[l].resize(ls.units);
        dx[l].resize(ls.edges());
        saturated[l].resize(ls.units);
        for (const auto& e : model.layers[l].edges) dtheta[l].emplace_back(e.size(), 0.0);
    }
    std::vector<double> up, down;

    for (std::size_t r = begin; r < end; ++r) {
        act[0] = normalize_input(batch.inputs.subspan(r * batch.input_dim, batch.input_dim), model);
        for (std::size_t l = 0; l < num_layers; ++l) {
            const auto& ls = model.spec.layers[l];
            std::fill(sums[l].begin(), sums[l].end(), 0.0);
            for (std::size_t i = 0; i < ls.fan_in; ++i)
                for (std::size_t u = 0; u < ls.units; ++u) {
                    const std::size_t e = i * ls.units + u;
                    if (!model.layers[l].active[e]) continue;
                    sums[l][u] += compiled.kernels[l][e].value_and_gradient(act[l][i], dtheta[l][e], dx[l][e]);
                }
            if (l + 1 < num_layers) {
                for (std::size_t u = 0; u < ls.units; ++u) {
                    const std::size_t n = compiled.fan_in[l][u];
                    const double bound = static_cast<double>(n);
                    saturated[l][u] = n == 0 || sums[l][u] < -bound || sums[l][u] > bound;
                    act[l + 1][u] = n == 0 ? 0.0 : rescale(sums[l][u], n, ls.rescale_bias);
                    if (ls.rescale_bias && act[l + 1][u] == 0.0) saturated[l][u] = 1;
                }
            }
        }
        const double last = sums.back().front();
        const double y = model.spec.dense_head ? model.dense_w * last + model.dense_b : last;
        const double residual = y - batch.targets[r];
        if (!std::isfinite(residual)) throw NumericError("non-finite residual at row " + std::to_string(r));
        g.sum_squared += residual * residual;
        g.samples += 1;
        const double rw = residual * inv_n;

        up.assign(1, rw);
        if (model.spec.dense_head) {
            g.dense_w += rw * last;
            g.dense_b += rw;
            up[0] = rw * model.dense_w;
        }
        for (std::size_t l = num_layers; l-- > 0;) {
            const auto& ls = model.spec.layers[l];
            down.assign(ls.fan_in, 0.0);
            for (std::size_t i = 0; i < ls.fan_in; ++i)
                for (std::size_t u = 0; u < ls.units; ++u) {
                    const std::size_t e = i * ls.units + u;
                    if (!model.layers[l].active[e] || up[u] == 0.0) continue;
                    auto& ge = g.edges[l][e];
                    const auto& de = dtheta[l][e];
                    for (std::size_t k = 0; k < ge.size(); ++k) ge[k] += up[u] * de[k];
                    down[i] += up[u] * dx[l][e];
                }
            if (l == 0) break;
            up.assign(ls.fan_in, 0.0);
            for (std::size_t i = 0; i < ls.fan_in; ++i) {
                if (saturated[l - 1][i]) continue;
                up[i] = down[i] * std::numbers::pi / (2.0 * static_cast<double>(compiled.fan_in[l - 1][i]));
            }
        }
    }
}

} // namespace detail

inline constexpr std::size_t kGradientChunk = 64;

/// Exact gradient of 1/2 * mean((y - t)^2) over the batch. Rows are processed
/// in fixed chunks that are reduced in order, so the result is bitwise
/// independent of the thread count.
inline ModelGradient network_backward(const Batch& batch, const Model& model, std::size_t threads = 1) {
    if (batch.input_dim != model.spec.input_dim) throw ShapeError("batch input width does not match the model");
    if (batch.inputs.size() != batch.size() * batch.input_dim) throw ShapeError("batch inputs and targets disagree");
    ModelGradient total = ModelGradient::zeros_like(model);
    if (batch.size() == 0) return total;
    const detail::CompiledModel compiled(model);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const std::size_t chunks = (batch.size() + kGradientChunk - 1) / kGradientChunk;
    std::vector<ModelGradient> partial(chunks, ModelGradient::zeros_like(model));
    parallel_for(chunks, threads, [&](std::size_t c) {
        const std::size_t begin = c * kGradientChunk;
        detail::accumulate_gradient(model, compiled, batch, begin, std::min(batch.size(), begin + kGradientChunk), inv_n,
                                    partial[c]);
    });
    for (const auto& p : partial) total.add(p);
    total.loss = 0.5 * total.sum_squared * inv_n;
    return total;
}

/// Forward pass over many rows using compiled kernels.
inline std::vector<double> predict(const Model& model, std::span<const double> inputs, std::size_t input_dim,
                                   std::size_t threads = 1) {
    if (input_dim != model.spec.input_dim) throw ShapeError("input width does not match the model");
    if (input_dim == 0 || inputs.size() % input_dim != 0) throw ShapeError("input matrix is ragged");
    const std::size_t rows = inputs.size() / input_dim;
    std::vector<double> out(rows);
    const detail::CompiledModel compiled(model);
    const std::size_t num_layers = model.spec.layers.size();
    const std::size_t chunks = (rows + kGradientChunk - 1) / kGradientChunk;
    parallel_for(chunks, threads, [&](std::size_t c) {
        std::vector<double> act, next;
        for (std::size_t r = c * kGradientChunk; r < std::min(rows, (c + 1) * kGradientChunk); ++r) {
            act = normalize_input(inputs.subspan(r * input_dim, input_dim), model);
            for (std::size_t l = 0; l < num_layers; ++l) {
                const auto& ls = model.spec.layers[l];
                next.assign(ls.units, 0.0);
                for (std::size_t i = 0; i < ls.fan_in; ++i)
                    for (std::size_t u = 0; u < ls.units; ++u) {
                        const std::size_t e = i * ls.units + u;
                        if (model.layers[l].active[e]) next[u] += compiled.kernels[l][e].value(act[i]);
                    }
                if (l + 1 < num_layers)
                    for (std::size_t u = 0; u < ls.units; ++u) {
                        const std::size_t n = compiled.fan_in[l][u];
                        next[u] = n == 0 ? 0.0 : rescale(next[u], n, ls.rescale_bias);
                    }
                act.swap(next);
            }
            out[r] = model.spec.dense_head ? model.dense_w * act[0] + model.dense_b : act[0];
        }
    });
    return out;
}

} // namespace quirk
