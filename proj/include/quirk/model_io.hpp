#pragma once

// Versioned text format for trained models.
//
//   quirk-model v1
//   input_dim <n>
//   dense_head <0|1>
//   seed <u64>
//   gates <template, e.g. RY:x,RZ:0,RX:1>
//   readout_qubit 0
//   num_layers <k>
//   layer <l> fan_in <i> units <u> dr_layers <L> qubits_per_edge <q> entangle <0|1> rescale_bias <0|1>
//   input_norm <n or 0 when not fitted>
//   feature <j> min <v> max <v>
//   dense w <v> b <v>
//   edges <count>
//   edge <layer> <input> <unit> active <0|1> thetas <v>...
//   end
//
// Edges appear in (layer, input, unit) order. Numbers use the shortest
// decimal form that reads back to the identical double.

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "quirk/errors.hpp"
#include "quirk/format.hpp"
#include "quirk/network.hpp"

namespace quirk {

inline constexpr std::string_view kModelMagic = "quirk-model";
inline constexpr std::string_view kModelVersion = "v1";

inline void write_model(std::ostream& out, const Model& model) {
    model.validate();
    const auto& spec = model.spec;
    out << kModelMagic << ' ' << kModelVersion << '\n';
    out << "input_dim " << spec.input_dim << '\n';
    out << "dense_head " << (spec.dense_head ? 1 : 0) << '\n';
    out << "seed " << spec.seed << '\n';
    out << "gates " << spec.gates.to_string() << '\n';
    out << "readout_qubit 0\n";
    out << "num_layers " << spec.layers.size() << '\n';
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& ls = spec.layers[l];
        out << "layer " << l << " fan_in " << ls.fan_in << " units " << ls.units << " dr_layers " << ls.dr_layers
            << " qubits_per_edge " << ls.qubits_per_edge << " entangle " << (ls.entangle ? 1 : 0) << " rescale_bias "
            << (ls.rescale_bias ? 1 : 0) << '\n';
    }
    out << "input_norm " << model.input_norm.size() << '\n';
    for (std::size_t j = 0; j < model.input_norm.size(); ++j)
        out << "feature " << j << " min " << format_double(model.input_norm[j].min) << " max "
            << format_double(model.input_norm[j].max) << '\n';
    out << "dense w " << format_double(model.dense_w) << " b " << format_double(model.dense_b) << '\n';
    std::size_t total = 0;
    for (const auto& lp : model.layers) total += lp.edges.size();
    out << "edges " << total << '\n';
    for (std::size_t l = 0; l < spec.layers.size(); ++l)
        for (std::size_t i = 0; i < spec.layers[l].fan_in; ++i)
            for (std::size_t u = 0; u < spec.layers[l].units; ++u) {
                const std::size_t e = i * spec.layers[l].units + u;
                out << "edge " << l << ' ' << i << ' ' << u << " active " << int(model.layers[l].active[e]) << " thetas";
                for (double t : model.layers[l].edges[e].thetas) out << ' ' << format_double(t);
                out << '\n';
            }
    out << "end\n";
}

namespace detail {

class ModelReader {
public:
    explicit ModelReader(std::istream& in) : in_(in) {}

    // Next non-empty line split into tokens; `what` names the expected record.
    std::vector<std::string_view> next(const std::string& what) {
        while (std::getline(in_, line_)) {
            ++line_no_;
            auto tokens = split_whitespace(line_);
            if (!tokens.empty()) return tokens;
        }
        throw ParseError("line " + std::to_string(line_no_ + 1) + ": unexpected end of file, expected '" + what + "'");
    }

    std::string where() const { return "line " + std::to_string(line_no_); }

    void expect(const std::vector<std::string_view>& tokens, std::size_t index, std::string_view keyword) const {
        if (index >= tokens.size() || tokens[index] != keyword)
            throw ParseError(where() + ": expected '" + std::string(keyword) + "'" +
                             (index < tokens.size() ? ", found '" + std::string(tokens[index]) + "'" : ""));
    }

    void expect_count(const std::vector<std::string_view>& tokens, std::size_t count) const {
        if (tokens.size() != count)
            throw ParseError(where() + ": expected " + std::to_string(count) + " fields in '" + std::string(tokens[0]) +
                             "' record, found " + std::to_string(tokens.size()));
    }

    std::size_t size_field(const std::vector<std::string_view>& tokens, std::size_t index, const std::string& field) const {
        if (index >= tokens.size()) throw ParseError(where() + ": missing value for '" + field + "'");
        return parse_integer<std::size_t>(tokens[index], where() + " field '" + field + "'");
    }

    double real_field(const std::vector<std::string_view>& tokens, std::size_t index, const std::string& field) const {
        if (index >= tokens.size()) throw ParseError(where() + ": missing value for '" + field + "'");
        return parse_double(tokens[index], where() + " field '" + field + "'");
    }

    bool flag_field(const std::vector<std::string_view>& tokens, std::size_t index, const std::string& field) const {
        const auto v = size_field(tokens, index, field);
        if (v > 1) throw ParseError(where() + " field '" + field + "': expected 0 or 1");
        return v == 1;
    }

    // Keyword followed by a single value.
    std::vector<std::string_view> keyed(std::string_view keyword) {
        auto t = next(std::string(keyword));
        expect(t, 0, keyword);
        expect_count(t, 2);
        return t;
    }

private:
    std::istream& in_;
    std::string line_;
    std::size_t line_no_ = 0;
};

} // namespace detail

inline Model read_model(std::istream& in) {
    detail::ModelReader r(in);
    auto header = r.next(std::string(kModelMagic));
    if (header[0] != kModelMagic) throw ParseError(r.where() + ": not a model file (missing '" + std::string(kModelMagic) + "' header)");
    if (header.size() != 2) throw ParseError(r.where() + ": header must be '" + std::string(kModelMagic) + " <version>'");
    if (header[1] != kModelVersion)
        throw VersionError("unsupported model format version '" + std::string(header[1]) + "'; supported versions: " +
                           std::string(kModelVersion));

    Model model;
    NetworkSpec& spec = model.spec;
    spec.input_dim = r.size_field(r.keyed("input_dim"), 1, "input_dim");
    spec.dense_head = r.flag_field(r.keyed("dense_head"), 1, "dense_head");
    spec.seed = parse_integer<std::uint64_t>(r.keyed("seed")[1], r.where() + " field 'seed'");
    {
        auto t = r.keyed("gates");
        spec.gates = GateTemplate::parse(t[1]);
    }
    if (r.size_field(r.keyed("readout_qubit"), 1, "readout_qubit") != 0)
        throw ParseError(r.where() + ": only readout_qubit 0 is supported");
    const std::size_t num_layers = r.size_field(r.keyed("num_layers"), 1, "num_layers");
    for (std::size_t l = 0; l < num_layers; ++l) {
        auto t = r.next("layer");
        r.expect(t, 0, "layer");
        r.expect_count(t, 14);
        if (r.size_field(t, 1, "layer") != l) throw ParseError(r.where() + ": layers out of order");
        LayerSpec ls;
        r.expect(t, 2, "fan_in");
        ls.fan_in = r.size_field(t, 3, "fan_in");
        r.expect(t, 4, "units");
        ls.units = r.size_field(t, 5, "units");
        r.expect(t, 6, "dr_layers");
        ls.dr_layers = r.size_field(t, 7, "dr_layers");
        r.expect(t, 8, "qubits_per_edge");
        ls.qubits_per_edge = r.size_field(t, 9, "qubits_per_edge");
        r.expect(t, 10, "entangle");
        ls.entangle = r.flag_field(t, 11, "entangle");
        r.expect(t, 12, "rescale_bias");
        ls.rescale_bias = r.flag_field(t, 13, "rescale_bias");
        spec.layers.push_back(ls);
    }
    try {
        spec.validate();
    } catch (const Error& e) {
        throw ParseError(std::string("inconsistent network description: ") + e.what());
    }

    const std::size_t norm_count = r.size_field(r.keyed("input_norm"), 1, "input_norm");
    for (std::size_t j = 0; j < norm_count; ++j) {
        auto t = r.next("feature");
        r.expect(t, 0, "feature");
        r.expect_count(t, 6);
        if (r.size_field(t, 1, "feature") != j) throw ParseError(r.where() + ": features out of order");
        r.expect(t, 2, "min");
        r.expect(t, 4, "max");
        model.input_norm.push_back({r.real_field(t, 3, "min"), r.real_field(t, 5, "max")});
    }
    {
        auto t = r.next("dense");
        r.expect(t, 0, "dense");
        r.expect_count(t, 5);
        r.expect(t, 1, "w");
        r.expect(t, 3, "b");
        model.dense_w = r.real_field(t, 2, "w");
        model.dense_b = r.real_field(t, 4, "b");
    }
    const std::size_t total = r.size_field(r.keyed("edges"), 1, "edges");
    std::size_t expected_total = 0;
    for (const auto& ls : spec.layers) expected_total += ls.edges();
    if (total != expected_total)
        throw ParseError(r.where() + ": edge count " + std::to_string(total) + " does not match the layer sizes (" +
                         std::to_string(expected_total) + ")");

    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& ls = spec.layers[l];
        LayerParams lp;
        for (std::size_t i = 0; i < ls.fan_in; ++i)
            for (std::size_t u = 0; u < ls.units; ++u) {
                auto t = r.next("edge");
                r.expect(t, 0, "edge");
                if (t.size() < 7) throw ParseError(r.where() + ": truncated edge record");
                if (r.size_field(t, 1, "layer") != l || r.size_field(t, 2, "input") != i || r.size_field(t, 3, "unit") != u)
                    throw ParseError(r.where() + ": edges out of (layer, input, unit) order");
                r.expect(t, 4, "active");
                const bool active = r.flag_field(t, 5, "active");
                r.expect(t, 6, "thetas");
                DRParams p = DRParams::zeros(ls.dr_layers, ls.qubits_per_edge, ls.entangle, spec.gates);
                if (t.size() != 7 + p.size())
                    throw ParseError(r.where() + ": edge has " + std::to_string(t.size() - 7) + " angles, expected " +
                                     std::to_string(p.size()));
                for (std::size_t k = 0; k < p.size(); ++k) p.thetas[k] = r.real_field(t, 7 + k, "thetas");
                lp.edges.push_back(std::move(p));
                lp.active.push_back(active ? 1 : 0);
            }
        model.layers.push_back(std::move(lp));
    }
    auto t = r.next("end");
    r.expect(t, 0, "end");
    try {
        model.validate();
    } catch (const Error& e) {
        throw ParseError(std::string("invalid model contents: ") + e.what());
    }
    return model;
}

inline void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_model(out, model);
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    return read_model(in);
}

} // namespace quirk
