#pragma once

// Run configuration: a sectioned key = value text format.
//
//   # comment
//   [dataset]
//   equation = I.6.2
//
// Every key must belong to a known section; unknown sections or keys, and
// repeated keys, are errors naming the line.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "quirk/dr.hpp"
#include "quirk/errors.hpp"
#include "quirk/format.hpp"
#include "quirk/interpret.hpp"
#include "quirk/train.hpp"

namespace quirk {

class IniFile {
public:
    struct Entry {
        std::string value;
        std::size_t line = 0;
    };

    static IniFile parse(std::istream& in, const std::string& source = "config") {
        IniFile ini;
        ini.source_ = source;
        std::string line, section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view text = trim(line);
            if (text.empty() || text.front() == '#' || text.front() == ';') continue;
            const std::string where = source + ":" + std::to_string(line_no);
            if (text.front() == '[') {
                if (text.back() != ']') throw ConfigError(where + ": malformed section header");
                section = std::string(trim(text.substr(1, text.size() - 2)));
                if (section.empty()) throw ConfigError(where + ": empty section name");
                ini.sections_[section];
                continue;
            }
            const auto eq = text.find('=');
            if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
            if (section.empty()) throw ConfigError(where + ": key outside of any [section]");
            const std::string key(trim(text.substr(0, eq)));
            std::string_view value = trim(text.substr(eq + 1));
            if (const auto hash = value.find(" #"); hash != std::string_view::npos) value = trim(value.substr(0, hash));
            if (key.empty()) throw ConfigError(where + ": empty key");
            auto& keys = ini.sections_[section];
            if (keys.count(key)) throw ConfigError(where + ": duplicate key [" + section + "] " + key);
            keys[key] = {std::string(value), line_no};
        }
        return ini;
    }

    static IniFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file '" + path + "'");
        return parse(in, path);
    }

    bool has(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key) != 0;
    }

    std::optional<std::string> get(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        if (s == sections_.end()) return std::nullopt;
        const auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        return k->second.value;
    }

    /// Rejects any section or key not listed in `schema`.
    void check_known(const std::map<std::string, std::set<std::string>>& schema) const {
        for (const auto& [section, keys] : sections_) {
            const auto s = schema.find(section);
            if (s == schema.end()) throw ConfigError(source_ + ": unknown section [" + section + "]");
            for (const auto& [key, entry] : keys)
                if (!s->second.count(key))
                    throw ConfigError(source_ + ":" + std::to_string(entry.line) + ": unknown key [" + section + "] " + key);
        }
    }

    std::string location(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        if (s != sections_.end())
            if (const auto k = s->second.find(key); k != s->second.end())
                return source_ + ":" + std::to_string(k->second.line) + ": [" + section + "] " + key;
        return source_ + ": [" + section + "] " + key;
    }

private:
    std::string source_;
    std::map<std::string, std::map<std::string, Entry>> sections_;
};

struct DatasetConfig {
    std::string equation;   ///< registered equation id
    std::string csv;        ///< or a CSV file
    std::string univariate; ///< or a univariate target (fig4_fn, sin)
    std::size_t samples = kDefaultSamples;
    std::uint64_t seed = 0;
    double lo = std::numeric_limits<double>::quiet_NaN(); ///< univariate range; NaN means the target default
    double hi = std::numeric_limits<double>::quiet_NaN();
    bool normalize_target = false; ///< min-max map targets onto [-1, 1]
};

struct NetworkConfig {
    std::vector<std::size_t> widths;         ///< empty: {input_dim, 2, 1}
    std::vector<std::size_t> dr_layers{3};   ///< one value for all layers, or one per layer
    std::size_t qubits_per_edge = 1;
    bool entangle = false;
    bool rescale_bias = false;
    bool dense_head = false;
    std::string gates = GateTemplate().to_string();
    std::optional<std::uint64_t> seed;       ///< defaults to the training seed
};

struct BenchmarkConfig {
    std::vector<std::string> equations;
    std::vector<std::size_t> hidden{2}; ///< hidden widths; the input width is the equation arity
    std::string reference;               ///< optional CSV of published classical KAN results
    bool prune = true;
};

struct CompareConfig {
    std::string target = "fig4_fn";
    std::vector<std::size_t> budgets{16, 22, 46};
    std::vector<double> smoothness{1.0, 0.05};
    std::size_t samples = 1000;
    double lo = std::numeric_limits<double>::quiet_NaN();
    double hi = std::numeric_limits<double>::quiet_NaN();
    std::size_t curve_points = 400;
};

struct RunConfig {
    DatasetConfig dataset;
    NetworkConfig network;
    TrainConfig train;
    std::string output_dir = "quirk_out";
    bool svg = true;
    std::string model_path;
    BenchmarkConfig benchmark;
    CompareConfig compare;
    InterpretConfig interpret;
};

namespace detail {

class ConfigReader {
public:
    explicit ConfigReader(const IniFile& ini) : ini_(ini) {}

    template <typename Int>
    void integer(const char* section, const char* key, Int& out) const {
        if (const auto v = ini_.get(section, key)) {
            try {
                out = parse_integer<Int>(*v, ini_.location(section, key));
            } catch (const ParseError& e) {
                throw ConfigError(e.what());
            }
        }
    }

    void real(const char* section, const char* key, double& out) const {
        if (const auto v = ini_.get(section, key)) {
            try {
                out = parse_double(*v, ini_.location(section, key));
            } catch (const ParseError& e) {
                throw ConfigError(e.what());
            }
            if (!std::isfinite(out)) throw ConfigError(ini_.location(section, key) + ": value must be finite");
        }
    }

    void flag(const char* section, const char* key, bool& out) const {
        if (const auto v = ini_.get(section, key)) {
            if (*v == "true" || *v == "1" || *v == "yes") out = true;
            else if (*v == "false" || *v == "0" || *v == "no") out = false;
            else throw ConfigError(ini_.location(section, key) + ": expected true or false, found '" + *v + "'");
        }
    }

    void text(const char* section, const char* key, std::string& out) const {
        if (const auto v = ini_.get(section, key)) out = *v;
    }

    std::vector<std::string> list(const char* section, const char* key) const {
        std::vector<std::string> out;
        if (const auto v = ini_.get(section, key))
            for (auto item : split(*v, ','))
                if (!trim(item).empty()) out.emplace_back(trim(item));
        return out;
    }

    template <typename Int>
    void integers(const char* section, const char* key, std::vector<Int>& out) const {
        if (!ini_.has(section, key)) return;
        out.clear();
        for (const auto& item : list(section, key)) {
            try {
                out.push_back(parse_integer<Int>(item, ini_.location(section, key)));
            } catch (const ParseError& e) {
                throw ConfigError(e.what());
            }
        }
        if (out.empty()) throw ConfigError(ini_.location(section, key) + ": list is empty");
    }

    void reals(const char* section, const char* key, std::vector<double>& out) const {
        if (!ini_.has(section, key)) return;
        out.clear();
        for (const auto& item : list(section, key)) {
            try {
                out.push_back(parse_double(item, ini_.location(section, key)));
            } catch (const ParseError& e) {
                throw ConfigError(e.what());
            }
        }
        if (out.empty()) throw ConfigError(ini_.location(section, key) + ": list is empty");
    }

private:
    const IniFile& ini_;
};

} // namespace detail

inline const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> schema{
        {"dataset", {"equation", "csv", "univariate", "samples", "seed", "lo", "hi", "normalize_target"}},
        {"network", {"widths", "dr_layers", "qubits_per_edge", "entangle", "rescale_bias", "dense_head", "gates", "seed"}},
        {"train",
         {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "max_steps", "seed", "early_stop_patience",
          "eval_every", "prune_threshold", "fine_tune_steps", "threads"}},
        {"output", {"dir", "svg"}},
        {"model", {"path"}},
        {"benchmark", {"equations", "hidden", "reference", "prune"}},
        {"compare", {"target", "budgets", "smoothness", "samples", "lo", "hi", "curve_points"}},
        {"interpret", {"grid_size", "max_degree", "r2_target"}},
    };
    return schema;
}

/// Typed settings; every value is range-checked here, before any compute.
inline RunConfig parse_run_config(const IniFile& ini) {
    ini.check_known(config_schema());
    detail::ConfigReader r(ini);
    RunConfig c;

    r.text("dataset", "equation", c.dataset.equation);
    r.text("dataset", "csv", c.dataset.csv);
    r.text("dataset", "univariate", c.dataset.univariate);
    r.integer("dataset", "samples", c.dataset.samples);
    r.integer("dataset", "seed", c.dataset.seed);
    r.real("dataset", "lo", c.dataset.lo);
    r.real("dataset", "hi", c.dataset.hi);
    r.flag("dataset", "normalize_target", c.dataset.normalize_target);
    if (c.dataset.samples == 0) throw ConfigError(ini.location("dataset", "samples") + ": must be positive");

    r.integers("network", "widths", c.network.widths);
    r.integers("network", "dr_layers", c.network.dr_layers);
    r.integer("network", "qubits_per_edge", c.network.qubits_per_edge);
    r.flag("network", "entangle", c.network.entangle);
    r.flag("network", "rescale_bias", c.network.rescale_bias);
    r.flag("network", "dense_head", c.network.dense_head);
    r.text("network", "gates", c.network.gates);
    if (ini.has("network", "seed")) {
        std::uint64_t s = 0;
        r.integer("network", "seed", s);
        c.network.seed = s;
    }
    try {
        (void)GateTemplate::parse(c.network.gates);
    } catch (const Error& e) {
        throw ConfigError(ini.location("network", "gates") + ": " + e.what());
    }
    for (auto w : c.network.widths)
        if (w == 0) throw ConfigError(ini.location("network", "widths") + ": widths must be positive");
    for (auto l : c.network.dr_layers)
        if (l == 0) throw ConfigError(ini.location("network", "dr_layers") + ": layer counts must be positive");
    if (c.network.qubits_per_edge == 0 || c.network.qubits_per_edge > kHardMaxQubits)
        throw ConfigError(ini.location("network", "qubits_per_edge") + ": must be between 1 and " +
                          std::to_string(kHardMaxQubits));

    auto& t = c.train;
    r.real("train", "learning_rate", t.learning_rate);
    r.real("train", "beta1", t.beta1);
    r.real("train", "beta2", t.beta2);
    r.real("train", "epsilon", t.epsilon);
    r.integer("train", "batch_size", t.batch_size);
    r.integer("train", "max_steps", t.max_steps);
    r.integer("train", "seed", t.seed);
    r.integer("train", "early_stop_patience", t.early_stop_patience);
    r.integer("train", "eval_every", t.eval_every);
    r.real("train", "prune_threshold", t.prune_threshold);
    r.integer("train", "fine_tune_steps", t.fine_tune_steps);
    r.integer("train", "threads", t.threads);
    t.validate();

    r.text("output", "dir", c.output_dir);
    r.flag("output", "svg", c.svg);
    if (c.output_dir.empty()) throw ConfigError(ini.location("output", "dir") + ": must not be empty");
    r.text("model", "path", c.model_path);

    c.benchmark.equations = r.list("benchmark", "equations");
    r.integers("benchmark", "hidden", c.benchmark.hidden);
    r.text("benchmark", "reference", c.benchmark.reference);
    r.flag("benchmark", "prune", c.benchmark.prune);

    r.text("compare", "target", c.compare.target);
    r.integers("compare", "budgets", c.compare.budgets);
    r.reals("compare", "smoothness", c.compare.smoothness);
    r.integer("compare", "samples", c.compare.samples);
    r.real("compare", "lo", c.compare.lo);
    r.real("compare", "hi", c.compare.hi);
    r.integer("compare", "curve_points", c.compare.curve_points);
    for (double s : c.compare.smoothness)
        if (s < 0.0) throw ConfigError(ini.location("compare", "smoothness") + ": values must be >= 0");
    if (c.compare.samples == 0) throw ConfigError(ini.location("compare", "samples") + ": must be positive");
    if (c.compare.curve_points < 2) throw ConfigError(ini.location("compare", "curve_points") + ": must be at least 2");

    r.integer("interpret", "grid_size", c.interpret.grid_size);
    r.integer("interpret", "max_degree", c.interpret.max_degree);
    r.real("interpret", "r2_target", c.interpret.r2_target);
    if (c.interpret.grid_size < c.interpret.max_degree + 1)
        throw ConfigError(ini.location("interpret", "grid_size") + ": must exceed max_degree");
    return c;
}

inline RunConfig load_run_config(const std::string& path) { return parse_run_config(IniFile::load(path)); }

} // namespace quirk
