#pragma once

// Datasets: the Feynman-equation benchmark registry, univariate comparison
// targets and CSV input/output.
//
// Sampling uses one independent Rng stream per sample, seeded with
// mix_seed(seed, row), and draws each variable as lo + (hi - lo) * u with u
// built from the top 53 bits of a std::mt19937_64 output. Results are
// therefore identical on every platform.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "quirk/errors.hpp"
#include "quirk/format.hpp"
#include "quirk/network.hpp"
#include "quirk/random.hpp"

namespace quirk {

struct Variable {
    std::string name;
    double lo = 0.0;
    double hi = 1.0;
};

struct EquationDef {
    std::string id;
    std::string formula;
    std::vector<Variable> variables;
    std::function<double(std::span<const double>)> evaluate;

    std::size_t arity() const noexcept { return variables.size(); }
};

namespace detail {

inline double sq(double v) { return v * v; }

inline std::vector<EquationDef> build_registry() {
    using std::numbers::pi;
    using V = std::span<const double>;
    std::vector<EquationDef> r;
    auto add = [&](std::string id, std::string formula, std::vector<Variable> vars, std::function<double(V)> f) {
        r.push_back({std::move(id), std::move(formula), std::move(vars), std::move(f)});
    };
    const Variable unit_a{"a", 1.0, 3.0};
    const Variable unit_b{"b", 1.0, 3.0};

    add("I.6.2", "exp(-(theta/sigma)^2/2)/(sqrt(2*pi)*sigma)", {{"theta", 1.0, 3.0}, {"sigma", 1.0, 3.0}},
        [](V v) { return std::exp(-0.5 * sq(v[0] / v[1])) / (std::sqrt(2.0 * pi) * v[1]); });
    add("I.6.2b", "exp(-((theta-theta1)/sigma)^2/2)/(sqrt(2*pi)*sigma)",
        {{"theta", 1.0, 3.0}, {"theta1", 1.0, 3.0}, {"sigma", 1.0, 3.0}},
        [](V v) { return std::exp(-0.5 * sq((v[0] - v[1]) / v[2])) / (std::sqrt(2.0 * pi) * v[2]); });
    add("I.9.18", "a/((b-1)^2+(c-d)^2+(e-f)^2)",
        {unit_a, {"b", 2.0, 4.0}, {"c", 1.0, 3.0}, {"d", 1.0, 3.0}, {"e", 1.0, 3.0}, {"f", 1.0, 3.0}},
        [](V v) { return v[0] / (sq(v[1] - 1.0) + sq(v[2] - v[3]) + sq(v[4] - v[5])); });
    add("I.12.11", "1+a*sin(theta)", {unit_a, {"theta", 0.0, pi}}, [](V v) { return 1.0 + v[0] * std::sin(v[1]); });
    add("I.13.12", "a*(1/b-1)", {unit_a, unit_b}, [](V v) { return v[0] * (1.0 / v[1] - 1.0); });
    add("I.15.3x", "(1-a)/sqrt(1-b^2)", {{"a", 0.0, 0.9}, {"b", 0.0, 0.9}},
        [](V v) { return (1.0 - v[0]) / std::sqrt(1.0 - sq(v[1])); });
    add("I.16.6", "(a+b)/(1+a*b)", {{"a", 0.0, 0.9}, {"b", 0.0, 0.9}},
        [](V v) { return (v[0] + v[1]) / (1.0 + v[0] * v[1]); });
    add("I.18.4", "(1+a*b)/(1+a)", {unit_a, unit_b}, [](V v) { return (1.0 + v[0] * v[1]) / (1.0 + v[0]); });
    add("I.26.2", "asin(n*sin(theta2))", {{"n", 0.0, 1.0}, {"theta2", 1.0, 5.0}},
        [](V v) { return std::asin(std::clamp(v[0] * std::sin(v[1]), -1.0, 1.0)); });
    add("I.27.6", "1/(1+a*b)", {unit_a, unit_b}, [](V v) { return 1.0 / (1.0 + v[0] * v[1]); });
    add("I.29.16", "sqrt(1+a^2-2*a*cos(theta1-theta2))", {unit_a, {"theta1", 0.0, pi}, {"theta2", 0.0, pi}},
        [](V v) { return std::sqrt(std::max(0.0, 1.0 + sq(v[0]) - 2.0 * v[0] * std::cos(v[1] - v[2]))); });
    add("I.30.3", "sin(n*theta/2)^2/sin(theta/2)^2", {{"n", 1.0, 5.0}, {"theta", 1.0, 5.0}},
        [](V v) { return sq(std::sin(0.5 * v[0] * v[1])) / sq(std::sin(0.5 * v[1])); });
    add("I.30.5", "asin(a/n)", {{"a", 0.0, 1.0}, {"n", 1.0, 5.0}},
        [](V v) { return std::asin(std::min(1.0, v[0] / v[1])); });
    add("I.37.4", "1+a+2*sqrt(a)*cos(delta)", {unit_a, {"delta", 1.0, 5.0}},
        [](V v) { return 1.0 + v[0] + 2.0 * std::sqrt(v[0]) * std::cos(v[1]); });
    add("I.40.1", "n0*exp(-a)", {{"n0", 1.0, 3.0}, unit_a}, [](V v) { return v[0] * std::exp(-v[1]); });
    add("I.44.4", "n*log(a)", {{"n", 1.0, 3.0}, unit_a}, [](V v) { return v[0] * std::log(v[1]); });
    add("I.50.26", "cos(a)+alpha*cos(a)^2", {unit_a, {"alpha", 1.0, 3.0}},
        [](V v) { return std::cos(v[0]) + v[1] * sq(std::cos(v[0])); });
    add("II.2.42", "(a-1)*b", {unit_a, unit_b}, [](V v) { return (v[0] - 1.0) * v[1]; });
    add("II.6.15a", "c*sqrt(a^2+b^2)/(4*pi)", {unit_a, unit_b, {"c", 1.0, 3.0}},
        [](V v) { return v[2] * std::sqrt(sq(v[0]) + sq(v[1])) / (4.0 * pi); });
    add("II.11.7", "n0*(1+a*cos(theta))", {{"n0", 1.0, 3.0}, unit_a, {"theta", 0.0, pi}},
        [](V v) { return v[0] * (1.0 + v[1] * std::cos(v[2])); });
    add("II.11.27", "n*alpha/(1-n*alpha/3)", {{"n", 0.0, 1.0}, {"alpha", 0.0, 1.0}},
        [](V v) { return v[0] * v[1] / (1.0 - v[0] * v[1] / 3.0); });
    add("II.35.18", "n0/(exp(a)+exp(-a))", {{"n0", 1.0, 3.0}, unit_a},
        [](V v) { return v[0] / (std::exp(v[1]) + std::exp(-v[1])); });
    add("II.36.38", "a+alpha*b", {unit_a, {"alpha", 1.0, 3.0}, unit_b}, [](V v) { return v[0] + v[1] * v[2]; });
    add("II.38.3", "a/b", {unit_a, unit_b}, [](V v) { return v[0] / v[1]; });
    add("III.9.52", "a/(2*pi)*sin((b-c)/2)^2/((b-c)/2)^2", {unit_a, unit_b, {"c", 1.0, 3.0}}, [](V v) {
        const double d = 0.5 * (v[1] - v[2]);
        const double sinc2 = std::abs(d) < 1e-8 ? 1.0 - d * d / 3.0 : sq(std::sin(d) / d);
        return v[0] / (2.0 * pi) * sinc2;
    });
    add("III.10.19", "sqrt(1+a^2+b^2)", {unit_a, unit_b}, [](V v) { return std::sqrt(1.0 + sq(v[0]) + sq(v[1])); });
    add("III.17.37", "beta*(1+alpha*cos(theta))", {{"beta", 1.0, 3.0}, {"alpha", 1.0, 3.0}, {"theta", 0.0, pi}},
        [](V v) { return v[0] * (1.0 + v[1] * std::cos(v[2])); });
    add("xsq_minus_ysq", "x^2-y^2", {{"x", -1.0, 1.0}, {"y", -1.0, 1.0}}, [](V v) { return sq(v[0]) - sq(v[1]); });
    return r;
}

} // namespace detail

inline const std::vector<EquationDef>& equation_registry() {
    static const std::vector<EquationDef> registry = detail::build_registry();
    return registry;
}

/// The five equations of the headline benchmark table.
inline std::vector<std::string> benchmark_subset() { return {"I.6.2", "I.15.3x", "I.26.2", "III.9.52", "I.44.4"}; }

inline std::string known_equation_ids() {
    std::string out;
    for (const auto& e : equation_registry()) out += (out.empty() ? "" : ", ") + e.id;
    return out;
}

inline const EquationDef& find_equation(std::string_view id) {
    for (const auto& e : equation_registry())
        if (e.id == id) return e;
    throw LookupError("unknown equation '" + std::string(id) + "'; known: " + known_equation_ids());
}

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Seeded 70/15/15 partition of [0, n).
inline Split make_split(std::size_t n, std::uint64_t seed, double train_fraction = 0.70, double val_fraction = 0.15) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(mix_seed(seed, 0x5B117));
    rng.shuffle(std::span<std::size_t>(idx));
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n))));
    Split s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                        idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
    return s;
}

struct Dataset {
    std::string name;
    std::vector<std::string> input_names;
    std::string target_name = "y";
    std::vector<double> inputs; ///< row-major, size() x input_dim()
    std::vector<double> targets;
    Split split;
    std::uint64_t seed = 0;
    std::vector<std::string> row_labels; ///< optional leading "id" column

    std::size_t size() const noexcept { return targets.size(); }
    std::size_t input_dim() const noexcept { return input_names.size(); }
    std::span<const double> row(std::size_t i) const { return std::span<const double>(inputs).subspan(i * input_dim(), input_dim()); }

    void validate() const {
        if (targets.empty()) throw InvalidInput("dataset is empty");
        if (input_names.empty()) throw ShapeError("dataset has no input columns");
        if (inputs.size() != targets.size() * input_dim()) throw ShapeError("dataset inputs and targets disagree");
        if (!row_labels.empty() && row_labels.size() != targets.size()) throw ShapeError("row label count mismatch");
        for (double v : inputs)
            if (!std::isfinite(v)) throw InvalidInput("dataset contains a non-finite input");
        for (double v : targets)
            if (!std::isfinite(v)) throw InvalidInput("dataset contains a non-finite target");
        std::vector<std::uint8_t> seen(size(), 0);
        for (const auto* part : {&split.train, &split.validation, &split.test})
            for (std::size_t i : *part) {
                if (i >= size() || seen[i]) throw InvalidInput("split indices must be disjoint and in range");
                seen[i] = 1;
            }
        if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw InvalidInput("split does not cover every row");
    }

    /// Contiguous copy of the selected rows.
    struct Subset {
        std::vector<double> inputs;
        std::vector<double> targets;
        std::size_t input_dim = 0;

        Batch batch() const { return {inputs, targets, input_dim}; }
        std::size_t size() const noexcept { return targets.size(); }
    };

    Subset gather(std::span<const std::size_t> rows) const {
        Subset s;
        s.input_dim = input_dim();
        s.inputs.reserve(rows.size() * input_dim());
        for (std::size_t r : rows) {
            const auto x = row(r);
            s.inputs.insert(s.inputs.end(), x.begin(), x.end());
            s.targets.push_back(targets[r]);
        }
        return s;
    }

    Subset all() const {
        Subset s;
        s.inputs = inputs;
        s.targets = targets;
        s.input_dim = input_dim();
        return s;
    }
};

inline constexpr std::size_t kDefaultSamples = 3000;

/// Uniform samples of every variable over its declared range.
inline Dataset generate(const EquationDef& eq, std::size_t n_samples, std::uint64_t seed) {
    if (n_samples == 0) throw InvalidInput("n_samples must be positive");
    Dataset d;
    d.name = eq.id;
    for (const auto& v : eq.variables) d.input_names.push_back(v.name);
    d.seed = seed;
    d.inputs.resize(n_samples * eq.arity());
    d.targets.resize(n_samples);
    std::vector<double> x(eq.arity());
    for (std::size_t i = 0; i < n_samples; ++i) {
        Rng rng(mix_seed(seed, i));
        for (std::size_t j = 0; j < eq.arity(); ++j) {
            x[j] = rng.uniform(eq.variables[j].lo, eq.variables[j].hi);
            d.inputs[i * eq.arity() + j] = x[j];
        }
        d.targets[i] = eq.evaluate(x);
        if (!std::isfinite(d.targets[i])) throw NumericError(eq.id + ": non-finite target at sample " + std::to_string(i));
    }
    d.split = make_split(n_samples, seed);
    return d;
}

inline Dataset generate(std::string_view equation_id, std::size_t n_samples, std::uint64_t seed) {
    return generate(find_equation(equation_id), n_samples, seed);
}

/// (exp(sin x) * x^3 + x^2) / 15000
inline double fig4_function(double x) { return (std::exp(std::sin(x)) * x * x * x + x * x) / 15000.0; }

struct UnivariateTarget {
    std::string name;
    std::function<double(double)> f;
    double default_lo = 0.0;
    double default_hi = 1.0;
};

inline UnivariateTarget univariate_target(std::string_view name) {
    if (name == "fig4_fn") return {"fig4_fn", fig4_function, 0.0, 10.0};
    if (name == "sin") return {"sin", [](double x) { return std::sin(x); }, 0.0, 2.0 * std::numbers::pi};
    throw LookupError("unknown univariate target '" + std::string(name) + "'; known: fig4_fn, sin");
}

inline Dataset generate_univariate(const UnivariateTarget& target, std::size_t n_samples, double lo, double hi,
                                   std::uint64_t seed) {
    if (n_samples == 0) throw InvalidInput("n_samples must be positive");
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw InvalidInput("sampling range must satisfy lo < hi");
    Dataset d;
    d.name = target.name;
    d.input_names = {"x"};
    d.seed = seed;
    for (std::size_t i = 0; i < n_samples; ++i) {
        Rng rng(mix_seed(seed, i));
        const double x = rng.uniform(lo, hi);
        d.inputs.push_back(x);
        d.targets.push_back(target.f(x));
        if (!std::isfinite(d.targets.back())) throw NumericError(target.name + ": non-finite target");
    }
    d.split = make_split(n_samples, seed);
    return d;
}

inline Dataset generate_univariate(std::string_view name, std::size_t n_samples, double lo, double hi, std::uint64_t seed) {
    return generate_univariate(univariate_target(name), n_samples, lo, hi, seed);
}

// --- CSV -------------------------------------------------------------------

inline void write_csv(std::ostream& out, const Dataset& d) {
    const bool labels = !d.row_labels.empty();
    if (labels) out << "id,";
    for (const auto& n : d.input_names) out << n << ',';
    out << d.target_name << '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (labels) out << d.row_labels[i] << ',';
        for (double v : d.row(i)) out << format_double(v) << ',';
        out << format_double(d.targets[i]) << '\n';
    }
}

inline void save_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_csv(out, d);
    if (!out) throw IoError("failed writing '" + path + "'");
}

/// Header "x1,...,xn,y" then numeric rows; the last column is the target. A
/// leading column named "id" is read as row labels. The split is drawn from `seed`.
inline Dataset read_csv(std::istream& in, std::uint64_t seed = 0, const std::string& name = "csv") {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw ParseError("CSV is empty");
    for (auto cell : split(trim(line), ',')) header.emplace_back(trim(cell));
    const bool labels = !header.empty() && header.front() == "id";
    const std::size_t first_value = labels ? 1 : 0;
    if (header.size() < first_value + 2) throw ParseError("line 1: need at least one input column and a target column");
    {
        bool all_numeric = true;
        for (std::size_t c = 0; c < header.size(); ++c) {
            try {
                parse_double(header[c], "header");
            } catch (const ParseError&) {
                all_numeric = false;
            }
        }
        if (all_numeric) throw ParseError("line 1: missing header row (expected column names such as x1,...,xn,y)");
        for (const auto& h : header)
            if (h.empty()) throw ParseError("line 1: empty column name in header");
    }

    Dataset d;
    d.name = name;
    d.seed = seed;
    d.input_names.assign(header.begin() + static_cast<std::ptrdiff_t>(first_value), header.end() - 1);
    d.target_name = header.back();
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty()) continue;
        ++row;
        const auto cells = split(text, ',');
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(row) + " (line " + std::to_string(line_no) + "): expected " +
                             std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
        if (labels) d.row_labels.emplace_back(trim(cells[0]));
        for (std::size_t c = first_value; c < cells.size(); ++c) {
            const std::string ctx = "row " + std::to_string(row) + " (line " + std::to_string(line_no) + "), column '" + header[c] + "'";
            const double v = parse_double(trim(cells[c]), ctx);
            if (!std::isfinite(v)) throw ParseError(ctx + ": value is not finite");
            if (c + 1 == cells.size()) d.targets.push_back(v);
            else d.inputs.push_back(v);
        }
    }
    if (d.targets.empty()) throw ParseError("CSV has a header but no data rows");
    d.split = make_split(d.size(), seed);
    return d;
}

inline Dataset load_csv(const std::string& path, std::uint64_t seed = 0) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CSV file '" + path + "'");
    return read_csv(in, seed, path);
}

} // namespace quirk
