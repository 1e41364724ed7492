#pragma once

// Interpretability: sample every edge function on a grid over [0, pi], fit
// low-degree polynomials, and rebuild the network with the polynomials in
// place of the circuits (the surrogate).
//
// Polynomials are expressed in t = 2x/pi - 1, the edge input mapped onto
// [-1, 1]. For first-layer edges t is an affine function of the raw feature:
// t = (2 * raw - (min + max)) / (max - min).

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "quirk/data.hpp"
#include "quirk/dr.hpp"
#include "quirk/errors.hpp"
#include "quirk/format.hpp"
#include "quirk/network.hpp"
#include "quirk/svg.hpp"
#include "quirk/train.hpp"

namespace quirk {

struct EdgeFunctionSample {
    EdgeId edge;
    std::vector<double> xs;
    std::vector<double> ys;
};

/// The edge's circuit alone on a uniform grid over [0, pi], endpoints included.
inline EdgeFunctionSample sample_edge(const Model& model, const EdgeId& edge, std::size_t grid_size = 257) {
    model.check_edge(edge);
    if (grid_size < 2) throw InvalidInput("grid_size must be at least 2");
    EdgeFunctionSample s{edge, {}, {}};
    const auto& params = model.edge(edge);
    for (std::size_t k = 0; k < grid_size; ++k) {
        const double x = k + 1 == grid_size ? std::numbers::pi
                                            : std::numbers::pi * static_cast<double>(k) / static_cast<double>(grid_size - 1);
        s.xs.push_back(x);
    }
    s.ys = dr_forward_batch(s.xs, params);
    return s;
}

/// Polynomial in t = (2x - (lo + hi)) / (hi - lo), monomial coefficients in ascending degree.
struct PolyFit {
    std::vector<double> coeffs;
    std::size_t degree = 0;
    double r_squared = 0.0;
    double lo = 0.0;
    double hi = std::numbers::pi;

    double to_t(double x) const { return (2.0 * x - (lo + hi)) / (hi - lo); }

    double evaluate(double x) const {
        const double t = to_t(x);
        double v = 0.0;
        for (std::size_t k = coeffs.size(); k-- > 0;) v = v * t + coeffs[k];
        return v;
    }
};

namespace detail {

// Monomial coefficients of the Chebyshev polynomials T_0..T_n.
inline std::vector<std::vector<double>> chebyshev_monomials(std::size_t n) {
    std::vector<std::vector<double>> t(n + 1);
    t[0] = {1.0};
    if (n >= 1) t[1] = {0.0, 1.0};
    for (std::size_t k = 2; k <= n; ++k) {
        t[k].assign(k + 1, 0.0);
        for (std::size_t j = 0; j < t[k - 1].size(); ++j) t[k][j + 1] += 2.0 * t[k - 1][j];
        for (std::size_t j = 0; j < t[k - 2].size(); ++j) t[k][j] -= t[k - 2][j];
    }
    return t;
}

inline PolyFit fit_degree(std::span<const double> xs, std::span<const double> ys, std::size_t degree, double lo, double hi) {
    const auto n = static_cast<Eigen::Index>(xs.size());
    const auto m = static_cast<Eigen::Index>(degree + 1);
    Eigen::MatrixXd v(n, m);
    PolyFit fit;
    fit.lo = lo;
    fit.hi = hi;
    fit.degree = degree;
    for (Eigen::Index r = 0; r < n; ++r) {
        const double t = fit.to_t(xs[static_cast<std::size_t>(r)]);
        v(r, 0) = 1.0;
        if (m > 1) v(r, 1) = t;
        for (Eigen::Index k = 2; k < m; ++k) v(r, k) = 2.0 * t * v(r, k - 1) - v(r, k - 2);
    }
    const Eigen::Map<const Eigen::VectorXd> y(ys.data(), n);
    const Eigen::VectorXd a = (v.transpose() * v).ldlt().solve(v.transpose() * y);
    const auto basis = chebyshev_monomials(degree);
    fit.coeffs.assign(degree + 1, 0.0);
    for (std::size_t k = 0; k <= degree; ++k)
        for (std::size_t j = 0; j < basis[k].size(); ++j) fit.coeffs[j] += a(static_cast<Eigen::Index>(k)) * basis[k][j];

    const double mean = y.mean();
    const double ss_tot = (y.array() - mean).square().sum();
    const double ss_res = (v * a - y).squaredNorm();
    const double scale = std::max(1.0, y.squaredNorm());
    if (ss_tot <= 1e-24 * scale) fit.r_squared = ss_res <= 1e-20 * scale ? 1.0 : 0.0;
    else fit.r_squared = std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
    return fit;
}

} // namespace detail

/// Least-squares fits of increasing degree on a Chebyshev basis over the
/// sample range; returns the first with r_squared >= r2_target, otherwise the
/// max_degree fit.
inline PolyFit fit_poly(std::span<const double> xs, std::span<const double> ys, std::size_t max_degree = 6,
                        double r2_target = 0.99) {
    if (xs.size() != ys.size()) throw ShapeError("fit_poly: xs and ys differ in length");
    if (xs.size() < max_degree + 1) throw InvalidInput("fit_poly: need at least max_degree + 1 points");
    for (std::size_t k = 0; k < xs.size(); ++k)
        if (!std::isfinite(xs[k]) || !std::isfinite(ys[k])) throw InvalidInput("fit_poly: samples must be finite");
    const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
    if (!(*lo_it < *hi_it)) throw InvalidInput("fit_poly: degenerate grid, all xs are equal");
    PolyFit best;
    for (std::size_t d = 0; d <= max_degree; ++d) {
        best = detail::fit_degree(xs, ys, d, *lo_it, *hi_it);
        if (best.r_squared >= r2_target) break;
    }
    return best;
}

inline PolyFit fit_poly(const EdgeFunctionSample& s, std::size_t max_degree = 6, double r2_target = 0.99) {
    return fit_poly(s.xs, s.ys, max_degree, r2_target);
}

/// Polynomial as text in the variable `var`, e.g. "0.5 - 1.25*t + 0.75*t^2".
inline std::string poly_to_string(std::span<const double> coeffs, const std::string& var = "t") {
    std::ostringstream o;
    o.precision(6);
    bool first = true;
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
        const double c = coeffs[k];
        if (c == 0.0 && coeffs.size() > 1) continue;
        if (first) o << c;
        else o << (c < 0 ? " - " : " + ") << std::abs(c);
        if (k >= 1) o << '*' << var;
        if (k >= 2) o << '^' << k;
        first = false;
    }
    if (first) o << 0;
    return o.str();
}

/// The network with every active edge replaced by a polynomial in its input.
struct Surrogate {
    NetworkSpec spec;
    std::vector<FeatureRange> input_norm;
    double dense_w = 1.0;
    double dense_b = 0.0;
    std::vector<std::vector<std::uint8_t>> active;
    std::vector<std::vector<PolyFit>> fits; ///< [layer][input * units + unit]

    double evaluate(std::span<const double> raw) const {
        if (raw.size() != spec.input_dim) throw ShapeError("surrogate: wrong input width");
        std::vector<double> act(raw.size()), next;
        for (std::size_t j = 0; j < raw.size(); ++j) {
            const auto& r = input_norm[j];
            act[j] = std::clamp((raw[j] - r.min) / (r.max - r.min) * std::numbers::pi, 0.0, std::numbers::pi);
        }
        for (std::size_t l = 0; l < spec.layers.size(); ++l) {
            const auto& ls = spec.layers[l];
            next.assign(ls.units, 0.0);
            std::vector<std::size_t> fan(ls.units, 0);
            for (std::size_t i = 0; i < ls.fan_in; ++i)
                for (std::size_t u = 0; u < ls.units; ++u) {
                    const std::size_t e = i * ls.units + u;
                    if (!active[l][e]) continue;
                    next[u] += fits[l][e].evaluate(act[i]);
                    ++fan[u];
                }
            if (l + 1 < spec.layers.size())
                for (std::size_t u = 0; u < ls.units; ++u) {
                    if (fan[u] == 0) {
                        next[u] = 0.0;
                        continue;
                    }
                    const double bound = static_cast<double>(fan[u]);
                    const double v = std::clamp(next[u], -bound, bound);
                    next[u] = std::clamp(((v / bound) + (ls.rescale_bias ? 0.0 : 1.0)) / 2.0 * std::numbers::pi, 0.0,
                                         std::numbers::pi);
                }
            act.swap(next);
        }
        return spec.dense_head ? dense_w * act[0] + dense_b : act[0];
    }
};

struct InterpretConfig {
    std::size_t grid_size = 257;
    std::size_t max_degree = 6;
    double r2_target = 0.99;
};

struct EdgeReport {
    EdgeId edge;
    PolyFit fit;
};

struct EvaluationPoint {
    std::vector<double> input;
    double model = 0.0;
    double target = 0.0;
};

struct InterpretReport {
    std::vector<EdgeReport> edges;
    Surrogate surrogate;
    std::vector<EvaluationPoint> points; ///< held-out rows with model outputs
    double surrogate_rmse = 0.0;         ///< surrogate vs model on `points`
    double model_test_rmse = 0.0;        ///< model vs targets on `points`
    double surrogate_test_rmse = 0.0;    ///< surrogate vs targets on `points`
    std::vector<std::string> input_names;
    std::string summary;
};

namespace detail {

inline std::string describe(const InterpretReport& r) {
    std::ostringstream o;
    o.precision(6);
    const auto& s = r.surrogate;
    o << "Edge functions are polynomials in t = 2*z/pi - 1 of their input z in [0, pi].\n\n";
    o << "Input maps (raw feature -> t):\n";
    for (std::size_t j = 0; j < s.input_norm.size(); ++j) {
        const auto& f = s.input_norm[j];
        const std::string name = j < r.input_names.size() ? r.input_names[j] : "x" + std::to_string(j + 1);
        o << "  t_" << j << " = (2*" << name << " - " << (f.min + f.max) << ") / " << (f.max - f.min) << '\n';
    }
    o << '\n';
    for (std::size_t l = 0; l < s.spec.layers.size(); ++l) {
        const auto& ls = s.spec.layers[l];
        o << "Layer " << l << ":\n";
        for (std::size_t u = 0; u < ls.units; ++u) {
            o << "  h" << l << "_" << u << " =";
            bool any = false;
            for (std::size_t i = 0; i < ls.fan_in; ++i) {
                const std::size_t e = i * ls.units + u;
                if (!s.active[l][e]) continue;
                const std::string var = l == 0 ? "t_" + std::to_string(i) : "t(h" + std::to_string(l - 1) + "_" + std::to_string(i) + "')";
                o << (any ? "\n        + " : " ") << '(' << poly_to_string(s.fits[l][e].coeffs, var) << ')';
                any = true;
            }
            if (!any) o << " 0";
            o << '\n';
        }
        if (l + 1 < s.spec.layers.size())
            o << "  h" << l << "_u' = ((h" << l << "_u / |I_u|) + " << (ls.rescale_bias ? 0 : 1)
              << ") / 2 * pi, clamped to [0, pi], |I_u| = surviving inputs of unit u\n";
    }
    const std::string last = "h" + std::to_string(s.spec.layers.size() - 1) + "_0";
    if (s.spec.dense_head) o << "\ny = " << s.dense_w << " * " << last << " + " << s.dense_b << '\n';
    else o << "\ny = " << last << '\n';
    o << "\nPer-edge fits:\n";
    for (const auto& e : r.edges)
        o << "  edge " << to_string(e.edge) << ": degree " << e.fit.degree << ", R^2 " << e.fit.r_squared << '\n';
    o << "\nSurrogate RMSE vs model: " << r.surrogate_rmse << "\nModel RMSE vs targets:    " << r.model_test_rmse
      << "\nSurrogate RMSE vs targets: " << r.surrogate_test_rmse << "\nEvaluation points:        " << r.points.size()
      << '\n';
    return o.str();
}

} // namespace detail

/// Fits every active edge and evaluates the surrogate on the test split (the
/// whole dataset when the test split is empty).
inline InterpretReport report(const Model& model, const Dataset& dataset, const InterpretConfig& config = {}) {
    model.validate();
    if (!model.input_norm_fitted()) throw StateError("report: model has no input normalisation");
    if (dataset.input_dim() != model.spec.input_dim)
        throw ShapeError("dataset has " + std::to_string(dataset.input_dim()) + " inputs, model expects " +
                         std::to_string(model.spec.input_dim));
    InterpretReport r;
    r.input_names = dataset.input_names;
    auto& s = r.surrogate;
    s.spec = model.spec;
    s.input_norm = model.input_norm;
    s.dense_w = model.dense_w;
    s.dense_b = model.dense_b;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        s.active.push_back(model.layers[l].active);
        s.fits.emplace_back(model.layers[l].edges.size());
    }
    for (const auto& e : model.active_edges()) {
        const auto fit = fit_poly(sample_edge(model, e, config.grid_size), config.max_degree, config.r2_target);
        s.fits[e.layer][model.edge_index(e)] = fit;
        r.edges.push_back({e, fit});
    }

    std::vector<std::size_t> rows = dataset.split.test;
    if (rows.empty())
        for (std::size_t i = 0; i < dataset.size(); ++i) rows.push_back(i);
    const auto subset = dataset.gather(rows);
    const auto outputs = predict(model, subset.inputs, subset.input_dim);
    std::vector<double> sur;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto x = dataset.row(rows[k]);
        r.points.push_back({std::vector<double>(x.begin(), x.end()), outputs[k], subset.targets[k]});
        sur.push_back(s.evaluate(x));
    }
    r.surrogate_rmse = rmse(sur, outputs);
    r.model_test_rmse = rmse(outputs, subset.targets);
    r.surrogate_test_rmse = rmse(sur, subset.targets);
    r.summary = detail::describe(r);
    return r;
}

// --- report files -------------------------------------------------------------

inline nlohmann::json report_to_json(const InterpretReport& r) {
    using nlohmann::json;
    const auto& s = r.surrogate;
    json j;
    j["format"] = "quirk-interpret v1";
    j["input_dim"] = s.spec.input_dim;
    j["input_names"] = r.input_names;
    j["dense_head"] = s.spec.dense_head;
    j["dense_w"] = s.dense_w;
    j["dense_b"] = s.dense_b;
    j["input_norm"] = json::array();
    for (const auto& f : s.input_norm) j["input_norm"].push_back({{"min", f.min}, {"max", f.max}});
    j["layers"] = json::array();
    for (const auto& ls : s.spec.layers)
        j["layers"].push_back({{"fan_in", ls.fan_in}, {"units", ls.units}, {"rescale_bias", ls.rescale_bias}});
    j["edges"] = json::array();
    for (const auto& e : r.edges)
        j["edges"].push_back({{"layer", e.edge.layer},
                              {"input", e.edge.input},
                              {"unit", e.edge.unit},
                              {"degree", e.fit.degree},
                              {"r_squared", e.fit.r_squared},
                              {"lo", e.fit.lo},
                              {"hi", e.fit.hi},
                              {"coefficients", e.fit.coeffs}});
    j["points"] = json::array();
    for (const auto& p : r.points) j["points"].push_back({{"input", p.input}, {"model", p.model}, {"target", p.target}});
    j["surrogate_rmse"] = r.surrogate_rmse;
    j["model_test_rmse"] = r.model_test_rmse;
    j["surrogate_test_rmse"] = r.surrogate_test_rmse;
    return j;
}

/// Rebuilds the report (surrogate, fits and evaluation points) from its JSON form.
inline InterpretReport report_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "quirk-interpret v1") throw VersionError("unsupported interpret report format");
        InterpretReport r;
        auto& s = r.surrogate;
        s.spec.input_dim = j.at("input_dim").get<std::size_t>();
        s.spec.dense_head = j.at("dense_head").get<bool>();
        s.dense_w = j.at("dense_w").get<double>();
        s.dense_b = j.at("dense_b").get<double>();
        r.input_names = j.at("input_names").get<std::vector<std::string>>();
        for (const auto& f : j.at("input_norm")) s.input_norm.push_back({f.at("min").get<double>(), f.at("max").get<double>()});
        for (const auto& l : j.at("layers")) {
            LayerSpec ls;
            ls.fan_in = l.at("fan_in").get<std::size_t>();
            ls.units = l.at("units").get<std::size_t>();
            ls.rescale_bias = l.at("rescale_bias").get<bool>();
            s.spec.layers.push_back(ls);
            s.active.emplace_back(ls.edges(), 0);
            s.fits.emplace_back(ls.edges());
        }
        s.spec.validate();
        if (s.input_norm.size() != s.spec.input_dim) throw ParseError("input_norm size does not match input_dim");
        for (const auto& e : j.at("edges")) {
            EdgeReport er;
            er.edge = {e.at("layer").get<std::size_t>(), e.at("input").get<std::size_t>(), e.at("unit").get<std::size_t>()};
            if (er.edge.layer >= s.spec.layers.size() || er.edge.input >= s.spec.layers[er.edge.layer].fan_in ||
                er.edge.unit >= s.spec.layers[er.edge.layer].units)
                throw ParseError("edge " + to_string(er.edge) + " does not exist");
            er.fit.degree = e.at("degree").get<std::size_t>();
            er.fit.r_squared = e.at("r_squared").get<double>();
            er.fit.lo = e.at("lo").get<double>();
            er.fit.hi = e.at("hi").get<double>();
            er.fit.coeffs = e.at("coefficients").get<std::vector<double>>();
            const std::size_t idx = er.edge.input * s.spec.layers[er.edge.layer].units + er.edge.unit;
            s.active[er.edge.layer][idx] = 1;
            s.fits[er.edge.layer][idx] = er.fit;
            r.edges.push_back(er);
        }
        for (const auto& p : j.at("points"))
            r.points.push_back({p.at("input").get<std::vector<double>>(), p.at("model").get<double>(), p.at("target").get<double>()});
        r.surrogate_rmse = j.at("surrogate_rmse").get<double>();
        r.model_test_rmse = j.at("model_test_rmse").get<double>();
        r.surrogate_test_rmse = j.at("surrogate_test_rmse").get<double>();
        r.summary = detail::describe(r);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("interpret report: ") + e.what());
    } catch (const ShapeError& e) {
        throw ParseError(std::string("interpret report: ") + e.what());
    } catch (const InvalidInput& e) {
        throw ParseError(std::string("interpret report: ") + e.what());
    }
}

/// Surrogate RMSE against the recorded model outputs, computed from the report contents only.
inline double recompute_surrogate_rmse(const InterpretReport& r) {
    std::vector<double> sur, model;
    for (const auto& p : r.points) {
        sur.push_back(r.surrogate.evaluate(p.input));
        model.push_back(p.model);
    }
    return rmse(sur, model);
}

/// layer,input,unit,degree,r_squared,c0..c{max_degree}; unused coefficients are 0.
inline void write_coefficients_csv(std::ostream& out, const InterpretReport& r) {
    std::size_t width = 1;
    for (const auto& e : r.edges) width = std::max(width, e.fit.coeffs.size());
    out << "layer,input,unit,degree,r_squared";
    for (std::size_t k = 0; k < width; ++k) out << ",c" << k;
    out << '\n';
    for (const auto& e : r.edges) {
        out << e.edge.layer << ',' << e.edge.input << ',' << e.edge.unit << ',' << e.fit.degree << ','
            << format_double(e.fit.r_squared);
        for (std::size_t k = 0; k < width; ++k) out << ',' << format_double(k < e.fit.coeffs.size() ? e.fit.coeffs[k] : 0.0);
        out << '\n';
    }
}

/// Grid samples of one edge with its fitted polynomial overlaid.
inline SvgPlot edge_plot(const EdgeFunctionSample& sample, const PolyFit& fit) {
    SvgPlot plot("edge " + to_string(sample.edge) + ", degree " + std::to_string(fit.degree), "input (radians)", "<Z>");
    SvgSeries pts{"circuit", sample.xs, sample.ys, svg_palette()[0], true};
    SvgSeries curve{"polynomial", sample.xs, {}, svg_palette()[1], false};
    for (double x : sample.xs) curve.ys.push_back(fit.evaluate(x));
    plot.add(std::move(pts));
    plot.add(std::move(curve));
    return plot;
}

} // namespace quirk
