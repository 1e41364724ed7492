#pragma once

// Command implementations behind the quirk executable. Each command reads a
// RunConfig, writes its files under the output directory and reports on the
// given streams. run_command maps failures onto exit codes:
// 0 success, 1 IO or file format, 2 configuration or usage, 3 numeric failure.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "quirk/bspline.hpp"
#include "quirk/config.hpp"
#include "quirk/data.hpp"
#include "quirk/diagnostics.hpp"
#include "quirk/errors.hpp"
#include "quirk/interpret.hpp"
#include "quirk/model_io.hpp"
#include "quirk/network.hpp"
#include "quirk/parallel.hpp"
#include "quirk/svg.hpp"
#include "quirk/train.hpp"

namespace quirk {

enum ExitCode : int { kExitOk = 0, kExitIo = 1, kExitConfig = 2, kExitNumeric = 3 };

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e) || dynamic_cast<const VersionError*>(&e))
        return kExitIo;
    if (dynamic_cast<const Error*>(&e)) return kExitConfig;
    return kExitIo;
}

struct CliOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> threads;
    std::vector<std::string> equations; ///< benchmark ids given on the command line
};

/// Thread count from --threads, else the QUIRK_THREADS environment variable, else the config.
inline std::size_t resolve_threads(const CliOptions& opt, std::size_t configured) {
    if (opt.threads) {
        if (*opt.threads == 0) throw ConfigError("--threads must be at least 1");
        return *opt.threads;
    }
    if (const char* env = std::getenv("QUIRK_THREADS"); env && *env) {
        std::size_t n = 0;
        try {
            n = parse_integer<std::size_t>(env, "QUIRK_THREADS");
        } catch (const ParseError& e) {
            throw ConfigError(e.what());
        }
        if (n == 0) throw ConfigError("QUIRK_THREADS must be at least 1");
        return n;
    }
    return configured;
}

inline RunConfig resolve_config(const CliOptions& opt) {
    RunConfig c;
    if (!opt.config_path.empty()) c = load_run_config(opt.config_path);
    if (opt.seed) {
        c.dataset.seed = *opt.seed;
        c.network.seed = *opt.seed;
        c.train.seed = *opt.seed;
    }
    if (opt.out) c.output_dir = *opt.out;
    c.train.threads = resolve_threads(opt, c.train.threads);
    if (!opt.equations.empty()) c.benchmark.equations = opt.equations;
    return c;
}

// --- shared helpers --------------------------------------------------------------

/// Min-max maps targets onto [-1, 1]; returns the original (min, max).
inline FeatureRange normalize_targets(Dataset& d) {
    const auto [lo, hi] = std::minmax_element(d.targets.begin(), d.targets.end());
    FeatureRange r{*lo, *hi};
    if (!(r.min < r.max)) {
        for (auto& t : d.targets) t = 0.0;
        return r;
    }
    for (auto& t : d.targets) t = 2.0 * (t - r.min) / (r.max - r.min) - 1.0;
    return r;
}

inline Dataset build_dataset(const DatasetConfig& d) {
    const int sources = int(!d.equation.empty()) + int(!d.csv.empty()) + int(!d.univariate.empty());
    if (sources == 0) throw ConfigError("missing key [dataset] equation (or [dataset] csv / univariate)");
    if (sources > 1) throw ConfigError("[dataset]: set exactly one of equation, csv, univariate");
    Dataset ds;
    if (!d.equation.empty()) {
        ds = generate(d.equation, d.samples, d.seed);
    } else if (!d.csv.empty()) {
        ds = load_csv(d.csv, d.seed);
    } else {
        const auto target = univariate_target(d.univariate);
        const double lo = std::isnan(d.lo) ? target.default_lo : d.lo;
        const double hi = std::isnan(d.hi) ? target.default_hi : d.hi;
        ds = generate_univariate(target, d.samples, lo, hi, d.seed);
    }
    if (d.normalize_target) normalize_targets(ds);
    return ds;
}

inline NetworkSpec build_spec(const NetworkConfig& n, std::size_t input_dim, std::uint64_t default_seed) {
    std::vector<std::size_t> widths = n.widths.empty() ? std::vector<std::size_t>{input_dim, 2, 1} : n.widths;
    if (widths.size() < 2) throw ConfigError("[network] widths needs an input width and at least one layer width");
    if (widths.front() != input_dim)
        throw ConfigError("[network] widths starts with " + std::to_string(widths.front()) + " but the dataset has " +
                          std::to_string(input_dim) + " inputs");
    if (widths.back() != 1) throw ConfigError("[network] widths must end with 1");
    std::vector<std::size_t> depths = n.dr_layers;
    if (depths.size() == 1) depths.assign(widths.size() - 1, depths.front());
    if (depths.size() != widths.size() - 1)
        throw ConfigError("[network] dr_layers needs one value, or one per layer (" + std::to_string(widths.size() - 1) + ")");
    NetworkSpec spec = NetworkSpec::from_widths(widths, depths, n.dense_head, n.seed.value_or(default_seed));
    spec.gates = GateTemplate::parse(n.gates);
    for (auto& l : spec.layers) {
        l.qubits_per_edge = n.qubits_per_edge;
        l.entangle = n.entangle;
        l.rescale_bias = n.rescale_bias;
    }
    spec.validate();
    return spec;
}

inline std::filesystem::path prepare_output(const RunConfig& c) {
    std::filesystem::path dir(c.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
}

/// Writes through a temporary file and renames it into place.
template <typename Writer>
void write_atomically(const std::filesystem::path& path, Writer&& writer) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        writer(out);
        if (!out) throw IoError("failed writing '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move '" + tmp + "' to '" + path.string() + "': " + ec.message());
}

inline std::string dataset_id(const Dataset& d) {
    std::string id = std::filesystem::path(d.name).filename().string();
    for (auto& ch : id)
        if (ch == ',' || ch == ' ') ch = '_';
    return id;
}

inline Model load_model_for(const RunConfig& c, const Dataset& d) {
    if (c.model_path.empty()) throw ConfigError("missing key [model] path");
    Model m = load_model(c.model_path);
    if (m.spec.input_dim != d.input_dim())
        throw ShapeError("model expects " + std::to_string(m.spec.input_dim) + " inputs but the dataset has " +
                         std::to_string(d.input_dim()));
    return m;
}

inline double split_rmse(const Model& m, const Dataset& d, const std::vector<std::size_t>& rows, std::size_t threads) {
    if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
    return evaluate_rmse(m, d.gather(rows), threads);
}

// --- commands --------------------------------------------------------------------

inline void cmd_train(const RunConfig& c, std::ostream& out) {
    const Dataset data = build_dataset(c.dataset);
    const NetworkSpec spec = build_spec(c.network, data.input_dim(), c.train.seed);
    const auto dir = prepare_output(c);
    auto result = train(data, spec, c.train);
    const double test = split_rmse(result.model, data, data.split.test, c.train.threads);
    const std::size_t params = param_count(result.model);
    save_model(result.model, (dir / "model.quirk").string());
    save_history_csv(result.history, (dir / "history.csv").string());
    const std::string id = dataset_id(data);
    write_atomically(dir / "summary.csv", [&](std::ostream& o) {
        o << "id,params,test_rmse\n" << id << ',' << params << ',' << format_double(test) << '\n';
    });
    out << id << " params=" << params << " test_rmse=" << format_double(test) << " best_step=" << result.history.best_step
        << '\n';
}

inline void cmd_eval(const RunConfig& c, std::ostream& out) {
    const Dataset data = build_dataset(c.dataset);
    const Model model = load_model_for(c, data);
    const auto dir = prepare_output(c);
    const std::size_t th = c.train.threads;
    const double tr = split_rmse(model, data, data.split.train, th);
    const double va = split_rmse(model, data, data.split.validation, th);
    const double te = split_rmse(model, data, data.split.test, th);
    const std::string id = dataset_id(data);
    write_atomically(dir / "eval.csv", [&](std::ostream& o) {
        o << "id,params,train_rmse,val_rmse,test_rmse\n"
          << id << ',' << param_count(model) << ',' << format_double(tr) << ',' << format_double(va) << ','
          << format_double(te) << '\n';
    });
    const auto pred = predict(model, data.inputs, data.input_dim(), th);
    write_atomically(dir / "predictions.csv", [&](std::ostream& o) {
        for (const auto& n : data.input_names) o << n << ',';
        o << "target,prediction\n";
        for (std::size_t i = 0; i < data.size(); ++i) {
            for (double v : data.row(i)) o << format_double(v) << ',';
            o << format_double(data.targets[i]) << ',' << format_double(pred[i]) << '\n';
        }
    });
    out << id << " params=" << param_count(model) << " train_rmse=" << format_double(tr) << " val_rmse=" << format_double(va)
        << " test_rmse=" << format_double(te) << '\n';
}

inline void cmd_prune(const RunConfig& c, std::ostream& out) {
    const Dataset data = build_dataset(c.dataset);
    const Model model = load_model_for(c, data);
    const auto dir = prepare_output(c);
    const std::size_t th = c.train.threads;
    const double before = split_rmse(model, data, data.split.test, th);
    auto result = prune(model, data, c.train);
    const double after = split_rmse(result.model, data, data.split.test, th);
    save_model(result.model, (dir / "pruned_model.quirk").string());
    save_history_csv(result.fine_tune, (dir / "prune_history.csv").string());
    const std::string id = dataset_id(data);
    write_atomically(dir / "prune_summary.csv", [&](std::ostream& o) {
        o << "id,params_before,params_after,removed_edges,test_rmse_before,test_rmse_after\n"
          << id << ',' << result.params_before << ',' << result.params_after << ',' << result.removed.size() << ','
          << format_double(before) << ',' << format_double(after) << '\n';
    });
    out << id << " params " << result.params_before << " -> " << result.params_after << " (" << result.removed.size()
        << " edges removed" << (result.refused ? ", refused" : "") << ") test_rmse " << format_double(before) << " -> "
        << format_double(after) << '\n';
}

inline void cmd_interpret(const RunConfig& c, std::ostream& out) {
    const Dataset data = build_dataset(c.dataset);
    const Model model = load_model_for(c, data);
    const auto dir = prepare_output(c);
    const auto rep = report(model, data, c.interpret);
    write_atomically(dir / "interpret_report.json", [&](std::ostream& o) { o << report_to_json(rep).dump(2) << '\n'; });
    write_atomically(dir / "interpret_summary.txt", [&](std::ostream& o) { o << rep.summary; });
    write_atomically(dir / "interpret_coefficients.csv", [&](std::ostream& o) { write_coefficients_csv(o, rep); });
    if (c.svg)
        for (const auto& e : rep.edges) {
            const auto sample = sample_edge(model, e.edge, c.interpret.grid_size);
            const auto name = "edge_" + std::to_string(e.edge.layer) + "_" + std::to_string(e.edge.input) + "_" +
                              std::to_string(e.edge.unit) + ".svg";
            edge_plot(sample, e.fit).save((dir / name).string());
        }
    out << rep.summary;
}

namespace detail {

struct BenchmarkRow {
    std::string id;
    double loss = 0.0;
    std::size_t params = 0;
    double pruned_loss = 0.0;
    std::size_t pruned_params = 0;
};

} // namespace detail

/// Trains (and prunes) one network per equation; rows are written in list order.
/// Returns kExitConfig when some ids were unknown, after processing the rest.
inline int cmd_benchmark(const RunConfig& c, std::ostream& out, std::ostream& err) {
    if (c.benchmark.equations.empty())
        throw ConfigError("usage: benchmark needs equation ids ([benchmark] equations or positional arguments)");
    std::vector<std::string> ids, unknown;
    for (const auto& id : c.benchmark.equations) {
        try {
            (void)find_equation(id);
            ids.push_back(id);
        } catch (const LookupError&) {
            unknown.push_back(id);
        }
    }
    if (!unknown.empty()) {
        err << "unknown equation ids (skipped):";
        for (const auto& u : unknown) err << ' ' << u;
        err << "\nknown ids: " << known_equation_ids() << '\n';
    }
    const auto dir = prepare_output(c);
    std::filesystem::create_directories(dir / "benchmark_models");

    std::vector<detail::BenchmarkRow> rows(ids.size());
    TrainConfig per_run = c.train;
    per_run.threads = 1;
    parallel_for(ids.size(), c.train.threads, [&](std::size_t k) {
        const auto& eq = find_equation(ids[k]);
        DatasetConfig dc = c.dataset;
        dc.equation = eq.id;
        dc.csv.clear();
        dc.univariate.clear();
        const Dataset data = build_dataset(dc);
        NetworkConfig nc = c.network;
        nc.widths = {eq.arity()};
        nc.widths.insert(nc.widths.end(), c.benchmark.hidden.begin(), c.benchmark.hidden.end());
        nc.widths.push_back(1);
        const auto spec = build_spec(nc, eq.arity(), c.train.seed);
        auto trained = train(data, spec, per_run);
        auto& row = rows[k];
        row.id = eq.id;
        row.loss = split_rmse(trained.model, data, data.split.test, 1);
        row.params = param_count(trained.model);
        row.pruned_loss = row.loss;
        row.pruned_params = row.params;
        Model final_model = trained.model;
        if (c.benchmark.prune) {
            auto pr = prune(trained.model, data, per_run);
            row.pruned_loss = split_rmse(pr.model, data, data.split.test, 1);
            row.pruned_params = pr.params_after;
            final_model = std::move(pr.model);
        }
        write_atomically(dir / "benchmark_models" / (eq.id + ".quirk"), [&](std::ostream& o) { write_model(o, trained.model); });
        write_atomically(dir / "benchmark_models" / (eq.id + ".pruned.quirk"), [&](std::ostream& o) { write_model(o, final_model); });
    });

    std::map<std::string, std::vector<double>> reference;
    if (!c.benchmark.reference.empty()) {
        const Dataset ref = load_csv(c.benchmark.reference);
        if (ref.row_labels.empty()) throw ParseError(c.benchmark.reference + ": reference table needs an id column");
        std::vector<std::string> columns = ref.input_names;
        columns.push_back(ref.target_name);
        const std::vector<std::string> wanted{"loss", "params", "pruned_loss", "pruned_params"};
        std::vector<std::size_t> pos;
        for (const auto& w : wanted) {
            const auto it = std::find(columns.begin(), columns.end(), w);
            if (it == columns.end()) throw ParseError(c.benchmark.reference + ": missing column '" + w + "'");
            pos.push_back(static_cast<std::size_t>(it - columns.begin()));
        }
        for (std::size_t i = 0; i < ref.size(); ++i) {
            std::vector<double> all(ref.row(i).begin(), ref.row(i).end());
            all.push_back(ref.targets[i]);
            std::vector<double> v;
            for (auto p : pos) v.push_back(all[p]);
            reference[ref.row_labels[i]] = v;
        }
        for (const auto& id : ids)
            if (!reference.count(id)) {
                err << "warning: " << id << " has no row in " << c.benchmark.reference << "; published columns omitted\n";
                reference.clear();
                break;
            }
    }
    write_atomically(dir / "benchmark.csv", [&](std::ostream& o) {
        o << "id,loss,params,pruned_loss,pruned_params";
        if (!reference.empty()) o << ",published_kan_loss,published_kan_params,published_kan_pruned_loss,published_kan_pruned_params";
        o << '\n';
        for (const auto& r : rows) {
            o << r.id << ',' << format_double(r.loss) << ',' << r.params << ',' << format_double(r.pruned_loss) << ','
              << r.pruned_params;
            if (!reference.empty())
                for (double v : reference.at(r.id)) o << ',' << format_double(v);
            o << '\n';
        }
    });
    for (const auto& r : rows)
        out << r.id << " loss=" << format_double(r.loss) << " params=" << r.params
            << " pruned_loss=" << format_double(r.pruned_loss) << " pruned_params=" << r.pruned_params << '\n';
    return unknown.empty() ? kExitOk : kExitConfig;
}

struct CompareResult {
    std::size_t budget = 0;
    std::size_t dr_params = 0;
    double dr_rmse = 0.0;
    std::vector<double> bspline_rmse; ///< one per smoothness value
};

/// DR circuit (budget / 2 layers) against B-splines (budget coefficients) on
/// one univariate target, with targets min-max normalised to [-1, 1].
inline std::vector<CompareResult> cmd_compare_activations(const RunConfig& c, std::ostream& out) {
    const auto& cc = c.compare;
    const auto target = univariate_target(cc.target);
    const double lo = std::isnan(cc.lo) ? target.default_lo : cc.lo;
    const double hi = std::isnan(cc.hi) ? target.default_hi : cc.hi;
    if (cc.budgets.empty()) throw ConfigError("[compare] budgets is empty");
    for (auto b : cc.budgets)
        if (b < 4) throw ConfigError("[compare] budgets must be at least 4 (a cubic B-spline needs 4 coefficients)");
    Dataset data = generate_univariate(target, cc.samples, lo, hi, c.dataset.seed);
    const FeatureRange scale = normalize_targets(data);
    const auto dir = prepare_output(c);
    const auto train_set = data.gather(data.split.train);
    const auto test_set = data.gather(data.split.test.empty() ? data.split.train : data.split.test);

    std::vector<double> grid;
    for (std::size_t k = 0; k < cc.curve_points; ++k)
        grid.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(cc.curve_points - 1));
    std::vector<double> grid_target;
    for (double x : grid)
        grid_target.push_back(scale.min < scale.max ? 2.0 * (target.f(x) - scale.min) / (scale.max - scale.min) - 1.0 : 0.0);

    std::vector<CompareResult> results;
    std::vector<std::pair<std::string, std::vector<double>>> curves;
    for (std::size_t b : cc.budgets) {
        std::size_t even = b;
        if (b % 2 != 0) {
            even = b - 1;
            diagnostics().rounded_budgets.fetch_add(1, std::memory_order_relaxed);
            warn("budget " + std::to_string(b) + " is odd; the DR circuit uses " + std::to_string(even) + " parameters");
        }
        CompareResult r;
        r.budget = b;
        const auto spec = NetworkSpec::from_widths({1, 1}, even / 2, false, c.network.seed.value_or(c.train.seed));
        auto trained = train(data, spec, c.train);
        r.dr_params = param_count(trained.model);
        r.dr_rmse = evaluate_rmse(trained.model, test_set, c.train.threads);
        const auto dr_curve = predict(trained.model, grid, 1, c.train.threads);
        curves.emplace_back("dr_b" + std::to_string(b), dr_curve);

        SvgPlot plot(cc.target + ", budget " + std::to_string(b), "x", "normalised target");
        plot.add({"target", grid, grid_target, "#444444", false});
        plot.add({"DR (" + std::to_string(r.dr_params) + " params)", grid, dr_curve, svg_palette()[0], false});
        for (std::size_t s = 0; s < cc.smoothness.size(); ++s) {
            const auto spline = fit_bspline(train_set.inputs, train_set.targets, b, cc.smoothness[s]);
            r.bspline_rmse.push_back(rmse(spline.evaluate(test_set.inputs), test_set.targets));
            std::vector<double> curve;
            for (double x : grid) curve.push_back(spline.evaluate(x));
            curves.emplace_back("bspline_s" + format_double(cc.smoothness[s]) + "_b" + std::to_string(b), curve);
            plot.add({"B-spline S=" + format_double(cc.smoothness[s]), grid, curve, svg_palette()[(s + 1) % svg_palette().size()],
                      false});
        }
        if (c.svg) plot.save((dir / ("compare_b" + std::to_string(b) + ".svg")).string());
        results.push_back(r);
        out << "budget " << b << ": dr_rmse=" << format_double(r.dr_rmse);
        for (std::size_t s = 0; s < cc.smoothness.size(); ++s)
            out << " bspline_s" << format_double(cc.smoothness[s]) << "_rmse=" << format_double(r.bspline_rmse[s]);
        out << '\n';
    }
    write_atomically(dir / "compare_rmse.csv", [&](std::ostream& o) {
        o << "budget,dr_params,dr_rmse";
        for (double s : cc.smoothness) o << ",bspline_s" << format_double(s) << "_rmse";
        o << '\n';
        for (const auto& r : results) {
            o << r.budget << ',' << r.dr_params << ',' << format_double(r.dr_rmse);
            for (double v : r.bspline_rmse) o << ',' << format_double(v);
            o << '\n';
        }
    });
    write_atomically(dir / "compare_curves.csv", [&](std::ostream& o) {
        o << "x";
        for (const auto& [name, v] : curves) o << ',' << name;
        o << ",target\n";
        for (std::size_t k = 0; k < grid.size(); ++k) {
            o << format_double(grid[k]);
            for (const auto& [name, v] : curves) o << ',' << format_double(v[k]);
            o << ',' << format_double(grid_target[k]) << '\n';
        }
    });
    return results;
}

inline void cmd_list_equations(std::ostream& out) {
    for (const auto& e : equation_registry()) {
        out << e.id << "  " << e.formula << "  {";
        for (std::size_t j = 0; j < e.variables.size(); ++j)
            out << (j ? ", " : "") << e.variables[j].name << " in [" << format_double(e.variables[j].lo) << ", "
                << format_double(e.variables[j].hi) << "]";
        out << "}\n";
    }
}

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"train",     "eval",      "prune",         "interpret",
                                                "benchmark", "compare-activations", "list-equations"};
    return names;
}

/// Runs one command and converts any failure into its exit code, with the
/// message written to `err`.
inline int run_command(const std::string& command, const CliOptions& opt, std::ostream& out, std::ostream& err) {
    std::mutex warn_mutex;
    set_warning_handler([&](const std::string& msg) {
        std::lock_guard lock(warn_mutex);
        err << "warning: " << msg << '\n';
    });
    struct Restore {
        ~Restore() { set_warning_handler({}); }
    } restore;
    try {
        if (command == "list-equations") {
            cmd_list_equations(out);
            return kExitOk;
        }
        if (std::find(command_names().begin(), command_names().end(), command) == command_names().end())
            throw ConfigError("unknown command '" + command + "'");
        if (opt.config_path.empty() && command != "benchmark" && command != "compare-activations")
            throw ConfigError("command '" + command + "' needs --config");
        const RunConfig c = resolve_config(opt);
        const auto clamped_before = diagnostics().clamped_network_inputs.load();
        int code = kExitOk;
        if (command == "train") cmd_train(c, out);
        else if (command == "eval") cmd_eval(c, out);
        else if (command == "prune") cmd_prune(c, out);
        else if (command == "interpret") cmd_interpret(c, out);
        else if (command == "benchmark") code = cmd_benchmark(c, out, err);
        else cmd_compare_activations(c, out);
        if (const auto n = diagnostics().clamped_network_inputs.load() - clamped_before; n > 0)
            err << "warning: " << n << " input values fell outside the training range and were clamped\n";
        return code;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

} // namespace quirk
