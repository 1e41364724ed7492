#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "quirk/cli.hpp"

using namespace quirk;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("quirk_cli_" + name)) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }
    std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }

private:
    fs::path path_;
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream(path) << text;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

RunConfig parse_config(const std::string& text) {
    std::istringstream in(text);
    return parse_run_config(IniFile::parse(in));
}

std::string config_error(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(const std::string& command, const std::string& config_path, std::vector<std::string> equations = {}) {
    CliOptions opt;
    opt.config_path = config_path;
    opt.equations = std::move(equations);
    std::ostringstream out, err;
    const int code = run_command(command, opt, out, err);
    return {code, out.str(), err.str()};
}

// History rows without the trailing wall-clock column.
std::string without_timing(const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
    return out;
}

std::size_t count(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
    return n;
}

std::string small_train_config(const std::string& out_dir, const std::string& extra = "") {
    return "[dataset]\nequation = I.6.2\nsamples = 200\nseed = 3\n"
           "[network]\nwidths = 2, 2, 1\ndr_layers = 2\n"
           "[train]\nmax_steps = 60\neval_every = 10\nseed = 3\nfine_tune_steps = 20\nprune_threshold = 0.3\n"
           "[output]\ndir = " +
           out_dir + "\n" + extra;
}

} // namespace

TEST(Config, ParsesTypedValues) {
    const RunConfig c = parse_config("# comment\n[dataset]\nequation = I.15.3x  # trailing\nsamples = 500\n"
                                     "[network]\nwidths = 2,3, 1\ndr_layers = 4, 2\nentangle = yes\n"
                                     "[train]\nlearning_rate = 0.02\n[compare]\nsmoothness = 1, 0.05, 0\n");
    EXPECT_EQ(c.dataset.equation, "I.15.3x");
    EXPECT_EQ(c.dataset.samples, 500U);
    EXPECT_EQ(c.network.widths, (std::vector<std::size_t>{2, 3, 1}));
    EXPECT_EQ(c.network.dr_layers, (std::vector<std::size_t>{4, 2}));
    EXPECT_TRUE(c.network.entangle);
    EXPECT_EQ(c.train.learning_rate, 0.02);
    EXPECT_EQ(c.compare.smoothness, (std::vector<double>{1.0, 0.05, 0.0}));
    EXPECT_EQ(c.output_dir, "quirk_out");
}

TEST(Config, ShippedConfigsParse) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(fs::path(QUIRK_SOURCE_DIR) / "configs")) {
        if (e.path().extension() != ".ini") continue;
        EXPECT_NO_THROW(load_run_config(e.path().string())) << e.path();
        ++n;
    }
    EXPECT_GE(n, 5U);
}

TEST(Config, ErrorsNameTheLine) {
    EXPECT_NE(config_error("[train]\nlearning_rat = 0.1\n").find("config:2: unknown key [train] learning_rat"),
              std::string::npos);
    EXPECT_NE(config_error("[nope]\n").find("unknown section [nope]"), std::string::npos);
    EXPECT_NE(config_error("[train]\nseed = 1\nseed = 2\n").find("config:3: duplicate key"), std::string::npos);
    EXPECT_NE(config_error("seed = 1\n").find("config:1"), std::string::npos);
    EXPECT_NE(config_error("[train\n").find("malformed section"), std::string::npos);
    EXPECT_NE(config_error("[train]\njust text\n").find("expected 'key = value'"), std::string::npos);
    EXPECT_NE(config_error("[train]\n\nlearning_rate = fast\n").find("config:3"), std::string::npos);
    EXPECT_NE(config_error("[network]\nentangle = maybe\n").find("expected true or false"), std::string::npos);
    EXPECT_NE(config_error("[network]\nwidths = 2, 0, 1\n").find("widths must be positive"), std::string::npos);
    EXPECT_NE(config_error("[network]\ngates = ry:x, rq:0\n").find("[network] gates"), std::string::npos);
    EXPECT_NE(config_error("[network]\nqubits_per_edge = 99\n").find("qubits_per_edge"), std::string::npos);
    EXPECT_FALSE(config_error("[train]\nlearning_rate = -1\n").empty());
    EXPECT_FALSE(config_error("[train]\nbatch_size = 0\n").empty());
    EXPECT_FALSE(config_error("[compare]\nsmoothness = -1\n").empty());
    EXPECT_FALSE(config_error("[interpret]\ngrid_size = 3\nmax_degree = 6\n").empty());
}

TEST(Config, BuildSpecChecksWidths) {
    NetworkConfig n;
    n.widths = {3, 2, 1};
    EXPECT_THROW(build_spec(n, 2, 0), ConfigError);
    n.widths = {2, 2, 2};
    EXPECT_THROW(build_spec(n, 2, 0), ConfigError);
    n.widths = {2, 2, 1};
    n.dr_layers = {1, 2, 3};
    EXPECT_THROW(build_spec(n, 2, 0), ConfigError);
    n.dr_layers = {3};
    const auto spec = build_spec(n, 2, 0);
    EXPECT_EQ(spec.layers.size(), 2U);
    EXPECT_EQ(spec.layers[1].dr_layers, 3U);
}

TEST(Config, DatasetSourceIsExclusive) {
    DatasetConfig d;
    try {
        build_dataset(d);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("[dataset] equation"), std::string::npos);
    }
    d.equation = "I.6.2";
    d.univariate = "sin";
    EXPECT_THROW(build_dataset(d), ConfigError);
}

TEST(Config, NormalizeTargets) {
    Dataset d = generate_univariate("fig4_fn", 300, 0.0, 10.0, 1);
    const auto range = normalize_targets(d);
    EXPECT_LT(range.min, range.max);
    EXPECT_EQ(*std::min_element(d.targets.begin(), d.targets.end()), -1.0);
    EXPECT_EQ(*std::max_element(d.targets.begin(), d.targets.end()), 1.0);
}

TEST(Threads, ResolutionOrder) {
    CliOptions opt;
    ::unsetenv("QUIRK_THREADS");
    EXPECT_EQ(resolve_threads(opt, 5), 5U);
    ::setenv("QUIRK_THREADS", "3", 1);
    EXPECT_EQ(resolve_threads(opt, 5), 3U);
    opt.threads = 2;
    EXPECT_EQ(resolve_threads(opt, 5), 2U);
    opt.threads.reset();
    ::setenv("QUIRK_THREADS", "0", 1);
    EXPECT_THROW(resolve_threads(opt, 5), ConfigError);
    ::setenv("QUIRK_THREADS", "many", 1);
    EXPECT_THROW(resolve_threads(opt, 5), ConfigError);
    ::unsetenv("QUIRK_THREADS");
    opt.threads = 0;
    EXPECT_THROW(resolve_threads(opt, 5), ConfigError);
}

TEST(Commands, MissingDatasetKeyIsConfigError) {
    TempDir dir("missing_key");
    write_file(dir / "run.ini", "[train]\nmax_steps = 5\n[output]\ndir = " + (dir / "out") + "\n");
    const Outcome r = run("train", dir / "run.ini");
    EXPECT_EQ(r.code, kExitConfig);
    EXPECT_NE(r.err.find("[dataset] equation"), std::string::npos) << r.err;
}

TEST(Commands, UsageErrors) {
    EXPECT_EQ(run("train", "").code, kExitConfig);
    EXPECT_EQ(run("frobnicate", "x.ini").code, kExitConfig);
    const Outcome missing = run("train", "/nonexistent/quirk.ini");
    EXPECT_EQ(missing.code, kExitIo);
    EXPECT_NE(missing.err.find("/nonexistent/quirk.ini"), std::string::npos);
    const Outcome listed = run("list-equations", "");
    EXPECT_EQ(listed.code, kExitOk);
    EXPECT_NE(listed.out.find("I.6.2"), std::string::npos);
    EXPECT_EQ(count(listed.out, "\n"), equation_registry().size());
}

TEST(Commands, TrainWritesFilesDeterministically) {
    TempDir dir("train");
    write_file(dir / "a.ini", small_train_config(dir / "a"));
    write_file(dir / "b.ini", small_train_config(dir / "b"));
    const Outcome a = run("train", dir / "a.ini");
    ASSERT_EQ(a.code, kExitOk) << a.err;
    const Outcome b = run("train", dir / "b.ini");
    ASSERT_EQ(b.code, kExitOk) << b.err;
    for (const char* f : {"model.quirk", "history.csv", "summary.csv"}) {
        ASSERT_TRUE(fs::exists(dir.path() / "a" / f)) << f;
        EXPECT_EQ(without_timing(read_file(dir / (std::string("a/") + f))),
                  without_timing(read_file(dir / (std::string("b/") + f))))
            << f;
    }
    EXPECT_EQ(read_file(dir / "a/model.quirk"), read_file(dir / "b/model.quirk"));
    EXPECT_EQ(a.out, b.out);
    const Dataset summary = load_csv(dir / "a/summary.csv");
    EXPECT_EQ(summary.row_labels, (std::vector<std::string>{"I.6.2"}));
    EXPECT_EQ(summary.inputs[0], 24.0); // 6 edges x 2 DR layers x 2 angles
    EXPECT_FALSE(fs::exists(dir / "a/summary.csv.tmp"));
}

TEST(Commands, EvalPruneInterpretOnSavedModel) {
    TempDir dir("pipeline");
    write_file(dir / "train.ini", small_train_config(dir / "out"));
    ASSERT_EQ(run("train", dir / "train.ini").code, kExitOk);
    write_file(dir / "next.ini",
               small_train_config(dir / "out", "[model]\npath = " + (dir / "out/model.quirk") + "\n[interpret]\nmax_degree = 4\n"));

    const Outcome ev = run("eval", dir / "next.ini");
    ASSERT_EQ(ev.code, kExitOk) << ev.err;
    const Dataset summary = load_csv(dir / "out/summary.csv");
    const Dataset eval = load_csv(dir / "out/eval.csv");
    EXPECT_EQ(eval.targets[0], summary.targets[0]); // test RMSE agrees with training summary
    EXPECT_EQ(load_csv(dir / "out/predictions.csv").size(), 200U);

    const Outcome pr = run("prune", dir / "next.ini");
    ASSERT_EQ(pr.code, kExitOk) << pr.err;
    const Dataset ps = load_csv(dir / "out/prune_summary.csv");
    EXPECT_LE(ps.inputs[1], ps.inputs[0]);
    EXPECT_NO_THROW(load_model(dir / "out/pruned_model.quirk"));

    const Outcome in = run("interpret", dir / "next.ini");
    ASSERT_EQ(in.code, kExitOk) << in.err;
    const Dataset coeffs = load_csv(dir / "out/interpret_coefficients.csv");
    EXPECT_EQ(coeffs.size(), 6U);
    for (const auto& e : fs::directory_iterator(dir.path() / "out"))
        if (e.path().extension() == ".svg") {
            const std::string svg = read_file(e.path().string());
            EXPECT_EQ(count(svg, "<svg"), 1U);
            EXPECT_EQ(count(svg, "</svg>"), 1U);
            EXPECT_EQ(count(svg, "<g"), count(svg, "</g>"));
            EXPECT_EQ(count(svg, "<text"), count(svg, "</text>"));
        }
    EXPECT_TRUE(fs::exists(dir.path() / "out" / "edge_0_1_1.svg"));
    const auto json = nlohmann::json::parse(read_file(dir / "out/interpret_report.json"));
    const auto rep = report_from_json(json);
    EXPECT_NEAR(recompute_surrogate_rmse(rep), rep.surrogate_rmse, 1e-12);
}

TEST(Commands, InterpretFitCountFollowsEdges) {
    TempDir dir("interpret_counts");
    const std::string base = "[dataset]\nequation = xsq_minus_ysq\nsamples = 120\n[network]\nwidths = 2, 1\ndr_layers = 2\n"
                             "[train]\nmax_steps = 20\n[output]\nsvg = false\ndir = " +
                             (dir / "two") + "\n";
    write_file(dir / "two.ini", base);
    ASSERT_EQ(run("train", dir / "two.ini").code, kExitOk);
    write_file(dir / "two_i.ini", base + "[model]\npath = " + (dir / "two/model.quirk") + "\n");
    ASSERT_EQ(run("interpret", dir / "two_i.ini").code, kExitOk);
    EXPECT_EQ(load_csv(dir / "two/interpret_coefficients.csv").size(), 2U);

    const std::string single = "[dataset]\nunivariate = sin\nsamples = 120\n[network]\nwidths = 1, 1\ndr_layers = 2\n"
                               "[train]\nmax_steps = 20\n[output]\nsvg = false\ndir = " +
                               (dir / "one") + "\n";
    write_file(dir / "one.ini", single);
    ASSERT_EQ(run("train", dir / "one.ini").code, kExitOk);
    write_file(dir / "one_i.ini", single + "[model]\npath = " + (dir / "one/model.quirk") + "\n");
    const Outcome r = run("interpret", dir / "one_i.ini");
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(load_csv(dir / "one/interpret_coefficients.csv").size(), 1U);
}

TEST(Commands, MissingModelFileIsIoError) {
    TempDir dir("missing_model");
    write_file(dir / "run.ini", small_train_config(dir / "out", "[model]\npath = " + (dir / "nope.quirk") + "\n"));
    EXPECT_EQ(run("eval", dir / "run.ini").code, kExitIo);
    write_file(dir / "nokey.ini", small_train_config(dir / "out"));
    const Outcome r = run("eval", dir / "nokey.ini");
    EXPECT_EQ(r.code, kExitConfig);
    EXPECT_NE(r.err.find("[model] path"), std::string::npos);
}

TEST(Commands, BenchmarkRowsInListOrder) {
    TempDir dir("benchmark");
    const auto ids = benchmark_subset();
    std::string list;
    for (const auto& id : ids) list += (list.empty() ? "" : ", ") + id;
    write_file(dir / "run.ini",
               "[dataset]\nsamples = 100\n[network]\ndr_layers = 1\n[train]\nmax_steps = 10\nfine_tune_steps = 5\n"
               "[benchmark]\nequations = " + list + "\nreference = " + QUIRK_SOURCE_DIR "/reference/classical_kan.csv\n"
               "[output]\ndir = " + (dir / "out") + "\n");
    const Outcome r = run("benchmark", dir / "run.ini");
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const Dataset table = load_csv(dir / "out/benchmark.csv");
    EXPECT_EQ(table.row_labels, ids);
    EXPECT_EQ(table.input_dim(), 7U);
    EXPECT_EQ(table.target_name, "published_kan_pruned_params");
    for (std::size_t i = 0; i < table.size(); ++i) EXPECT_LE(table.row(i)[3], table.row(i)[1]);
    for (const auto& id : ids) EXPECT_TRUE(fs::exists(dir.path() / "out" / "benchmark_models" / (id + ".quirk")));
}

TEST(Commands, BenchmarkUnknownIdsAndEmptyList) {
    TempDir dir("benchmark_unknown");
    write_file(dir / "run.ini", "[dataset]\nsamples = 60\n[network]\ndr_layers = 1\n[train]\nmax_steps = 5\n"
                                "[benchmark]\nprune = false\n[output]\ndir = " + (dir / "out") + "\n");
    const Outcome bad = run("benchmark", dir / "run.ini", {"I.6.2", "X.1.1"});
    EXPECT_EQ(bad.code, kExitConfig);
    EXPECT_NE(bad.err.find("X.1.1"), std::string::npos);
    EXPECT_EQ(load_csv(dir / "out/benchmark.csv").row_labels, (std::vector<std::string>{"I.6.2"}));
    const Outcome empty = run("benchmark", dir / "run.ini");
    EXPECT_EQ(empty.code, kExitConfig);
    EXPECT_NE(empty.err.find("usage"), std::string::npos);
}

TEST(Commands, CompareSinFitsWell) {
    TempDir dir("compare_sin");
    write_file(dir / "run.ini", "[compare]\ntarget = sin\nbudgets = 16\nsamples = 400\nsmoothness = 0\n"
                                "[train]\nlearning_rate = 0.02\nmax_steps = 3000\neval_every = 10\n"
                                "[output]\ndir = " + (dir / "out") + "\n");
    CliOptions opt;
    opt.config_path = dir / "run.ini";
    std::ostringstream out;
    const auto results = cmd_compare_activations(resolve_config(opt), out);
    ASSERT_EQ(results.size(), 1U);
    EXPECT_EQ(results[0].dr_params, 16U);
    // Both errors are dominated by the few test points just outside the
    // training span, where either model holds its boundary value.
    EXPECT_LT(results[0].dr_rmse, 2e-2);
    EXPECT_LT(results[0].bspline_rmse[0], 2e-2);
}

TEST(Commands, CompareFig4Grid) {
    TempDir dir("compare_fig4");
    write_file(dir / "run.ini", "[compare]\nbudgets = 16, 22, 46\nsamples = 300\ncurve_points = 50\n"
                                "[train]\nmax_steps = 30\n[output]\ndir = " + (dir / "out") + "\n");
    const Outcome r = run("compare-activations", dir / "run.ini");
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const Dataset table = load_csv(dir / "out/compare_rmse.csv");
    EXPECT_EQ(table.size(), 3U);
    EXPECT_EQ(table.input_dim(), 4U); // budget, dr_params, dr_rmse, two spline columns
    EXPECT_EQ(table.input_names[1], "dr_params");
    EXPECT_EQ(table.row(2)[1], 46.0);
    EXPECT_EQ(load_csv(dir / "out/compare_curves.csv").size(), 50U);
    for (int b : {16, 22, 46}) {
        const std::string svg = read_file(dir / ("out/compare_b" + std::to_string(b) + ".svg"));
        EXPECT_EQ(count(svg, "<svg"), 1U);
        EXPECT_EQ(count(svg, "<g"), count(svg, "</g>"));
    }
}

TEST(Commands, CompareBudgetRules) {
    TempDir dir("compare_budget");
    write_file(dir / "small.ini", "[compare]\nbudgets = 3\n[output]\ndir = " + (dir / "out") + "\n");
    EXPECT_EQ(run("compare-activations", dir / "small.ini").code, kExitConfig);
    write_file(dir / "odd.ini", "[compare]\nbudgets = 9\nsamples = 100\nsmoothness = 1\n[train]\nmax_steps = 5\n"
                                "[output]\nsvg = false\ndir = " + (dir / "out") + "\n");
    diagnostics().reset();
    const Outcome r = run("compare-activations", dir / "odd.ini");
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(diagnostics().rounded_budgets.load(), 1U);
    EXPECT_NE(r.err.find("odd"), std::string::npos);
    EXPECT_EQ(load_csv(dir / "out/compare_rmse.csv").inputs[1], 8.0);
}

#ifdef QUIRK_CLI_PATH
namespace {

int shell(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " \"" QUIRK_CLI_PATH "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Binary, ExitCodes) {
    EXPECT_EQ(shell("list-equations"), 0);
    EXPECT_EQ(shell(""), kExitConfig);
    EXPECT_EQ(shell("train"), kExitConfig);
    EXPECT_EQ(shell("train --config /nonexistent/run.ini"), kExitIo);
    EXPECT_EQ(shell("benchmark --out /tmp/quirk_cli_bin_empty"), kExitConfig);
    fs::remove_all("/tmp/quirk_cli_bin_empty");
}

TEST(Binary, OverridesAndThreads) {
    TempDir dir("binary");
    write_file(dir / "run.ini", small_train_config(dir / "ignored"));
    ASSERT_EQ(shell("train -c " + (dir / "run.ini") + " --seed 9 --out " + (dir / "one")), 0);
    ASSERT_EQ(shell("train -c " + (dir / "run.ini") + " --seed 9 --out " + (dir / "three"), "QUIRK_THREADS=3"), 0);
    EXPECT_FALSE(fs::exists(dir.path() / "ignored"));
    EXPECT_EQ(read_file(dir / "one/model.quirk"), read_file(dir / "three/model.quirk"));
    EXPECT_EQ(shell("train -c " + (dir / "run.ini") + " --out " + (dir / "x"), "QUIRK_THREADS=zero"), kExitConfig);
}
#endif
