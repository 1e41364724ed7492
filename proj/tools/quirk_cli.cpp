#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "quirk/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"quirk: Kolmogorov-Arnold networks with data re-uploading circuit edges"};
    app.require_subcommand(1);

    quirk::CliOptions opt;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t threads = 0;

    auto add_common = [&](CLI::App* cmd, bool config_required) {
        auto* c = cmd->add_option("-c,--config", opt.config_path, "run configuration file");
        if (config_required) c->required();
        cmd->add_option("--seed", seed, "overrides every seed in the configuration");
        cmd->add_option("-o,--out", out, "output directory");
        cmd->add_option("-j,--threads", threads, "worker threads (default: QUIRK_THREADS or the config)");
    };
    add_common(app.add_subcommand("train", "train a network and write model, history and summary"), true);
    add_common(app.add_subcommand("eval", "evaluate a saved model on the configured dataset"), true);
    add_common(app.add_subcommand("prune", "prune and fine-tune a saved model"), true);
    add_common(app.add_subcommand("interpret", "fit polynomials to every edge of a saved model"), true);
    auto* bench = app.add_subcommand("benchmark", "train and prune one network per equation");
    add_common(bench, false);
    bench->add_option("equations", opt.equations, "equation ids (overrides [benchmark] equations)");
    add_common(app.add_subcommand("compare-activations", "DR circuits against B-splines at equal parameter budgets"), false);
    app.add_subcommand("list-equations", "list the registered equations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : quirk::kExitConfig;
    }

    CLI::App* cmd = app.get_subcommands().front();
    auto given = [&](const char* name) {
        const auto* o = cmd->get_option_no_throw(name);
        return o != nullptr && o->count() > 0;
    };
    if (given("--seed")) opt.seed = seed;
    if (given("--out")) opt.out = out;
    if (given("--threads")) opt.threads = threads;
    return quirk::run_command(cmd->get_name(), opt, std::cout, std::cerr);
}
