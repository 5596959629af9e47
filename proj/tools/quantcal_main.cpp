// Pipeline driver: one subcommand per stage, file handoff between stages.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "quantcal/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"quantcal: community-level political-content prevalence and "
                 "cross-partisan toxicity pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string workspace;
    if (const char* env = std::getenv("QUANTCAL_WORKSPACE")) workspace = env;
    std::int64_t seed = -1;
    int threads = 0;

    app.add_option("--config", config_path, "Pipeline config file (JSON)")
        ->required();
    app.add_option("--workspace", workspace,
                   "Workspace directory (default: $QUANTCAL_WORKSPACE)");
    app.add_option("--seed", seed, "Override the config seed");
    app.add_option("--threads", threads, "Override the config thread count");

    for (const auto& stage : quantcal::stage_names())
        app.add_subcommand(stage, "Run the " + stage + " stage");

    CLI11_PARSE(app, argc, argv);

    if (workspace.empty()) {
        std::cerr << "error: no workspace; pass --workspace or set "
                     "QUANTCAL_WORKSPACE\n";
        return 2;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        auto cfg = quantcal::load_config(config_path);
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (threads > 0) cfg.threads = threads;
        quantcal::run_stage(stage, cfg, workspace);
    } catch (const std::exception& e) {
        std::cerr << "error [" << stage << "]: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
