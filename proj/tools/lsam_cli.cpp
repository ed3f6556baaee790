// Experiment runner: loads a JSON config, dispatches on its "kind", and
// writes results.csv plus a manifest into the output directory.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lsam/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"linear stochastic approximation with Markov noise: experiment runner"};

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    bool quiet = false;

    app.add_option("--config", config_path, "experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory (default: current)");
    app.add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
        seed_set = true;
    });
    app.add_option("--threads", threads, "worker threads for ensembles (0 = auto)");
    app.add_flag("--quiet", quiet, "suppress progress output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    nlohmann::json config;
    try {
        std::ifstream in(config_path);
        in >> config;
    } catch (const std::exception& e) {
        std::cerr << "error: cannot parse config: " << e.what() << "\n";
        return 2;
    }

    lsam::experiment::RunOptions opts;
    opts.out_dir = out_dir;
    if (seed_set) opts.seed_override = seed;
    opts.threads = threads;
    opts.quiet = quiet;
    return lsam::experiment::run(config, opts);
}
