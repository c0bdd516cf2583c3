#include <iostream>

#include "CLI11.hpp"
#include "speclen/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Spectral sample-size estimation toolkit"};
    app.require_subcommand(1);

    speclen::CliOptions options;
    long long seed = 0;
    std::string out;
    int threads = 0;

    const char* names[] = {"estimate", "knee", "stress", "calibrate", "variance-check", "gen"};
    const char* descs[] = {"two-stage or direct sample-size estimation",
                           "knee point of a performance curve with bootstrap CI",
                           "stress suite along a robustness axis",
                           "constant or alpha calibration",
                           "Monte Carlo check of the predictive-variance bound",
                           "dump synthetic features to CSV"};
    for (int i = 0; i < 6; ++i) {
        auto* sub = app.add_subcommand(names[i], descs[i]);
        sub->add_option("--config", options.config_path, "config file path")->required();
        sub->add_option("--seed", seed, "master seed (overrides config)");
        sub->add_option("--out", out, "output path (report, or CSV for gen)");
        sub->add_option("--threads", threads, "worker threads (determinism preserved)");
    }

    CLI11_PARSE(app, argc, argv);

    auto* sub = app.get_subcommands().front();
    options.command = sub->get_name();
    if (sub->count("--seed")) options.seed = seed;
    if (sub->count("--out")) options.out = out;
    if (sub->count("--threads")) {
        if (threads < 1) {
            std::cerr << "validation error: --threads must be at least 1\n";
            return 2;
        }
        options.threads = threads;
        Eigen::setNbThreads(threads);
    }

    return speclen::run_cli(options, std::cout, std::cerr);
}
