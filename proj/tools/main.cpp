// gluedheat: run one experiment config and write its reports.

#include "glued/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"Heat flow, capacity and random walks on glued weighted complexes"};
    std::string config;
    glued::RunOptions options;
    std::string out_dir = "out";
    std::size_t threads = 1;
    std::uint64_t seed = 0;

    app.add_option("--config", config, "Experiment config file")->required()->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "Output directory")->capture_default_str();
    app.add_option("--threads", threads, "Worker cap (0 = all cores)")->capture_default_str();
    auto* seed_opt = app.add_option("--seed", seed, "Overrides the seed of the config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    options.out_dir = out_dir;
    options.threads = threads;
    if (*seed_opt) options.seed = seed;
    return glued::run_config_file(config, options, std::cout, std::cerr);
}
