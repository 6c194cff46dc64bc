#pragma once

/**
 * @file experiment.hpp
 * @brief Task runners behind the command-line tool.
 *
 * Each run writes `<task>.json` plus CSV tables into the output directory.
 * Every JSON report embeds the canonical config and its hash; wall-clock
 * data lives only in `meta.json`, so report bodies are byte-identical across
 * reruns of the same config and seed.
 */

#include "glued/config.hpp"
#include "glued/error.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace glued {

struct RunOptions {
    std::filesystem::path out_dir = ".";
    /// Worker cap; 0 means hardware concurrency.
    std::size_t threads = 1;
    std::optional<std::uint64_t> seed;
};

struct RunResult {
    std::vector<std::filesystem::path> files;
    /// One-line human summary.
    std::string summary;
};

/// Runs the task of a loaded config. Throws glued::Error.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options);

/// 0 ok, 2 config or invalid parameter, 3 hypothesis violation or ambiguity, 4 numeric failure.
int exit_code(ErrorKind kind);

/// Loads, runs and maps failures to an exit code; messages go to `err`.
int run_config_file(const std::filesystem::path& config, const RunOptions& options, std::ostream& out,
                    std::ostream& err);

/// Calls f(i) for i in [0, n) on up to `threads` workers. Results must go to per-index slots.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& f);

} // namespace glued
