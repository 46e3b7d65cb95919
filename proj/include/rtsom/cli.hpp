#pragma once

#include "rtsom/config.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace rtsom::cli {

namespace fs = std::filesystem;

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, numerical_failure = 3, cache_mismatch = 4 };

/// "0", "3", "10", "2.5"
std::string noise_label(double gamma_percent);

fs::path data_file(const fs::path& out, std::size_t source, double gamma_percent);
fs::path result_dir(const fs::path& out, const std::string& name, double gamma_percent);
fs::path cache_file(const RunConfig& cfg);

struct SvdOutcome {
    bool cache_hit = false;
    fs::path cache_path;
    std::size_t rank = 0;
};

std::vector<fs::path> gen_data(const RunConfig& cfg);
SvdOutcome precompute_svd(const RunConfig& cfg);
/// One result directory per noise level. Throws CacheError when the cache
/// does not match the configured grids.
std::vector<fs::path> reconstruct_all(const RunConfig& cfg);
/// Collects every results/*/summary.json under `out` into out/report.csv.
fs::path report(const fs::path& out);

/// Command-line entry point; returns the process exit code.
int run(int argc, char** argv);

}  // namespace rtsom::cli
