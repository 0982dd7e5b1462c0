#pragma once

#include <filesystem>
#include <string>

#include "sabias/config.hpp"
#include "sabias/inference.hpp"

namespace sabias {

inline constexpr const char* kVersion = "0.1.0";

struct RunOptions {
    int n_threads = 0;  // 0: hardware concurrency
    bool verbose = false;
};

struct RunSummary {
    std::vector<std::string> warnings;
    std::vector<std::filesystem::path> artifacts;
};

/// Execute the study named in the config and write its CSV/JSON outputs plus
/// manifest.json into out_dir. CSVs are byte-reproducible for a fixed config
/// and seed; only the manifest carries timings.
RunSummary run_experiment(const std::filesystem::path& config_path,
                          const std::filesystem::path& out_dir, const RunOptions& opts = {});
RunSummary run_experiment(Experiment& exp, const std::filesystem::path& out_dir,
                          const RunOptions& opts = {});

/// Render report.md from the artifacts in out_dir. Throws MissingArtifacts.
std::filesystem::path emit_report(const std::filesystem::path& out_dir);

} // namespace sabias
