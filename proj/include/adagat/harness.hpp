#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adagat/training.hpp"

namespace adagat::harness {

// CLI entry point (subcommands: train, sweep, eval, landscape, report).
// Returns the process exit code; diagnostics go to stderr.
int run_cli(int argc, const char* const* argv);

struct RunSummary {
    std::filesystem::path dir;
    std::string dataset;
    std::string method;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    std::vector<training::MetricsRecord> series;

    const training::MetricsRecord& final_record() const;
};

RunSummary load_run(const std::filesystem::path& run_dir);

struct ReportRow {
    std::string dataset;
    std::string method;
    std::string lambda_label;  // "-" when lambda does not apply
    std::size_t num_seeds = 0;
    double guide_clean_mean = 0.0, guide_clean_std = 0.0;
    double target_clean_mean = 0.0, target_clean_std = 0.0;
    double target_robust_mean = 0.0, target_robust_std = 0.0;
};

struct Report {
    std::vector<ReportRow> rows;
    std::vector<RunSummary> runs;
};

// Aggregates final records per (dataset, method, lambda) over seeds:
// mean and sample standard deviation (n-1).
Report make_report(const std::vector<std::filesystem::path>& run_dirs);
std::string format_report(const Report& report);
void write_report_csv(const Report& report, const std::filesystem::path& path);
void write_series_csv(const Report& report, const std::filesystem::path& path);

// Runs the cross product described by a suite JSON (base config plus
// "methods" / "lambdas" / "seeds" / "datasets" axes; the lambda axis applies
// to the adagat methods only). Returns the run directories created.
std::vector<std::filesystem::path> run_sweep(const std::string& suite_json,
                                             const std::filesystem::path& out_root);

}  // namespace adagat::harness
