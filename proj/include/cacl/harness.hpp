#pragma once

// Run configuration files, report emission and multi-run aggregation.

#include <string>
#include <vector>

#include "cacl/dataset.hpp"
#include "cacl/factorized.hpp"
#include "cacl/trainer.hpp"

namespace cacl {

struct RunConfig {
  std::string name;  // label used by `report`; defaults to the mode name
  TaskStreamSpec stream;
  NetworkSpec network;
  TrainConfig train;
  bool save_uncompressed = true;
};

// Flat JSON object; unknown keys and wrong types raise ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);

std::string metrics_to_json(const MetricsReport& report, const RunConfig& cfg);
// Rows are tasks, columns are layers; entries are appended ranks.
std::string ranks_csv(const MetricsReport& report);

struct RunSummary {
  std::string name;
  std::size_t runs = 0;
  double acc_mean = 0, acc_std = 0;    // percent
  double bwt_mean = 0, bwt_std = 0;    // percent
  double size_mean = 0, size_std = 0;  // decimal megabytes
};

// Reads metrics.json in `dir` and its immediate subdirectories, grouped by
// config name (sample standard deviation; 0 for a single run).
std::vector<RunSummary> aggregate_runs(const std::string& dir);
std::string format_summary_table(const std::vector<RunSummary>& rows);

}  // namespace cacl
