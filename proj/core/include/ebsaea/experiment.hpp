#pragma once

// Experiment runner: related-task generation, meta-training per output
// channel, repeated regression or optimization runs and their summaries.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ebsaea/meta.hpp"
#include "ebsaea/metrics.hpp"
#include "ebsaea/optimize.hpp"
#include "ebsaea/tasks.hpp"

namespace ebsaea {

enum class Experiment { kSinusoidRegression, kDtlzMoo, kConstrainedSoo };

std::string_view to_string(Experiment e);
Experiment experiment_from_string(std::string_view name);

struct ExperimentConfig {
  Experiment experiment = Experiment::kDtlzMoo;
  Regime regime = Regime::kInRange;
  Family family = Family::kDtlz2;
  std::size_t d = 10;
  std::size_t m = 3;

  std::size_t related_count = 500;  // N
  std::size_t related_size = 20;    // |D_i|
  Sampling related_sampling = Sampling::kLhs;
  MetaConfig meta;

  std::size_t n_runs = 10;
  std::uint64_t seed = 1;

  // sinusoid-regression
  std::vector<std::size_t> support_sizes{2, 3, 5, 10, 20, 30, 40};
  std::size_t test_points = 100;
  AdaptConfig adapt;
  PlainGpOptions plain{.fit_p = true};

  // dtlz-moo and constrained-soo
  OptimizerConfig eb;
  OptimizerConfig baseline;
  bool run_eb = true;
  bool run_baseline = true;
  std::size_t reference_points = 5000;

  /// Load experiences from here instead of meta-training.
  std::optional<std::filesystem::path> experiences;
  std::filesystem::path out_dir = "out";
};

/// Defaults for one experiment kind (budgets, related-task setup, run count).
ExperimentConfig default_experiment(Experiment e);

/// Fields absent from `doc` keep the defaults of the named experiment.
/// Throws Error(kInvalidConfig) with the offending key.
ExperimentConfig experiment_from_json(const nlohmann::json& doc);
nlohmann::json experiment_to_json(const ExperimentConfig& cfg);

/// Related tasks for meta-training, as datasets indexed [channel][task].
std::vector<std::vector<Dataset>> related_datasets(const ExperimentConfig& cfg);

/// One meta-training result per output channel.
std::vector<MetaResult> train_experiences(const ExperimentConfig& cfg);

/// Target task of run r.
TaskSpec target_task(const ExperimentConfig& cfg, std::size_t run);
std::uint64_t run_seed(const ExperimentConfig& cfg, std::size_t run);

struct RunRow {
  std::size_t run = 0;
  std::string mode;
  std::size_t size = 0;  // support size for regression, 0 otherwise
  std::vector<double> values;
};

struct LabelledArchive {
  std::size_t run = 0;
  std::string mode;
  Archive archive;
};

struct ExperimentResult {
  std::vector<std::string> metric_names;
  std::vector<RunRow> rows;
  std::vector<LabelledArchive> archives;
  std::vector<MetaTrace> traces;
  nlohmann::json summary;

  /// Values of one metric for rows matching mode (and size when given).
  std::vector<double> values(std::string_view mode, std::string_view metric,
                             std::optional<std::size_t> size = std::nullopt) const;
};

/// Meta-train (or load) experiences, run every repetition, write runs.csv,
/// summary.json, experiences.json, meta_trace.csv and per-run logs.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

nlohmann::json summarize_rows(Experiment experiment, const std::vector<std::string>& metric_names,
                              const std::vector<RunRow>& rows);
void write_rows_csv(const std::vector<std::string>& metric_names, const std::vector<RunRow>& rows,
                    const std::filesystem::path& path);
/// Parses a runs.csv written by write_rows_csv.
std::vector<RunRow> read_rows_csv(const std::filesystem::path& path, std::vector<std::string>* metric_names);

}  // namespace ebsaea
