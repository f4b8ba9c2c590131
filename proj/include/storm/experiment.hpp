#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "storm/data.hpp"
#include "storm/metrics.hpp"
#include "storm/trainer.hpp"

namespace storm {

enum class DatasetKind { Synthetic, Delimited, LineJson };

enum class SplitScheme { Fractions, Cv2 };

struct DatasetSpec {
  DatasetKind kind{DatasetKind::Synthetic};
  std::string path;
  LoadSchema schema;
  int max_features{0};  // TF-IDF vocabulary cap, 0 = unlimited
  SyntheticConfig synth;
};

struct SplitSpec {
  SplitScheme scheme{SplitScheme::Fractions};
  double train{0.8};
  double val{0.1};
  double test{0.1};
  double cv_val_frac{0.1};
};

struct ExperimentSpec {
  std::string preset;  // empty when fully explicit
  DatasetSpec dataset;
  SplitSpec split;
  double noise_rate{0.0};
  TrainerConfig trainer;
  bool compare_baseline{false};
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir{"out"};
  std::string positive_label;  // resolved against the loaded label set

  void validate() const;
};

// Flat key=value config grammar ('#' comments). Precedence: preset defaults,
// then file keys, then command-line overrides. Unknown keys are errors.
ExperimentSpec parse_config(const std::string& config_path,
                            const std::vector<std::string>& overrides,
                            const std::string& preset_flag = "");

// Expanded, fully resolved key=value form; re-parsing it reproduces the spec.
std::string serialize_spec(const ExperimentSpec& spec);

std::vector<std::string> preset_names();

// ---------------------------------------------------------------------------
// per-run analysis records

struct RunData {
  std::vector<int> ids;  // train-split sample ids, stable order
  std::vector<int> labels_clean;
  std::vector<int> labels_noisy;
  std::vector<bool> noise_mask;
  // per epoch, aligned with ids
  std::vector<std::vector<double>> weights_by_epoch;
  std::vector<std::vector<double>> confidence_by_epoch;
  std::vector<std::vector<int>> predicted_by_epoch;
  std::vector<double> val_metric_by_epoch;
  int best_epoch{0};
};

struct EpochAnalysis {
  int epoch{0};
  std::optional<double> rescaler_auc;
  double ece_clean{0.0};
  double ece_noisy{0.0};
  double mean_weight_clean{0.0};
  double mean_weight_noisy{0.0};
  double weight_gap{0.0};  // clean minus noisy mean weight
};

struct RunAnalysis {
  std::vector<EpochAnalysis> epochs;
  metrics::WeightAnalyses weight_tables;
  std::vector<std::pair<double, double>> final_roc_points;
};

RunAnalysis analyze_run(const RunData& run);

// ---------------------------------------------------------------------------
// orchestration

struct RunOutcome {
  std::uint64_t seed{0};
  Mode mode{Mode::None};
  metrics::ClassificationMetrics test;
  double test_headline{0.0};
  int best_epoch{0};
  RunAnalysis analysis;
  RunData data;
  bool failed{false};
  std::string error;
};

struct ExperimentResult {
  std::vector<RunOutcome> runs;
  int exit_code{0};
};

// Runs every seed (and the paired baseline when requested), writes the
// artifact bundle under spec.output_dir, and returns the in-memory results.
ExperimentResult run_experiment(const ExperimentSpec& spec);

// Re-reduces an existing bundle directory from its per-run metrics files.
int aggregate_directory(const std::string& output_dir);

// Emits plot-ready tables (roc, weights_by_epoch, filter_timing,
// reliability) from a single run directory's log.
int analyze_run_directory(const std::string& run_dir, const std::string& out_dir);

std::string code_version();

}  // namespace storm
