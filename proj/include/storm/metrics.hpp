#pragma once

#include <optional>
#include <string>
#include <vector>

namespace storm::metrics {

struct ClassificationMetrics {
  double accuracy{0.0};
  double f1{0.0};       // binary F1 of the configured positive class
  double matthews{0.0};  // 0 when any confusion factor is empty
};

// positive_class selects which label counts as the positive for F1/MCC.
ClassificationMetrics classification_metrics(const std::vector<int>& predictions,
                                             const std::vector<int>& labels,
                                             int positive_class = 1);

struct ReliabilityBin {
  double lo{0.0};
  double hi{0.0};
  int count{0};
  double mean_confidence{0.0};
  double mean_accuracy{0.0};
};

struct CalibrationResult {
  std::vector<ReliabilityBin> bins;
  double ece{0.0};
};

// confidence = probability of the predicted class; correct = whether the
// prediction matched the reference labels. Equal-width bins over [0,1].
CalibrationResult calibration(const std::vector<double>& confidence,
                              const std::vector<bool>& correct, int bins = 10);

struct RocResult {
  // (false positive rate, true positive rate) points, threshold sweep order.
  std::vector<std::pair<double, double>> points;
  double auc{0.5};
};

// Low weight is treated as a positive detection of a noisy sample. Returns
// nothing when the mask is degenerate (all clean or all noisy).
std::optional<RocResult> rescaler_roc(const std::vector<double>& weights,
                                      const std::vector<bool>& noise_mask);

struct WeightProgressionRow {
  int epoch{0};
  double mean_clean{0.0};
  double mean_noisy{0.0};
  double mean_all{0.0};
};

struct FilterTimingRow {
  int sample_id{0};
  bool noisy{false};
  int earliest_epoch{-1};  // -1 = never downscaled
  int latest_epoch{-1};
};

struct WeightAnalyses {
  std::vector<WeightProgressionRow> progression;
  std::vector<FilterTimingRow> timing;
};

// weights_by_epoch[e] maps over sample slots (aligned with ids/noise mask).
// A sample is downscaled in an epoch when its weight falls below
// threshold_factor times that epoch's mean weight.
WeightAnalyses weight_analyses(const std::vector<std::vector<double>>& weights_by_epoch,
                               const std::vector<int>& sample_ids,
                               const std::vector<bool>& noise_mask,
                               double threshold_factor = 0.5);

}  // namespace storm::metrics
