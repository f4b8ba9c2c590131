#include "storm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace storm::metrics {

ClassificationMetrics classification_metrics(const std::vector<int>& predictions,
                                             const std::vector<int>& labels,
                                             int positive_class) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw std::invalid_argument("classification_metrics: empty or mismatched inputs");
  ClassificationMetrics m;
  double tp = 0, fp = 0, fn = 0, tn = 0;
  int correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct;
    const bool pred_pos = predictions[i] == positive_class;
    const bool is_pos = labels[i] == positive_class;
    if (pred_pos && is_pos)
      ++tp;
    else if (pred_pos && !is_pos)
      ++fp;
    else if (!pred_pos && is_pos)
      ++fn;
    else
      ++tn;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(predictions.size());
  m.f1 = (2 * tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  m.matthews = denom > 0 ? (tp * tn - fp * fn) / std::sqrt(denom) : 0.0;
  return m;
}

CalibrationResult calibration(const std::vector<double>& confidence,
                              const std::vector<bool>& correct, int bins) {
  if (confidence.size() != correct.size())
    throw std::invalid_argument("calibration: mismatched inputs");
  if (bins < 1) throw std::invalid_argument("calibration: bins must be >= 1");
  CalibrationResult r;
  r.bins.resize(static_cast<std::size_t>(bins));
  std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> acc_sum(static_cast<std::size_t>(bins), 0.0);
  for (int b = 0; b < bins; ++b) {
    r.bins[static_cast<std::size_t>(b)].lo = static_cast<double>(b) / bins;
    r.bins[static_cast<std::size_t>(b)].hi = static_cast<double>(b + 1) / bins;
  }
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    const double p = confidence[i];
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("calibration: confidence outside [0,1]");
    int b = std::min(static_cast<int>(p * bins), bins - 1);
    auto& bin = r.bins[static_cast<std::size_t>(b)];
    ++bin.count;
    conf_sum[static_cast<std::size_t>(b)] += p;
    acc_sum[static_cast<std::size_t>(b)] += correct[i] ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(confidence.size());
  if (n == 0) return r;
  for (int b = 0; b < bins; ++b) {
    auto& bin = r.bins[static_cast<std::size_t>(b)];
    if (bin.count == 0) continue;
    bin.mean_confidence = conf_sum[static_cast<std::size_t>(b)] / bin.count;
    bin.mean_accuracy = acc_sum[static_cast<std::size_t>(b)] / bin.count;
    r.ece += bin.count / n * std::abs(bin.mean_confidence - bin.mean_accuracy);
  }
  return r;
}

std::optional<RocResult> rescaler_roc(const std::vector<double>& weights,
                                      const std::vector<bool>& noise_mask) {
  if (weights.size() != noise_mask.size())
    throw std::invalid_argument("rescaler_roc: mismatched inputs");
  std::size_t n_pos = 0;
  for (bool b : noise_mask) n_pos += b ? 1 : 0;
  const std::size_t n_neg = weights.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  // Sort by weight ascending: the most-downscaled samples are flagged first.
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return weights[a] < weights[b]; });

  RocResult r;
  r.points.emplace_back(0.0, 0.0);
  double tp = 0, fp = 0;
  double auc = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    // Advance over a tie group so equal weights move the curve diagonally.
    std::size_t j = i;
    double dtp = 0, dfp = 0;
    while (j < order.size() && weights[order[j]] == weights[order[i]]) {
      if (noise_mask[order[j]])
        ++dtp;
      else
        ++dfp;
      ++j;
    }
    const double prev_tpr = tp / static_cast<double>(n_pos);
    const double prev_fpr = fp / static_cast<double>(n_neg);
    tp += dtp;
    fp += dfp;
    const double tpr = tp / static_cast<double>(n_pos);
    const double fpr = fp / static_cast<double>(n_neg);
    auc += (fpr - prev_fpr) * 0.5 * (tpr + prev_tpr);
    r.points.emplace_back(fpr, tpr);
    i = j;
  }
  r.auc = auc;
  return r;
}

WeightAnalyses weight_analyses(const std::vector<std::vector<double>>& weights_by_epoch,
                               const std::vector<int>& sample_ids,
                               const std::vector<bool>& noise_mask,
                               double threshold_factor) {
  WeightAnalyses out;
  const std::size_t n = sample_ids.size();
  if (noise_mask.size() != n)
    throw std::invalid_argument("weight_analyses: mask size mismatch");
  std::vector<int> earliest(n, -1), latest(n, -1);
  for (std::size_t e = 0; e < weights_by_epoch.size(); ++e) {
    const auto& w = weights_by_epoch[e];
    if (w.size() != n) throw std::invalid_argument("weight_analyses: epoch weight size mismatch");
    WeightProgressionRow row;
    row.epoch = static_cast<int>(e) + 1;
    double sum_all = 0, sum_c = 0, sum_n = 0;
    std::size_t n_c = 0, n_n = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_all += w[i];
      if (noise_mask[i]) {
        sum_n += w[i];
        ++n_n;
      } else {
        sum_c += w[i];
        ++n_c;
      }
    }
    row.mean_all = sum_all / static_cast<double>(n);
    row.mean_clean = n_c ? sum_c / static_cast<double>(n_c) : 0.0;
    row.mean_noisy = n_n ? sum_n / static_cast<double>(n_n) : 0.0;
    out.progression.push_back(row);
    const double threshold = threshold_factor * row.mean_all;
    for (std::size_t i = 0; i < n; ++i) {
      if (w[i] < threshold) {
        if (earliest[i] < 0) earliest[i] = row.epoch;
        latest[i] = row.epoch;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    out.timing.push_back({sample_ids[i], noise_mask[i], earliest[i], latest[i]});
  return out;
}

}  // namespace storm::metrics
