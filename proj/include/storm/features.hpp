#pragma once

#include <deque>
#include <vector>

#include "storm/model.hpp"
#include "storm/rng.hpp"

namespace storm {

// Per-sample summaries over G stochastic forward passes.
struct SampleStats {
  double loss_mean{0.0};
  double loss_std{0.0};
  double prob_mean{0.0};
  double prob_std{0.0};
  int predicted{0};  // from a dropout-off pass
  int label{0};      // noisy label
};

// Bounded buffer of the most recent entries, in insertion order.
class ClassMemory {
 public:
  explicit ClassMemory(int capacity = 0) : capacity_(capacity) {}

  void push(const SampleStats& s) {
    entries_.push_back(s);
    if (capacity_ > 0 && static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
  }

  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }
  const std::deque<SampleStats>& entries() const { return entries_; }

 private:
  int capacity_;
  std::deque<SampleStats> entries_;
};

// One memory per target class, or a single shared memory when class
// separation is disabled.
class MemoryBank {
 public:
  MemoryBank(int num_classes, int capacity, bool class_separation);

  void push(const SampleStats& s);
  const ClassMemory& memory_for_class(int c) const;
  int num_slots() const { return static_cast<int>(memories_.size()); }

 private:
  bool class_separation_;
  std::vector<ClassMemory> memories_;
};

// Closed-form KL divergence between N(m1, s1^2) and N(m2, s2^2); both stds
// are clamped to >= 1e-6 first.
double kl_normal(double m1, double s1, double m2, double s2);

// Overlap coefficient of the two normal densities (integral of their
// pointwise minimum), computed from the analytic intersection points.
double ovl_normal(double m1, double s1, double m2, double s2);

// Standard normal CDF.
double normal_cdf(double x);

struct FeatureConfig {
  int forward_passes{3};  // G
  bool loss_only{false};  // condensed single-feature variant
  bool group_stats_batch_only{false};
  double dropout_rate{0.1};
};

inline constexpr int kFullFeatureDim = 19;

int feature_dim(const FeatureConfig& cfg);

// Mean/std summaries of loss and label-probability over G dropout passes
// plus a dropout-off prediction. All passes are gradient-free.
std::vector<SampleStats> stochastic_passes(const Classifier& model,
                                           const std::vector<graph::Tensor>& theta,
                                           const Batch& batch, int G, RngStream& rng);

// The rescaler input vector for one sample given its class population.
std::vector<double> compute_features(const SampleStats& stats, const ClassMemory& memory,
                                     const FeatureConfig& cfg);

// Feature matrix for a batch: inserts the batch's stats into the memory
// bank, then computes each sample's features against its class memory.
// With group_stats_batch_only, group statistics come from the batch alone.
std::vector<std::vector<double>> batch_features(const std::vector<SampleStats>& stats,
                                                MemoryBank& memories, const FeatureConfig& cfg);

}  // namespace storm
