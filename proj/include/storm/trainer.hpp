#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "storm/data.hpp"
#include "storm/features.hpp"
#include "storm/metrics.hpp"
#include "storm/model.hpp"
#include "storm/optim.hpp"
#include "storm/rescaler.hpp"

namespace storm {

enum class Mode { None, Storm, Agra };

Mode mode_from_string(const std::string& s);
std::string to_string(Mode m);

enum class LrSchedule { Constant, LinearWarmup };

enum class HeadlineMetric { Accuracy, F1, Mcc };

HeadlineMetric headline_from_string(const std::string& s);
std::string to_string(HeadlineMetric m);

struct TrainerConfig {
  Mode mode{Mode::Storm};
  int batch_size{32};
  int max_epochs{10};
  int patience{3};
  int inner_loop_count{1};  // capped at 4
  int forward_passes{3};    // G
  int memory_size{0};       // 0 = batch_size
  double inner_lr{0.1};     // rate of the unrolled SGD step
  OptimizerKind theta_optimizer{OptimizerKind::Adam};
  double theta_lr{1e-3};
  OptimizerKind omega_optimizer{OptimizerKind::Adam};
  double omega_lr{1e-3};
  LrSchedule lr_schedule{LrSchedule::Constant};
  double warmup_frac{0.1};
  double dropout_rate{0.1};

  // ablation switches
  // With use_meta_learning=false the rescaler is still trained, but by plain
  // first-order descent on the current batch's rescaled loss (no validation
  // batch, no unrolled update).
  bool use_meta_learning{true};
  bool use_meta_grad{true};      // second-order path through the inner update
  bool use_outer_grad{true};     // first-order path through the validation weights
  bool rescale_meta_loss{true};  // false: plain (unrescaled) meta loss
  bool freeze_omega{false};      // diagnostics: no rescaler updates at all
  bool clean_validation_source{false};
  bool binary_mode{false};
  double binary_threshold{0.5};
  bool class_separation{true};
  bool loss_only_features{false};
  bool group_stats_batch_only{false};
  double weight_scale{1.0};  // multiplies rescaler outputs (diagnostics)
  bool agra_keep_nonpositive{false};

  // model / rescaler architecture
  EncoderKind encoder{EncoderKind::FixedFeatures};
  int encoder_width{64};
  int head_hidden{0};
  int rescaler_hidden{32};

  HeadlineMetric headline{HeadlineMetric::Accuracy};
  int positive_class{1};
  std::uint64_t seed{1};

  void validate() const;
};

// ---------------------------------------------------------------------------
// one meta iteration, exposed for oracle-level tests

// Computes rescaler inputs for a batch given parameter tensors (values are
// read gradient-free). Tests may return frozen features here.
using FeatureFn = std::function<std::vector<std::vector<double>>(
    const std::vector<graph::Tensor>& theta, const Batch& batch)>;

struct UnrollResult {
  std::vector<graph::Tensor> theta_star;                     // after all steps
  std::vector<std::vector<std::vector<double>>> step_grads;  // per step, per param
  std::vector<std::vector<double>> step_weights;             // w0 values per step
  std::vector<std::vector<double>> step_losses;              // per-sample losses
  graph::Tensor weighted_loss;  // of the last step, still in the graph
  double last_loss{0.0};
};

// Differentiable inner update(s): theta* = theta - inner_lr * grad(weighted
// loss). With create_graph, theta* stays a function of the rescaler
// parameters so the meta gradient can flow through it. Feature vectors for
// traversal t are requested at the parameters produced by traversal t-1.
UnrollResult unroll_inner(const Classifier& model, const Rescaler* rescaler,
                          const std::vector<Batch>& batches, const FeatureFn& features,
                          const TrainerConfig& cfg, RngStream* model_rng, bool create_graph);

struct OuterResult {
  double meta_loss{0.0};
  std::vector<std::vector<double>> omega_grads;  // aligned with rescaler params
};

// Rescaled meta loss on a validation batch evaluated at theta*, with the
// meta (second-order) and outer (first-order) gradient routes individually
// switchable. Only computes gradients; the omega update is the caller's.
OuterResult outer_step(const Classifier& model, const Rescaler& rescaler,
                       const std::vector<graph::Tensor>& theta_star, const Batch& val_batch,
                       const std::vector<std::vector<double>>& val_features,
                       const TrainerConfig& cfg, RngStream* meta_rng);

// ---------------------------------------------------------------------------
// AGRA baseline

struct AgraStepResult {
  std::vector<int> kept_rows;  // rows of the batch that survived the filter
  std::vector<double> similarities;
  std::vector<double> losses;
  bool stepped{false};
};

AgraStepResult agra_step(Classifier& model, Optimizer& theta_opt, const Batch& batch,
                         const TrainView& pool, const TrainerConfig& cfg, RngStream& model_rng,
                         RngStream& agra_rng, double lr_factor);

// ---------------------------------------------------------------------------
// full training protocol

struct EpochLog {
  int epoch{0};
  std::vector<int> sample_ids;  // visit order
  std::vector<double> weights;  // loss weight each sample received
  std::vector<double> losses;   // per-sample loss at visit time
  double mean_weight{0.0};
  // end-of-epoch snapshot over the training set (dropout off)
  std::vector<int> calib_ids;
  std::vector<double> confidence;
  std::vector<int> predicted;
  metrics::ClassificationMetrics val;
  double val_metric{0.0};
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int best_epoch{0};
  double best_val_metric{0.0};
  std::vector<std::vector<double>> best_theta;
  std::vector<std::vector<double>> final_theta;
  std::vector<std::vector<double>> final_omega;
  int steps_run{0};
  bool diverged{false};
  std::string divergence_info;
};

class MetaTrainer {
 public:
  // `train` provides the training samples (noisy labels only). `val_eval` is
  // the split used for model selection. Meta-validation batches come from
  // the training set itself unless clean_validation_source, in which case
  // they are sampled from `val_eval`.
  MetaTrainer(const TrainView& train, const TrainView& val_eval, TrainerConfig cfg);

  TrainResult train();

  // Invoked after each committed optimization step (diagnostics, e.g.
  // trajectory checks). Leave empty for normal runs.
  std::function<void(int step)> step_probe;

  Classifier& model() { return *model_; }
  const Classifier& model() const { return *model_; }
  Rescaler* rescaler() { return rescaler_.get(); }
  MemoryBank& memories() { return *memories_; }
  const TrainerConfig& config() const { return cfg_; }

  metrics::ClassificationMetrics evaluate(const TrainView& view) const;
  double headline_value(const metrics::ClassificationMetrics& m) const;

 private:
  TrainView train_;
  TrainView val_eval_;
  TrainerConfig cfg_;
  FeatureConfig fcfg_;
  std::unique_ptr<Classifier> model_;
  std::unique_ptr<Rescaler> rescaler_;
  std::unique_ptr<MemoryBank> memories_;
};

// Dropout-off predictions on a view, batched.
std::vector<int> predict_view(const Classifier& model, const TrainView& view);

// Confidence of the predicted class for every sample in the view.
void predict_with_confidence(const Classifier& model, const TrainView& view,
                             std::vector<int>& predictions, std::vector<double>& confidence);

}  // namespace storm
