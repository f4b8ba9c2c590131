#pragma once

#include <string>
#include <vector>

#include "storm/graph.hpp"
#include "storm/rng.hpp"

namespace storm {

// One assembled mini-batch: dense feature matrix plus labels, in batch order.
struct Batch {
  graph::Tensor features;  // B x d, constant
  std::vector<int> labels;
  std::vector<int> ids;
  int size() const { return static_cast<int>(labels.size()); }
};

enum class EncoderKind { FixedFeatures, LinearEncoder };

enum class InitKind { Uniform, Zeros };

struct ModelConfig {
  int input_dim{0};
  int num_classes{2};
  EncoderKind encoder{EncoderKind::FixedFeatures};
  int encoder_width{64};
  int head_hidden{0};  // 0 = single linear layer to C logits
  double dropout_rate{0.1};
  InitKind init{InitKind::Uniform};
};

struct NamedTensor {
  std::string name;
  graph::Tensor t;
};

using ParamVec = std::vector<NamedTensor>;

// Softmax classifier: encoder stage (identity over fixed features, or a
// trainable linear layer) followed by a linear head. Dropout is applied to
// the encoder output, which for fixed features means the features themselves.
class Classifier {
 public:
  Classifier(const ModelConfig& cfg, RngStream& init_rng);

  const ModelConfig& config() const { return cfg_; }
  ParamVec& params() { return params_; }
  const ParamVec& params() const { return params_; }
  std::vector<graph::Tensor> param_tensors() const;

  // Probability matrix (B x C); rows sum to 1. With dropout_on, masks come
  // from rng; with dropout off the pass is deterministic and rng is unused.
  graph::Tensor forward(const Batch& batch, bool dropout_on, RngStream* rng) const;

  // Same forward, but parameters are taken from `theta` (e.g. the unrolled
  // post-update parameters) instead of the stored leaves. `theta` must hold
  // one entry per parameter, in the same order.
  graph::Tensor forward_with(const std::vector<graph::Tensor>& theta, const Batch& batch,
                             bool dropout_on, RngStream* rng) const;

  std::vector<int> predict(const Batch& batch) const;

  // Copies of all parameter values (checkpointing / restoring).
  std::vector<std::vector<double>> snapshot_values() const;
  void restore_values(const std::vector<std::vector<double>>& values);

 private:
  ModelConfig cfg_;
  ParamVec params_;
};

// ell_i = -log(max(probs[i, labels[i]], 1e-12)), as a differentiable vector.
graph::Tensor per_sample_loss(const graph::Tensor& probs, const std::vector<int>& labels);

// Argmax per row; ties resolved toward the lowest class index.
std::vector<int> argmax_rows(const graph::Tensor& probs);

}  // namespace storm
