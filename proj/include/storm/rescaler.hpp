#pragma once

#include <vector>

#include "storm/graph.hpp"
#include "storm/model.hpp"
#include "storm/rng.hpp"

namespace storm {

struct RescalerConfig {
  int input_dim{19};
  int hidden_width{32};
  int num_classes{2};
  bool class_separation{true};
  bool binary_mode{false};
  double binary_threshold{0.5};
  double bn_eps{1e-8};
};

// Per-class rescaling network: softmax(BN2(L2(ReLU(BN1(L1(f)))))), first
// output used as the loss weight. The batch normalization before the softmax
// centers the logits across the batch, which keeps weights from collapsing
// to zero for all samples at once.
class Rescaler {
 public:
  Rescaler(const RescalerConfig& cfg, RngStream& init_rng);

  const RescalerConfig& config() const { return cfg_; }

  // All parameters as ordered leaves (for the omega optimizer / backward).
  std::vector<graph::Tensor> param_tensors() const;
  const ParamVec& params() const { return params_; }
  ParamVec& params() { return params_; }

  // Loss weights w0 for a batch, differentiable w.r.t. the rescaler
  // parameters. Samples are routed to their class network and normalized
  // within their class group; the result is reassembled in batch order.
  graph::Tensor weights(const std::vector<std::vector<double>>& features,
                        const std::vector<int>& classes, bool training_mode) const;

  std::vector<std::vector<double>> snapshot_values() const;
  void restore_values(const std::vector<std::vector<double>>& values);

 private:
  struct ClassNet {
    graph::Tensor l1_w, l1_b;    // input_dim x hidden, hidden
    graph::Tensor bn1_g, bn1_b;  // hidden
    graph::Tensor l2_w, l2_b;    // hidden x 2, 2
    graph::Tensor bn2_g, bn2_b;  // 2
  };

  graph::Tensor class_weights(const ClassNet& net, const graph::Tensor& f,
                              bool training_mode) const;

  RescalerConfig cfg_;
  std::vector<ClassNet> nets_;
  ParamVec params_;  // flattened view over nets_, construction order
};

}  // namespace storm
