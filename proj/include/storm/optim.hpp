#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "storm/graph.hpp"

namespace storm {

enum class OptimizerKind { Sgd, Adam };

OptimizerKind optimizer_kind_from_string(const std::string& s);
std::string to_string(OptimizerKind k);

struct AdamConfig {
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
};

// First-order optimizer over a fixed list of leaf tensors. Updates mutate the
// leaf values in place; callers must only apply updates after all backward
// passes that reference the previous values have completed.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, AdamConfig adam = {})
      : kind_(kind), lr_(lr), adam_(adam) {}

  // lr multiplier for schedules; 1.0 = configured rate.
  void apply(std::vector<graph::Tensor>& params,
             const std::vector<std::vector<double>>& grads, double lr_factor = 1.0);

  OptimizerKind kind() const { return kind_; }
  double lr() const { return lr_; }

 private:
  OptimizerKind kind_;
  double lr_;
  AdamConfig adam_;
  std::int64_t t_{0};
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace storm
