#include "storm/optim.hpp"

namespace storm {

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer: " + s);
}

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::Sgd ? "sgd" : "adam";
}

void Optimizer::apply(std::vector<graph::Tensor>& params,
                      const std::vector<std::vector<double>>& grads, double lr_factor) {
  if (params.size() != grads.size())
    throw std::invalid_argument("optimizer: parameter/gradient count mismatch");
  const double lr = lr_ * lr_factor;
  if (kind_ == OptimizerKind::Sgd) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k].mutable_values();
      const auto& g = grads[k];
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
    return;
  }
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k].assign(params[k].values().size(), 0.0);
      v_[k].assign(params[k].values().size(), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k].mutable_values();
    const auto& g = grads[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = adam_.beta1 * m[i] + (1.0 - adam_.beta1) * g[i];
      v[i] = adam_.beta2 * v[i] + (1.0 - adam_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + adam_.eps);
    }
  }
}

}  // namespace storm
