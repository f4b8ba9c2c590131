#include "storm/rescaler.hpp"

#include <cmath>
#include <stdexcept>

namespace storm {

using graph::Shape;
using graph::Tensor;

Rescaler::Rescaler(const RescalerConfig& cfg, RngStream& init_rng) : cfg_(cfg) {
  if (cfg.hidden_width < 1) throw std::invalid_argument("rescaler: hidden_width must be >= 1");
  if (cfg.input_dim < 1) throw std::invalid_argument("rescaler: input_dim must be >= 1");
  if (cfg.binary_threshold <= 0.0 || cfg.binary_threshold >= 1.0)
    throw std::invalid_argument("rescaler: binary threshold must be in (0,1)");
  const int nets = cfg.class_separation ? cfg.num_classes : 1;
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.input_dim));
  for (int c = 0; c < nets; ++c) {
    ClassNet net;
    std::vector<double> w1(static_cast<std::size_t>(cfg.input_dim) * cfg.hidden_width);
    for (auto& x : w1) x = (init_rng.uniform() * 2.0 - 1.0) * bound;
    net.l1_w = Tensor::leaf(Shape::mat(cfg.input_dim, cfg.hidden_width), std::move(w1));
    net.l1_b = Tensor::leaf(Shape::vec(cfg.hidden_width),
                            std::vector<double>(static_cast<std::size_t>(cfg.hidden_width), 0.0));
    net.bn1_g = Tensor::leaf(Shape::vec(cfg.hidden_width),
                             std::vector<double>(static_cast<std::size_t>(cfg.hidden_width), 1.0));
    net.bn1_b = Tensor::leaf(Shape::vec(cfg.hidden_width),
                             std::vector<double>(static_cast<std::size_t>(cfg.hidden_width), 0.0));
    // Zero second layer: every sample maps to identical logits, so the
    // softmax yields exactly 0.5 for any input batch at step 0.
    net.l2_w = Tensor::leaf(Shape::mat(cfg.hidden_width, 2),
                            std::vector<double>(static_cast<std::size_t>(cfg.hidden_width) * 2, 0.0));
    net.l2_b = Tensor::leaf(Shape::vec(2), {0.0, 0.0});
    net.bn2_g = Tensor::leaf(Shape::vec(2), {1.0, 1.0});
    net.bn2_b = Tensor::leaf(Shape::vec(2), {0.0, 0.0});
    const std::string prefix = "omega.class" + std::to_string(c);
    params_.push_back({prefix + ".l1.weight", net.l1_w});
    params_.push_back({prefix + ".l1.bias", net.l1_b});
    params_.push_back({prefix + ".bn1.gamma", net.bn1_g});
    params_.push_back({prefix + ".bn1.beta", net.bn1_b});
    params_.push_back({prefix + ".l2.weight", net.l2_w});
    params_.push_back({prefix + ".l2.bias", net.l2_b});
    params_.push_back({prefix + ".bn2.gamma", net.bn2_g});
    params_.push_back({prefix + ".bn2.beta", net.bn2_b});
    nets_.push_back(std::move(net));
  }
}

std::vector<Tensor> Rescaler::param_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.t);
  return out;
}

graph::Tensor Rescaler::class_weights(const ClassNet& net, const Tensor& f,
                                      bool training_mode) const {
  const int n = f.shape().rows;
  auto bn = [&](const Tensor& x, const Tensor& g, const Tensor& b) {
    // Batch statistics are undefined for a single sample; fall back to the
    // affine part alone.
    if (!training_mode || n == 1)
      return graph::add(graph::mul(x, graph::bcast_rows(g, n)), graph::bcast_rows(b, n));
    return graph::batchnorm_cols(x, g, b, cfg_.bn_eps);
  };
  Tensor h = graph::add(graph::matmul(f, net.l1_w), graph::bcast_rows(net.l1_b, n));
  h = graph::relu(bn(h, net.bn1_g, net.bn1_b));
  Tensor z = graph::add(graph::matmul(h, net.l2_w), graph::bcast_rows(net.l2_b, n));
  z = bn(z, net.bn2_g, net.bn2_b);
  Tensor w0 = graph::select_col(graph::softmax_rows(z), 0);
  if (cfg_.binary_mode) {
    // Hard 0/1 in the forward value; gradients flow through the continuous w0.
    std::vector<double> hard(w0.values().size());
    for (std::size_t i = 0; i < hard.size(); ++i)
      hard[i] = w0.values()[i] > cfg_.binary_threshold ? 1.0 : 0.0;
    Tensor hard_t = Tensor::constant(w0.shape(), std::move(hard));
    w0 = graph::add(graph::sub(hard_t, graph::detach(w0)), w0);
  }
  return w0;
}

graph::Tensor Rescaler::weights(const std::vector<std::vector<double>>& features,
                                const std::vector<int>& classes, bool training_mode) const {
  if (features.size() != classes.size())
    throw std::invalid_argument("rescaler: feature/class count mismatch");
  if (features.empty()) throw std::invalid_argument("rescaler: empty batch");
  const int B = static_cast<int>(features.size());
  for (const auto& f : features) {
    if (static_cast<int>(f.size()) != cfg_.input_dim)
      throw std::invalid_argument("rescaler: feature dimension != " +
                                  std::to_string(cfg_.input_dim));
  }

  // Group sample indices by class slot, keeping batch order within groups.
  const int slots = static_cast<int>(nets_.size());
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(slots));
  for (int i = 0; i < B; ++i) {
    const int c = cfg_.class_separation ? classes[static_cast<std::size_t>(i)] : 0;
    if (c < 0 || c >= slots) throw std::invalid_argument("rescaler: class index out of range");
    groups[static_cast<std::size_t>(c)].push_back(i);
  }

  Tensor assembled;
  for (int c = 0; c < slots; ++c) {
    const auto& idx = groups[static_cast<std::size_t>(c)];
    if (idx.empty()) continue;
    std::vector<double> flat;
    flat.reserve(idx.size() * static_cast<std::size_t>(cfg_.input_dim));
    for (int i : idx) {
      const auto& f = features[static_cast<std::size_t>(i)];
      flat.insert(flat.end(), f.begin(), f.end());
    }
    Tensor fmat = Tensor::constant(Shape::mat(static_cast<int>(idx.size()), cfg_.input_dim),
                                   std::move(flat));
    Tensor w = class_weights(nets_[static_cast<std::size_t>(c)], fmat, training_mode);
    Tensor placed = graph::scatter_vec(w, idx, B);
    assembled = assembled.defined() ? graph::add(assembled, placed) : placed;
  }
  return assembled;
}

std::vector<std::vector<double>> Rescaler::snapshot_values() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.t.values());
  return out;
}

void Rescaler::restore_values(const std::vector<std::vector<double>>& values) {
  if (values.size() != params_.size())
    throw std::invalid_argument("rescaler restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) params_[i].t.mutable_values() = values[i];
}

}  // namespace storm
