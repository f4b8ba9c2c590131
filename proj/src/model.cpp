#include "storm/model.hpp"

#include <cmath>
#include <stdexcept>

namespace storm {

using graph::Shape;
using graph::Tensor;

namespace {

std::vector<double> uniform_fan_in(int fan_in, int count, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(static_cast<std::size_t>(count));
  for (auto& x : v) x = (rng.uniform() * 2.0 - 1.0) * bound;
  return v;
}

}  // namespace

Classifier::Classifier(const ModelConfig& cfg, RngStream& init_rng) : cfg_(cfg) {
  if (cfg.input_dim <= 0) throw std::invalid_argument("model: input_dim must be positive");
  if (cfg.num_classes < 2) throw std::invalid_argument("model: need at least 2 classes");
  if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0)
    throw std::invalid_argument("model: dropout rate must be in [0,1)");

  auto make_linear = [&](const std::string& prefix, int in, int out) {
    std::vector<double> w = cfg.init == InitKind::Zeros
                                ? std::vector<double>(static_cast<std::size_t>(in) * out, 0.0)
                                : uniform_fan_in(in, in * out, init_rng);
    params_.push_back({prefix + ".weight", Tensor::leaf(Shape::mat(in, out), std::move(w))});
    params_.push_back({prefix + ".bias", Tensor::leaf(Shape::vec(out), std::vector<double>(out, 0.0))});
  };

  int head_in = cfg.input_dim;
  if (cfg.encoder == EncoderKind::LinearEncoder) {
    make_linear("enc", cfg.input_dim, cfg.encoder_width);
    head_in = cfg.encoder_width;
  }
  if (cfg.head_hidden > 0) {
    make_linear("head.l1", head_in, cfg.head_hidden);
    make_linear("head.l2", cfg.head_hidden, cfg.num_classes);
  } else {
    make_linear("head", head_in, cfg.num_classes);
  }
}

std::vector<Tensor> Classifier::param_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.t);
  return out;
}

graph::Tensor Classifier::forward(const Batch& batch, bool dropout_on, RngStream* rng) const {
  return forward_with(param_tensors(), batch, dropout_on, rng);
}

graph::Tensor Classifier::forward_with(const std::vector<Tensor>& theta, const Batch& batch,
                                       bool dropout_on, RngStream* rng) const {
  if (batch.size() == 0) throw std::invalid_argument("forward: empty batch");
  if (batch.features.shape().cols != cfg_.input_dim)
    throw std::invalid_argument("forward: feature dimension mismatch");
  if (theta.size() != params_.size())
    throw std::invalid_argument("forward: parameter count mismatch");
  const bool drop = dropout_on && cfg_.dropout_rate > 0.0;
  if (drop && rng == nullptr) throw std::invalid_argument("forward: dropout requires an rng stream");

  const int B = batch.size();
  std::size_t k = 0;
  Tensor h = batch.features;
  if (cfg_.encoder == EncoderKind::LinearEncoder) {
    Tensor w = theta[k++], b = theta[k++];
    h = graph::relu(graph::add(graph::matmul(h, w), graph::bcast_rows(b, B)));
  }
  if (drop) h = graph::dropout(h, cfg_.dropout_rate, *rng);
  if (cfg_.head_hidden > 0) {
    Tensor w1 = theta[k++], b1 = theta[k++];
    h = graph::relu(graph::add(graph::matmul(h, w1), graph::bcast_rows(b1, B)));
    Tensor w2 = theta[k++], b2 = theta[k++];
    h = graph::add(graph::matmul(h, w2), graph::bcast_rows(b2, B));
  } else {
    Tensor w = theta[k++], b = theta[k++];
    h = graph::add(graph::matmul(h, w), graph::bcast_rows(b, B));
  }
  return graph::softmax_rows(h);
}

std::vector<int> Classifier::predict(const Batch& batch) const {
  graph::NoGradGuard ng;
  return argmax_rows(forward(batch, /*dropout_on=*/false, nullptr));
}

std::vector<std::vector<double>> Classifier::snapshot_values() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.t.values());
  return out;
}

void Classifier::restore_values(const std::vector<std::vector<double>>& values) {
  if (values.size() != params_.size())
    throw std::invalid_argument("restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) params_[i].t.mutable_values() = values[i];
}

graph::Tensor per_sample_loss(const graph::Tensor& probs, const std::vector<int>& labels) {
  const int C = probs.shape().cols;
  for (int y : labels) {
    if (y < 0 || y >= C) throw std::invalid_argument("per_sample_loss: label out of range");
  }
  Tensor picked = graph::gather_cols(probs, labels);
  return graph::neg(graph::log(graph::clamp_min(picked, 1e-12)));
}

std::vector<int> argmax_rows(const graph::Tensor& probs) {
  const int r = probs.shape().rows, c = probs.shape().cols;
  std::vector<int> out(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    int best = 0;
    double bv = probs.at(i, 0);
    for (int j = 1; j < c; ++j) {
      const double v = probs.at(i, j);
      if (v > bv) {
        bv = v;
        best = j;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace storm
