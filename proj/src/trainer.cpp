#include "storm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace storm {

using graph::Shape;
using graph::Tensor;

Mode mode_from_string(const std::string& s) {
  if (s == "none") return Mode::None;
  if (s == "storm") return Mode::Storm;
  if (s == "agra") return Mode::Agra;
  throw std::invalid_argument("unknown mode: " + s);
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::None: return "none";
    case Mode::Storm: return "storm";
    case Mode::Agra: return "agra";
  }
  return "?";
}

HeadlineMetric headline_from_string(const std::string& s) {
  if (s == "accuracy") return HeadlineMetric::Accuracy;
  if (s == "f1") return HeadlineMetric::F1;
  if (s == "mcc") return HeadlineMetric::Mcc;
  throw std::invalid_argument("unknown metric: " + s);
}

std::string to_string(HeadlineMetric m) {
  switch (m) {
    case HeadlineMetric::Accuracy: return "accuracy";
    case HeadlineMetric::F1: return "f1";
    case HeadlineMetric::Mcc: return "mcc";
  }
  return "?";
}

void TrainerConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (inner_loop_count < 1 || inner_loop_count > 4)
    throw std::invalid_argument("inner_loop_count must be in [1, 4]");
  if (forward_passes < 1) throw std::invalid_argument("forward_passes (G) must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("dropout rate must be in [0,1)");
  if (mode == Mode::Storm && use_meta_learning && !freeze_omega && rescale_meta_loss &&
      !use_meta_grad && !use_outer_grad)
    throw std::invalid_argument("storm with meta learning needs use_meta_grad or use_outer_grad");
  if (weight_scale <= 0.0) throw std::invalid_argument("weight_scale must be positive");
}

// ---------------------------------------------------------------------------
// inner / outer steps

namespace {

std::vector<std::vector<double>> detach_all(const std::vector<Tensor>& ts) {
  std::vector<std::vector<double>> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(t.values());
  return out;
}

}  // namespace

UnrollResult unroll_inner(const Classifier& model, const Rescaler* rescaler,
                          const std::vector<Batch>& batches, const FeatureFn& features,
                          const TrainerConfig& cfg, RngStream* model_rng, bool create_graph) {
  if (batches.empty()) throw std::invalid_argument("unroll_inner: no batches");
  UnrollResult out;
  std::vector<Tensor> theta = model.param_tensors();
  for (const Batch& batch : batches) {
    const int B = batch.size();
    Tensor w;
    if (cfg.mode == Mode::Storm) {
      if (rescaler == nullptr || !features)
        throw std::invalid_argument("unroll_inner: storm mode needs a rescaler and features");
      w = rescaler->weights(features(theta, batch), batch.labels, /*training_mode=*/true);
    } else {
      w = Tensor::full(Shape::vec(B), 1.0);
    }
    if (cfg.weight_scale != 1.0) w = graph::scale(w, cfg.weight_scale);

    Tensor probs = model.forward_with(theta, batch, /*dropout_on=*/true, model_rng);
    Tensor losses = per_sample_loss(probs, batch.labels);
    Tensor weighted = graph::mean(graph::mul(w, losses));

    std::vector<Tensor> grads =
        graph::backward(weighted, theta, {.create_graph = create_graph, .allow_unused = false});

    std::vector<Tensor> next;
    next.reserve(theta.size());
    for (std::size_t k = 0; k < theta.size(); ++k)
      next.push_back(graph::sub(theta[k], graph::scale(grads[k], cfg.inner_lr)));

    out.step_grads.push_back(detach_all(grads));
    out.step_weights.push_back(w.values());
    out.step_losses.push_back(losses.values());
    out.weighted_loss = weighted;
    out.last_loss = weighted.item();
    theta = std::move(next);
  }
  out.theta_star = std::move(theta);
  return out;
}

OuterResult outer_step(const Classifier& model, const Rescaler& rescaler,
                       const std::vector<graph::Tensor>& theta_star, const Batch& val_batch,
                       const std::vector<std::vector<double>>& val_features,
                       const TrainerConfig& cfg, RngStream* meta_rng) {
  OuterResult out;
  std::vector<Tensor> omega = rescaler.param_tensors();

  Tensor probs = model.forward_with(theta_star, val_batch, /*dropout_on=*/true, meta_rng);
  Tensor losses = per_sample_loss(probs, val_batch.labels);

  Tensor meta_loss;
  if (!cfg.rescale_meta_loss) {
    meta_loss = graph::mean(cfg.use_meta_grad ? losses : graph::detach(losses));
  } else {
    Tensor w = rescaler.weights(val_features, val_batch.labels, /*training_mode=*/true);
    if (cfg.weight_scale != 1.0) w = graph::scale(w, cfg.weight_scale);
    Tensor wterm = cfg.use_outer_grad ? w : graph::detach(w);
    Tensor lterm = cfg.use_meta_grad ? losses : graph::detach(losses);
    meta_loss = graph::mean(graph::mul(wterm, lterm));
  }
  out.meta_loss = meta_loss.item();

  if (!meta_loss.requires_grad()) {
    // No enabled gradient route: omega stays untouched.
    out.omega_grads.resize(omega.size());
    for (std::size_t k = 0; k < omega.size(); ++k)
      out.omega_grads[k].assign(omega[k].values().size(), 0.0);
    return out;
  }

  std::vector<Tensor> grads =
      graph::backward(meta_loss, omega, {.create_graph = false, .allow_unused = true});
  out.omega_grads = detach_all(grads);
  return out;
}

// ---------------------------------------------------------------------------
// AGRA

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> flatten(const std::vector<Tensor>& ts) {
  std::vector<double> out;
  for (const auto& t : ts) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

}  // namespace

AgraStepResult agra_step(Classifier& model, Optimizer& theta_opt, const Batch& batch,
                         const TrainView& pool, const TrainerConfig& cfg, RngStream& model_rng,
                         RngStream& agra_rng, double lr_factor) {
  AgraStepResult result;
  const int B = batch.size();

  // Gradient comparison over the classification-head parameters only.
  std::vector<Tensor> head;
  for (const auto& p : model.params())
    if (p.name.rfind("head", 0) == 0) head.push_back(p.t);

  // Aggregated gradient of a freshly sampled comparison batch.
  std::vector<int> comp_rows(static_cast<std::size_t>(cfg.batch_size));
  for (auto& r : comp_rows) r = agra_rng.uniform_int(pool.size());
  Batch comp = make_batch(pool, comp_rows);
  Tensor comp_probs = model.forward(comp, /*dropout_on=*/true, &model_rng);
  Tensor comp_loss = graph::mean(per_sample_loss(comp_probs, comp.labels));
  std::vector<double> agg = flatten(graph::backward(comp_loss, head));
  const double agg_norm = std::sqrt(dot(agg, agg));

  // Per-sample gradients from one shared training-batch graph.
  Tensor probs = model.forward(batch, /*dropout_on=*/true, &model_rng);
  Tensor losses = per_sample_loss(probs, batch.labels);
  result.losses = losses.values();
  result.similarities.resize(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i) {
    Tensor li = graph::reshape(graph::gather_vec(losses, {i}), Shape::scalar());
    std::vector<double> gi = flatten(graph::backward(li, head));
    const double ni = std::sqrt(dot(gi, gi));
    result.similarities[static_cast<std::size_t>(i)] =
        (ni == 0.0 || agg_norm == 0.0) ? 0.0 : dot(gi, agg) / (ni * agg_norm);
  }

  for (int i = 0; i < B; ++i) {
    const double sim = result.similarities[static_cast<std::size_t>(i)];
    const bool keep = cfg.agra_keep_nonpositive ? sim <= 0.0 : sim > 0.0;
    if (keep) result.kept_rows.push_back(i);
  }
  if (result.kept_rows.empty()) return result;  // every sample filtered: skip

  Tensor loss = graph::mean(graph::gather_vec(losses, result.kept_rows));
  std::vector<Tensor> params = model.param_tensors();
  std::vector<Tensor> grads = graph::backward(loss, params, {.allow_unused = true});
  theta_opt.apply(params, detach_all(grads), lr_factor);
  result.stepped = true;
  return result;
}

// ---------------------------------------------------------------------------
// MetaTrainer

MetaTrainer::MetaTrainer(const TrainView& train, const TrainView& val_eval, TrainerConfig cfg)
    : train_(train), val_eval_(val_eval), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (train_.size() == 0) throw std::invalid_argument("trainer: empty training set");
  if (cfg_.clean_validation_source && val_eval_.size() == 0)
    throw std::invalid_argument("clean_validation_source requires a validation split");

  fcfg_.forward_passes = cfg_.forward_passes;
  fcfg_.loss_only = cfg_.loss_only_features;
  fcfg_.group_stats_batch_only = cfg_.group_stats_batch_only;
  fcfg_.dropout_rate = cfg_.dropout_rate;

  ModelConfig mc;
  mc.input_dim = train_.feature_dim;
  mc.num_classes = train_.num_classes;
  mc.encoder = cfg_.encoder;
  mc.encoder_width = cfg_.encoder_width;
  mc.head_hidden = cfg_.head_hidden;
  mc.dropout_rate = cfg_.dropout_rate;
  RngStream theta_init = RngStream::fork(cfg_.seed, "theta-init");
  model_ = std::make_unique<Classifier>(mc, theta_init);

  if (cfg_.mode == Mode::Storm) {
    RescalerConfig rc;
    rc.input_dim = feature_dim(fcfg_);
    rc.hidden_width = cfg_.rescaler_hidden;
    rc.num_classes = train_.num_classes;
    rc.class_separation = cfg_.class_separation;
    rc.binary_mode = cfg_.binary_mode;
    rc.binary_threshold = cfg_.binary_threshold;
    RngStream omega_init = RngStream::fork(cfg_.seed, "omega-init");
    rescaler_ = std::make_unique<Rescaler>(rc, omega_init);
    const int m_size = cfg_.memory_size > 0 ? cfg_.memory_size : cfg_.batch_size;
    memories_ = std::make_unique<MemoryBank>(train_.num_classes, m_size, cfg_.class_separation);
  }
}

std::vector<int> predict_view(const Classifier& model, const TrainView& view) {
  std::vector<int> preds;
  std::vector<double> conf;
  predict_with_confidence(model, view, preds, conf);
  return preds;
}

void predict_with_confidence(const Classifier& model, const TrainView& view,
                             std::vector<int>& predictions, std::vector<double>& confidence) {
  predictions.clear();
  confidence.clear();
  graph::NoGradGuard ng;
  const int chunk = 256;
  for (int start = 0; start < view.size(); start += chunk) {
    std::vector<int> rows;
    for (int i = start; i < std::min(view.size(), start + chunk); ++i) rows.push_back(i);
    Batch b = make_batch(view, rows);
    Tensor probs = model.forward(b, /*dropout_on=*/false, nullptr);
    std::vector<int> preds = argmax_rows(probs);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      predictions.push_back(preds[i]);
      confidence.push_back(probs.at(static_cast<int>(i), preds[i]));
    }
  }
}

metrics::ClassificationMetrics MetaTrainer::evaluate(const TrainView& view) const {
  std::vector<int> preds = predict_view(*model_, view);
  std::vector<int> labels;
  labels.reserve(view.samples.size());
  for (const auto& s : view.samples) labels.push_back(s.label);
  return metrics::classification_metrics(preds, labels, cfg_.positive_class);
}

double MetaTrainer::headline_value(const metrics::ClassificationMetrics& m) const {
  switch (cfg_.headline) {
    case HeadlineMetric::Accuracy: return m.accuracy;
    case HeadlineMetric::F1: return m.f1;
    case HeadlineMetric::Mcc: return m.matthews;
  }
  return m.accuracy;
}

TrainResult MetaTrainer::train() {
  TrainResult result;
  RngStream data_rng = RngStream::fork(cfg_.seed, "data-order");
  RngStream model_rng = RngStream::fork(cfg_.seed, "model-dropout");
  RngStream feature_rng = RngStream::fork(cfg_.seed, "feature-passes");
  RngStream meta_rng = RngStream::fork(cfg_.seed, "meta");
  RngStream agra_rng = RngStream::fork(cfg_.seed, "agra");

  Optimizer theta_opt(cfg_.theta_optimizer, cfg_.theta_lr);
  Optimizer omega_opt(cfg_.omega_optimizer, cfg_.omega_lr);

  const TrainView& meta_pool = cfg_.clean_validation_source ? val_eval_ : train_;

  const int n = train_.size();
  const int steps_per_epoch = (n + cfg_.batch_size - 1) / cfg_.batch_size;
  const int total_steps = steps_per_epoch * cfg_.max_epochs;
  const int warmup_steps =
      std::max(1, static_cast<int>(cfg_.warmup_frac * static_cast<double>(total_steps)));
  auto lr_factor = [&](int step) {
    if (cfg_.lr_schedule == LrSchedule::Constant) return 1.0;
    return std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup_steps));
  };

  const bool storm_mode = cfg_.mode == Mode::Storm;
  const bool omega_meta = storm_mode && !cfg_.freeze_omega && cfg_.use_meta_learning;
  const bool omega_direct = storm_mode && !cfg_.freeze_omega && !cfg_.use_meta_learning;
  const bool needs_unroll_graph = omega_meta && cfg_.use_meta_grad;

  FeatureFn live_features = [&](const std::vector<Tensor>& theta, const Batch& batch) {
    std::vector<SampleStats> stats =
        stochastic_passes(*model_, theta, batch, cfg_.forward_passes, feature_rng);
    return batch_features(stats, *memories_, fcfg_);
  };

  result.best_val_metric = -std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;
  int step = 0;

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    data_rng.shuffle(order);

    std::size_t cursor = 0;
    try {
      while (cursor < order.size()) {
        std::vector<Batch> batches;
        const int traversals = cfg_.mode == Mode::Storm ? cfg_.inner_loop_count : 1;
        for (int t = 0; t < traversals && cursor < order.size(); ++t) {
          std::vector<int> rows;
          for (int b = 0; b < cfg_.batch_size && cursor < order.size(); ++b)
            rows.push_back(order[cursor++]);
          batches.push_back(make_batch(train_, rows));
        }

        if (cfg_.mode == Mode::Agra) {
          AgraStepResult r = agra_step(*model_, theta_opt, batches[0], train_, cfg_, model_rng,
                                       agra_rng, lr_factor(step));
          for (int i = 0; i < batches[0].size(); ++i) {
            const bool kept =
                std::find(r.kept_rows.begin(), r.kept_rows.end(), i) != r.kept_rows.end();
            log.sample_ids.push_back(batches[0].ids[static_cast<std::size_t>(i)]);
            log.weights.push_back(kept ? 1.0 : 0.0);
            log.losses.push_back(r.losses[static_cast<std::size_t>(i)]);
          }
          if (step_probe) step_probe(step);
          ++step;
          continue;
        }

        UnrollResult unrolled =
            unroll_inner(*model_, rescaler_.get(), batches,
                         cfg_.mode == Mode::Storm ? live_features : FeatureFn{}, cfg_,
                         &model_rng, needs_unroll_graph);
        if (!std::isfinite(unrolled.last_loss))
          throw graph::GraphError("non-finite training loss");

        for (std::size_t t = 0; t < batches.size(); ++t) {
          for (int i = 0; i < batches[t].size(); ++i) {
            log.sample_ids.push_back(batches[t].ids[static_cast<std::size_t>(i)]);
            log.weights.push_back(unrolled.step_weights[t][static_cast<std::size_t>(i)]);
            log.losses.push_back(unrolled.step_losses[t][static_cast<std::size_t>(i)]);
          }
        }

        if (omega_meta) {
          // Meta-validation batch, uniform with replacement.
          std::vector<int> val_rows(static_cast<std::size_t>(cfg_.batch_size));
          for (auto& r : val_rows) r = meta_rng.uniform_int(meta_pool.size());
          Batch val_batch = make_batch(meta_pool, val_rows);
          std::vector<SampleStats> val_stats = stochastic_passes(
              *model_, unrolled.theta_star, val_batch, cfg_.forward_passes, meta_rng);
          std::vector<std::vector<double>> val_features =
              batch_features(val_stats, *memories_, fcfg_);
          OuterResult outer = outer_step(*model_, *rescaler_, unrolled.theta_star, val_batch,
                                         val_features, cfg_, &meta_rng);
          std::vector<Tensor> omega = rescaler_->param_tensors();
          omega_opt.apply(omega, outer.omega_grads);
        } else if (omega_direct) {
          // First-order rescaler update on the current batch's rescaled
          // loss; the losses carry no omega dependence, so this is the
          // plain greedy descent direction.
          std::vector<Tensor> omega = rescaler_->param_tensors();
          std::vector<Tensor> grads = graph::backward(
              unrolled.weighted_loss, omega, {.create_graph = false, .allow_unused = true});
          omega_opt.apply(omega, detach_all(grads));
        }

        // Commit the theta update; the unrolled graph is dropped with scope.
        std::vector<Tensor> params = model_->param_tensors();
        for (const auto& g : unrolled.step_grads) theta_opt.apply(params, g, lr_factor(step));
        if (step_probe) step_probe(step);
        ++step;
      }
    } catch (const graph::GraphError& e) {
      result.diverged = true;
      result.divergence_info =
          "step " + std::to_string(step) + " epoch " + std::to_string(epoch) + ": " + e.what();
    }

    if (!log.weights.empty()) {
      double s = 0.0;
      for (double w : log.weights) s += w;
      log.mean_weight = s / static_cast<double>(log.weights.size());
    }

    // End-of-epoch training-set snapshot for calibration analyses.
    {
      std::vector<int> preds;
      std::vector<double> conf;
      predict_with_confidence(*model_, train_, preds, conf);
      log.calib_ids.reserve(train_.samples.size());
      for (const auto& s : train_.samples) log.calib_ids.push_back(s.id);
      log.predicted = std::move(preds);
      log.confidence = std::move(conf);
    }

    if (val_eval_.size() > 0) {
      log.val = evaluate(val_eval_);
      log.val_metric = headline_value(log.val);
    }
    result.epochs.push_back(std::move(log));
    if (result.diverged) break;

    const double metric = result.epochs.back().val_metric;
    if (val_eval_.size() > 0 && metric > result.best_val_metric) {
      result.best_val_metric = metric;
      result.best_epoch = epoch;
      result.best_theta = model_->snapshot_values();
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (val_eval_.size() > 0 && epochs_since_best >= cfg_.patience) break;
    }
  }

  result.steps_run = step;
  result.final_theta = model_->snapshot_values();
  if (rescaler_) result.final_omega = rescaler_->snapshot_values();
  if (result.best_theta.empty()) {
    result.best_theta = result.final_theta;
    result.best_epoch = static_cast<int>(result.epochs.size());
  }
  return result;
}

}  // namespace storm
