#include "storm/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace storm {

namespace {

constexpr double kStdFloor = 1e-6;

struct MeanStd {
  double mean{0.0};
  double std{0.0};
};

// Population statistics (divisor n), defined for n = 1.
MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  double s = 0.0;
  for (double x : v) s += x;
  r.mean = s / static_cast<double>(v.size());
  double q = 0.0;
  for (double x : v) q += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(q / static_cast<double>(v.size()));
  return r;
}

}  // namespace

MemoryBank::MemoryBank(int num_classes, int capacity, bool class_separation)
    : class_separation_(class_separation) {
  const int slots = class_separation ? num_classes : 1;
  memories_.reserve(static_cast<std::size_t>(slots));
  for (int i = 0; i < slots; ++i) memories_.emplace_back(capacity);
}

void MemoryBank::push(const SampleStats& s) {
  memories_[class_separation_ ? static_cast<std::size_t>(s.label) : 0].push(s);
}

const ClassMemory& MemoryBank::memory_for_class(int c) const {
  return memories_[class_separation_ ? static_cast<std::size_t>(c) : 0];
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double kl_normal(double m1, double s1, double m2, double s2) {
  s1 = std::max(s1, kStdFloor);
  s2 = std::max(s2, kStdFloor);
  const double kl =
      std::log(s2 / s1) + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5;
  return std::max(kl, 0.0);
}

double ovl_normal(double m1, double s1, double m2, double s2) {
  s1 = std::max(s1, kStdFloor);
  s2 = std::max(s2, kStdFloor);
  if (m1 == m2 && s1 == s2) return 1.0;

  auto log_pdf = [](double x, double m, double s) {
    const double z = (x - m) / s;
    return -0.5 * z * z - std::log(s);
  };

  // Intersection points of the two densities from equating log-densities:
  // quadratic a x^2 + b x + c = 0.
  std::vector<double> roots;
  const double a = 0.5 / (s2 * s2) - 0.5 / (s1 * s1);
  const double b = m1 / (s1 * s1) - m2 / (s2 * s2);
  const double c =
      m2 * m2 / (2.0 * s2 * s2) - m1 * m1 / (2.0 * s1 * s1) + std::log(s2 / s1);
  if (std::abs(s1 - s2) < 1e-12) {
    if (std::abs(b) > 0.0) roots.push_back(-c / b);
  } else {
    const double disc = b * b - 4.0 * a * c;
    if (disc > 0.0) {
      const double sq = std::sqrt(disc);
      roots.push_back((-b - sq) / (2.0 * a));
      roots.push_back((-b + sq) / (2.0 * a));
      if (roots[0] > roots[1]) std::swap(roots[0], roots[1]);
    } else if (disc == 0.0) {
      roots.push_back(-b / (2.0 * a));
    }
  }

  // Sum the CDF mass of whichever density is smaller on each interval.
  double total = 0.0;
  double lo = -std::numeric_limits<double>::infinity();
  auto cdf = [](double x, double m, double s) {
    if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
    return normal_cdf((x - m) / s);
  };
  for (std::size_t i = 0; i <= roots.size(); ++i) {
    const double hi = i < roots.size() ? roots[i] : std::numeric_limits<double>::infinity();
    if (hi <= lo) continue;
    double mid;
    if (std::isinf(lo) && std::isinf(hi))
      mid = 0.5 * (m1 + m2);
    else if (std::isinf(lo))
      mid = hi - 1.0;
    else if (std::isinf(hi))
      mid = lo + 1.0;
    else
      mid = 0.5 * (lo + hi);
    const bool first_smaller = log_pdf(mid, m1, s1) <= log_pdf(mid, m2, s2);
    const double m = first_smaller ? m1 : m2;
    const double s = first_smaller ? s1 : s2;
    total += cdf(hi, m, s) - cdf(lo, m, s);
    lo = hi;
  }
  return std::clamp(total, 0.0, 1.0);
}

int feature_dim(const FeatureConfig& cfg) { return cfg.loss_only ? 1 : kFullFeatureDim; }

std::vector<SampleStats> stochastic_passes(const Classifier& model,
                                           const std::vector<graph::Tensor>& theta,
                                           const Batch& batch, int G, RngStream& rng) {
  if (G < 1) throw std::invalid_argument("stochastic_passes: G must be >= 1");
  graph::NoGradGuard ng;
  const int B = batch.size();
  std::vector<std::vector<double>> losses(static_cast<std::size_t>(B));
  std::vector<std::vector<double>> probs(static_cast<std::size_t>(B));
  for (int g = 0; g < G; ++g) {
    graph::Tensor p = model.forward_with(theta, batch, /*dropout_on=*/true, &rng);
    for (int i = 0; i < B; ++i) {
      const double pi = std::max(p.at(i, batch.labels[static_cast<std::size_t>(i)]), 1e-12);
      probs[static_cast<std::size_t>(i)].push_back(pi);
      losses[static_cast<std::size_t>(i)].push_back(-std::log(pi));
    }
  }
  graph::Tensor clean = model.forward_with(theta, batch, /*dropout_on=*/false, nullptr);
  std::vector<int> preds = argmax_rows(clean);

  std::vector<SampleStats> out(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i) {
    auto& s = out[static_cast<std::size_t>(i)];
    const MeanStd lm = mean_std(losses[static_cast<std::size_t>(i)]);
    const MeanStd pm = mean_std(probs[static_cast<std::size_t>(i)]);
    s.loss_mean = lm.mean;
    s.loss_std = lm.std;
    s.prob_mean = pm.mean;
    s.prob_std = pm.std;
    s.predicted = preds[static_cast<std::size_t>(i)];
    s.label = batch.labels[static_cast<std::size_t>(i)];
  }
  return out;
}

std::vector<double> compute_features(const SampleStats& stats, const ClassMemory& memory,
                                     const FeatureConfig& cfg) {
  if (cfg.loss_only) return {stats.loss_mean};
  if (memory.size() == 0) throw std::invalid_argument("compute_features: empty class memory");

  std::vector<double> lm, ls, pm, ps;
  lm.reserve(memory.entries().size());
  for (const auto& e : memory.entries()) {
    lm.push_back(e.loss_mean);
    ls.push_back(e.loss_std);
    pm.push_back(e.prob_mean);
    ps.push_back(e.prob_std);
  }
  const MeanStd g_lm = mean_std(lm);  // mean/std of per-sample loss means
  const MeanStd g_ls = mean_std(ls);  // mean/std of per-sample loss stds
  const MeanStd g_pm = mean_std(pm);
  const MeanStd g_ps = mean_std(ps);

  // Group reference distribution: N(mean of means, mean of stds).
  const double kl_i = kl_normal(stats.loss_mean, stats.loss_std, g_lm.mean, g_ls.mean);
  const double ovl_i = ovl_normal(stats.loss_mean, stats.loss_std, g_lm.mean, g_ls.mean);

  std::vector<double> kls, ovls;
  kls.reserve(lm.size());
  for (std::size_t i = 0; i < lm.size(); ++i) {
    kls.push_back(kl_normal(lm[i], ls[i], g_lm.mean, g_ls.mean));
    ovls.push_back(ovl_normal(lm[i], ls[i], g_lm.mean, g_ls.mean));
  }
  const MeanStd g_kl = mean_std(kls);
  const MeanStd g_ovl = mean_std(ovls);

  const double cat = stats.predicted == stats.label ? 1.0 : 0.0;

  return {stats.loss_mean, g_lm.mean, g_ls.mean, stats.loss_std, g_lm.std, g_ls.std,
          stats.prob_mean, g_pm.mean, g_ps.mean, stats.prob_std, g_pm.std, g_ps.std,
          kl_i,            g_kl.mean, g_kl.std,  ovl_i,          g_ovl.mean, g_ovl.std,
          cat};
}

std::vector<std::vector<double>> batch_features(const std::vector<SampleStats>& stats,
                                                MemoryBank& memories, const FeatureConfig& cfg) {
  if (cfg.group_stats_batch_only) {
    // Group statistics over the current batch only, still split by class slot.
    MemoryBank local(memories.num_slots(), 0, memories.num_slots() > 1);
    for (const auto& s : stats) local.push(s);
    std::vector<std::vector<double>> out;
    out.reserve(stats.size());
    for (const auto& s : stats)
      out.push_back(compute_features(s, local.memory_for_class(s.label), cfg));
    // The live memory is still maintained so the variants stay switchable.
    for (const auto& s : stats) memories.push(s);
    return out;
  }
  for (const auto& s : stats) memories.push(s);
  std::vector<std::vector<double>> out;
  out.reserve(stats.size());
  for (const auto& s : stats)
    out.push_back(compute_features(s, memories.memory_for_class(s.label), cfg));
  return out;
}

}  // namespace storm
