#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "storm/checkpoint.hpp"
#include "storm/rescaler.hpp"
#include "test_util.hpp"

using namespace storm;
using graph::Tensor;

namespace {

std::vector<std::vector<double>> random_features(int n, int dim, RngStream& rng) {
  std::vector<std::vector<double>> f(static_cast<std::size_t>(n),
                                     std::vector<double>(static_cast<std::size_t>(dim)));
  for (auto& row : f)
    for (auto& v : row) v = rng.normal();
  return f;
}

Rescaler make_rescaler(RescalerConfig cfg, std::uint64_t seed = 1) {
  RngStream rng(seed);
  return Rescaler(cfg, rng);
}

void randomize(Rescaler& r, RngStream& rng, double scl = 1.5) {
  for (auto& p : r.params())
    for (auto& v : p.t.mutable_values()) v = rng.normal() * scl;
}

}  // namespace

TEST_SUITE("rescaler") {

TEST_CASE("uniform initialization yields exactly 0.5 for any batch") {
  RescalerConfig cfg;
  Rescaler r = make_rescaler(cfg);
  RngStream data(9);
  auto f1 = random_features(6, 19, data);
  auto f2 = random_features(4, 19, data);
  Tensor w1 = r.weights(f1, {0, 1, 0, 1, 1, 0}, true);
  Tensor w2 = r.weights(f2, {1, 1, 0, 0}, true);
  for (double v : w1.values()) CHECK(v == 0.5);
  for (double v : w2.values()) CHECK(v == 0.5);
}

TEST_CASE("per-class parameter sets are independent") {
  RescalerConfig cfg;
  cfg.num_classes = 3;
  Rescaler r = make_rescaler(cfg);
  RngStream rng(4);
  randomize(r, rng, 0.5);
  RngStream data(10);
  auto f = random_features(6, 19, data);
  std::vector<int> classes = {0, 1, 2, 0, 1, 2};
  std::vector<double> before = r.weights(f, classes, true).values();
  // Perturb class 2 parameters only.
  for (auto& p : r.params()) {
    if (p.name.rfind("omega.class2", 0) == 0)
      for (auto& v : p.t.mutable_values()) v += 0.37;
  }
  std::vector<double> after = r.weights(f, classes, true).values();
  for (int i = 0; i < 6; ++i) {
    if (classes[static_cast<std::size_t>(i)] == 2)
      CHECK(before[static_cast<std::size_t>(i)] != after[static_cast<std::size_t>(i)]);
    else
      CHECK(before[static_cast<std::size_t>(i)] == after[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("identical feature vectors within a class receive identical weights") {
  RescalerConfig cfg;
  Rescaler r = make_rescaler(cfg);
  RngStream rng(5);
  randomize(r, rng, 0.8);
  std::vector<double> row(19);
  RngStream data(11);
  for (auto& v : row) v = data.normal();
  std::vector<std::vector<double>> f = {row, row, row};
  Tensor w = r.weights(f, {0, 0, 0}, true);
  CHECK(w.at(0) == w.at(1));
  CHECK(w.at(1) == w.at(2));
}

TEST_CASE("binary mode thresholds the forward value") {
  RescalerConfig cfg;
  cfg.binary_mode = true;
  cfg.binary_threshold = 0.5;
  Rescaler r = make_rescaler(cfg);
  RngStream rng(6);
  randomize(r, rng, 1.0);
  RngStream data(12);
  auto f = random_features(8, 19, data);
  std::vector<int> classes(8, 0);
  Tensor w = r.weights(f, classes, true);
  for (double v : w.values()) CHECK((v == 0.0 || v == 1.0));

  // Same parameters without binary mode: the continuous weights.
  RescalerConfig cfg2 = cfg;
  cfg2.binary_mode = false;
  Rescaler r2 = make_rescaler(cfg2);
  r2.restore_values(r.snapshot_values());
  Tensor wc = r2.weights(f, classes, true);
  for (int i = 0; i < 8; ++i)
    CHECK(w.at(i) == (wc.at(i) > 0.5 ? 1.0 : 0.0));
}

TEST_CASE("softmax pair sums to one: w0 strictly inside (0,1)") {
  RescalerConfig cfg;
  Rescaler r = make_rescaler(cfg);
  RngStream rng(7);
  randomize(r, rng, 2.0);
  RngStream data(13);
  auto f = random_features(16, 19, data);
  Tensor w = r.weights(f, std::vector<int>(16, 0), true);
  for (double v : w.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("anti-collapse: weights cannot all be driven to zero in training mode") {
  // Adversarial parameter fuzz: the pre-softmax batch normalization keeps
  // logit differences centered, so some samples always stay above 1e-3.
  RescalerConfig cfg;
  Rescaler r = make_rescaler(cfg);
  RngStream fuzz(4242);
  RngStream data(17);
  for (int it = 0; it < 500; ++it) {
    randomize(r, fuzz, 1.5);
    auto f = random_features(16, 19, data);
    Tensor w = r.weights(f, std::vector<int>(16, 0), true);
    bool any_above = false;
    for (double v : w.values()) any_above = any_above || v > 1e-3;
    CHECK(any_above);
  }
}

TEST_CASE("gradient flows from a weighted loss into the rescaler parameters") {
  RescalerConfig cfg;
  cfg.hidden_width = 8;
  Rescaler r = make_rescaler(cfg);
  RngStream rng(8);
  randomize(r, rng, 0.5);
  RngStream data(19);
  auto f = random_features(6, 19, data);
  std::vector<int> classes = {0, 1, 0, 1, 0, 1};
  std::vector<double> loss_vals = {0.3, 1.2, 2.2, 0.1, 0.8, 1.5};

  auto params = r.param_tensors();
  auto weighted = [&](const std::vector<double>& l1w) {
    params[0].mutable_values() = l1w;
    Tensor w = r.weights(f, classes, true);
    Tensor losses = Tensor::constant(graph::Shape::vec(6), loss_vals);
    return graph::mean(graph::mul(w, losses));
  };

  std::vector<double> x0 = params[0].values();
  Tensor root = weighted(x0);
  auto g = graph::backward(root, {params[0]});
  auto numeric = storm::test::fd_grad(
      [&](const std::vector<double>& v) {
        graph::NoGradGuard ng;
        return weighted(v).item();
      },
      x0, 1e-5);
  params[0].mutable_values() = x0;
  CHECK(storm::test::rel_err(g[0].values(), numeric) < 1e-4);
  CHECK(storm::test::l2(g[0].values()) > 0.0);
}

TEST_CASE("class isolation: no gradient reaches the other class's parameters") {
  RescalerConfig cfg;
  cfg.hidden_width = 8;
  Rescaler r = make_rescaler(cfg);
  RngStream rng(9);
  randomize(r, rng, 0.5);
  RngStream data(23);
  auto f = random_features(5, 19, data);
  std::vector<int> classes(5, 0);  // class 1 absent from the batch
  Tensor w = r.weights(f, classes, true);
  Tensor root = graph::mean(w);
  auto grads = graph::backward(root, r.param_tensors(), {.allow_unused = true});
  const auto& names = r.params();
  for (std::size_t k = 0; k < names.size(); ++k) {
    const bool other_class = names[k].name.rfind("omega.class1", 0) == 0;
    double norm = storm::test::l2(grads[k].values());
    if (other_class)
      CHECK(norm == 0.0);
  }
}

TEST_CASE("single-sample class group bypasses batch normalization") {
  RescalerConfig cfg;
  Rescaler r = make_rescaler(cfg);
  RngStream rng(10);
  randomize(r, rng, 0.7);
  RngStream data(29);
  auto f = random_features(3, 19, data);
  // Classes {0,0,1}: class 1 has a single sample; must not throw and must
  // produce a valid weight.
  Tensor w = r.weights(f, {0, 0, 1}, true);
  for (double v : w.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  RescalerConfig cfg;
  Rescaler r = make_rescaler(cfg, 77);
  RngStream rng(11);
  randomize(r, rng, 1.1);
  const auto path = std::filesystem::temp_directory_path() / "storm_rescaler_test.ckpt";
  save_checkpoint(path.string(), r.params());
  Rescaler r2 = make_rescaler(cfg, 78);
  restore_from_checkpoint(path.string(), r2.params());
  auto a = r.snapshot_values();
  auto b = r2.snapshot_values();
  CHECK(a == b);
  std::filesystem::remove(path);
}

TEST_CASE("rejects wrong feature dimension") {
  RescalerConfig cfg;
  Rescaler r = make_rescaler(cfg);
  std::vector<std::vector<double>> f = {std::vector<double>(7, 0.0)};
  CHECK_THROWS((void)r.weights(f, {0}, true));
}

}  // TEST_SUITE
