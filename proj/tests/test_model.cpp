#include <doctest.h>

#include <cmath>

#include "storm/model.hpp"
#include "test_util.hpp"

using namespace storm;
using graph::Shape;
using graph::Tensor;

namespace {

Batch toy_batch(const std::vector<std::vector<double>>& rows, std::vector<int> labels) {
  const int B = static_cast<int>(rows.size());
  const int d = static_cast<int>(rows[0].size());
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  Batch b;
  b.features = Tensor::constant(Shape::mat(B, d), flat);
  b.labels = std::move(labels);
  for (int i = 0; i < B; ++i) b.ids.push_back(i);
  return b;
}

ModelConfig small_config(int d, int C) {
  ModelConfig cfg;
  cfg.input_dim = d;
  cfg.num_classes = C;
  cfg.dropout_rate = 0.1;
  return cfg;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("zero-initialized head yields uniform rows and all-zero predictions") {
  ModelConfig cfg = small_config(3, 4);
  cfg.init = InitKind::Zeros;
  RngStream rng(1);
  Classifier model(cfg, rng);
  Batch b = toy_batch({{0.5, -1.0, 2.0}, {3.0, 0.0, 1.0}}, {0, 1});
  Tensor p = model.forward(b, false, nullptr);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) CHECK(p.at(i, j) == doctest::Approx(0.25).epsilon(1e-12));
  auto preds = model.predict(b);
  CHECK(preds == std::vector<int>{0, 0});  // uniform rows tie-break to class 0
}

TEST_CASE("forward rows are probability vectors") {
  RngStream rng(3);
  Classifier model(small_config(5, 3), rng);
  RngStream data(7);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> r;
    for (int j = 0; j < 5; ++j) r.push_back(data.normal());
    rows.push_back(r);
  }
  Batch b = toy_batch(rows, {0, 1, 2, 0, 1, 2});
  Tensor p = model.forward(b, false, nullptr);
  for (int i = 0; i < 6; ++i) {
    double s = 0.0;
    for (int j = 0; j < 3; ++j) {
      CHECK(p.at(i, j) >= 0.0);
      s += p.at(i, j);
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("dropout forward is deterministic per seed") {
  RngStream rng(3);
  Classifier model(small_config(8, 2), rng);
  RngStream data(9);
  std::vector<std::vector<double>> rows(4, std::vector<double>(8));
  for (auto& r : rows)
    for (auto& x : r) x = data.normal();
  Batch b = toy_batch(rows, {0, 1, 0, 1});
  RngStream d1(55), d2(55);
  Tensor p1 = model.forward(b, true, &d1);
  Tensor p2 = model.forward(b, true, &d2);
  CHECK(p1.values() == p2.values());
}

TEST_CASE("per_sample_loss values") {
  Tensor probs = Tensor::constant(Shape::mat(3, 2), {1.0, 0.0, 0.5, 0.5, 0.9, 0.1});
  Tensor l = per_sample_loss(probs, {0, 1, 1});
  CHECK(l.at(0) <= 1e-11);  // clamped perfect prediction
  CHECK(l.at(1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(l.at(2) == doctest::Approx(-std::log(0.1)).epsilon(1e-12));
  CHECK_THROWS((void)per_sample_loss(probs, {0, 2, 1}));  // label out of range
}

TEST_CASE("predict breaks ties toward the lowest class index") {
  Tensor probs = Tensor::constant(Shape::mat(2, 2), {0.2, 0.8, 0.5, 0.5});
  auto am = argmax_rows(probs);
  CHECK(am == std::vector<int>{1, 0});
}

TEST_CASE("loss gradient w.r.t. logits equals softmax minus one-hot") {
  RngStream rng(17);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<double> zv(4);
    for (auto& z : zv) z = rng.normal();
    Tensor z = Tensor::leaf(Shape::vec(4), zv);
    Tensor p = graph::softmax_rows(z);
    const int label = rep % 4;
    Tensor mat = graph::reshape(p, Shape::mat(1, 4));
    Tensor loss = graph::reshape(per_sample_loss(mat, {label}), Shape::scalar());
    auto g = graph::backward(loss, {z});
    for (int j = 0; j < 4; ++j) {
      const double expected = p.at(j) - (j == label ? 1.0 : 0.0);
      CHECK(g[0].at(j) == doctest::Approx(expected).epsilon(1e-8));
    }
  }
}

TEST_CASE("permuting the batch permutes outputs identically") {
  RngStream rng(23);
  Classifier model(small_config(6, 3), rng);
  RngStream data(29);
  std::vector<std::vector<double>> rows(5, std::vector<double>(6));
  for (auto& r : rows)
    for (auto& x : r) x = data.normal();
  Batch b1 = toy_batch(rows, {0, 1, 2, 1, 0});
  std::vector<std::vector<double>> permuted = {rows[3], rows[0], rows[4], rows[1], rows[2]};
  Batch b2 = toy_batch(permuted, {1, 0, 0, 1, 2});
  Tensor p1 = model.forward(b1, false, nullptr);
  Tensor p2 = model.forward(b2, false, nullptr);
  const int map[5] = {3, 0, 4, 1, 2};
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) CHECK(p2.at(i, j) == p1.at(map[i], j));
}

TEST_CASE("toy training reaches accuracy 1.0 like a plain logistic regression oracle") {
  // Linearly separable 4-point 2-class set; 200 full-batch steps at rate 0.1.
  std::vector<std::vector<double>> rows = {{1.0, 0.2}, {0.8, -0.1}, {-1.0, 0.1}, {-0.7, -0.3}};
  std::vector<int> labels = {0, 0, 1, 1};

  // Oracle: hand-rolled logistic regression on the same data.
  {
    double w0 = 0.0, w1 = 0.0, bias = 0.0;
    for (int it = 0; it < 200; ++it) {
      double g0 = 0, g1 = 0, gb = 0;
      for (int i = 0; i < 4; ++i) {
        const double z = w0 * rows[i][0] + w1 * rows[i][1] + bias;
        const double p1 = 1.0 / (1.0 + std::exp(-z));  // P(class 1)
        const double err = p1 - (labels[i] == 1 ? 1.0 : 0.0);
        g0 += err * rows[i][0];
        g1 += err * rows[i][1];
        gb += err;
      }
      w0 -= 0.1 * g0 / 4;
      w1 -= 0.1 * g1 / 4;
      bias -= 0.1 * gb / 4;
    }
    int correct = 0;
    for (int i = 0; i < 4; ++i) {
      const double z = w0 * rows[i][0] + w1 * rows[i][1] + bias;
      correct += ((z > 0 ? 1 : 0) == labels[i]) ? 1 : 0;
    }
    REQUIRE(correct == 4);  // the oracle itself separates the data
  }

  ModelConfig cfg = small_config(2, 2);
  cfg.dropout_rate = 0.0;
  cfg.init = InitKind::Zeros;
  RngStream rng(1);
  Classifier model(cfg, rng);
  Batch b = toy_batch(rows, labels);
  auto params = model.param_tensors();
  for (int it = 0; it < 200; ++it) {
    Tensor p = model.forward(b, false, nullptr);
    Tensor loss = graph::mean(per_sample_loss(p, labels));
    auto grads = graph::backward(loss, params);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& v = params[k].mutable_values();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= 0.1 * grads[k].values()[i];
    }
  }
  auto preds = model.predict(b);
  int correct = 0;
  for (int i = 0; i < 4; ++i) correct += preds[i] == labels[i] ? 1 : 0;
  CHECK(correct == 4);
}

}  // TEST_SUITE
