#include <doctest.h>

#include <cmath>
#include <vector>

#include "storm/graph.hpp"
#include "storm/rng.hpp"
#include "test_util.hpp"

using namespace storm;
using namespace storm::graph;
using storm::test::fd_grad;
using storm::test::rel_err;

namespace {

std::vector<double> random_values(int n, RngStream& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

// Analytic gradient of scalar(x) = build(x) w.r.t. the leaf values.
std::vector<double> analytic_grad(const std::function<Tensor(const Tensor&)>& build, Shape shape,
                                  const std::vector<double>& x) {
  Tensor leaf = Tensor::leaf(shape, x);
  Tensor root = build(leaf);
  auto grads = backward(root, {leaf});
  return grads[0].values();
}

double eval_scalar(const std::function<Tensor(const Tensor&)>& build, Shape shape,
                   const std::vector<double>& x) {
  NoGradGuard ng;
  Tensor leaf = Tensor::constant(shape, x);
  return build(leaf).item();
}

// Checks d(build)/dx against central differences on random inputs.
void check_op_gradient(const std::function<Tensor(const Tensor&)>& build, Shape shape,
                       std::vector<double> x, double tol = 1e-6) {
  auto analytic = analytic_grad(build, shape, x);
  auto numeric = fd_grad([&](const std::vector<double>& v) { return eval_scalar(build, shape, v); },
                         x, 1e-5);
  CHECK(rel_err(analytic, numeric) < tol);
}

// A fixed random linear functional turns any output into a scalar.
Tensor weigh(const Tensor& t, unsigned salt) {
  RngStream rng(917u + salt);
  return sum(mul(t, Tensor::constant(t.shape(), random_values(t.shape().size(), rng))));
}

}  // namespace

TEST_SUITE("graph") {

TEST_CASE("op value examples") {
  Tensor s = softmax_rows(Tensor::constant(Shape::vec(2), {0.0, 0.0}));
  CHECK(s.at(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.at(1) == doctest::Approx(0.5).epsilon(1e-12));

  Tensor r = relu(Tensor::constant(Shape::vec(2), {-1.0, 2.0}));
  CHECK(r.at(0) == 0.0);
  CHECK(r.at(1) == 2.0);

  // Batch column [1,2,3], unit affine: output has mean 0, variance ~1.
  Tensor x = Tensor::constant(Shape::mat(3, 1), {1.0, 2.0, 3.0});
  Tensor y = batchnorm_cols(x, Tensor::constant(Shape::vec(1), {1.0}),
                            Tensor::constant(Shape::vec(1), {0.0}), 1e-5);
  double m = (y.at(0, 0) + y.at(1, 0) + y.at(2, 0)) / 3.0;
  double var = 0.0;
  for (int i = 0; i < 3; ++i) var += (y.at(i, 0) - m) * (y.at(i, 0) - m);
  var /= 3.0;
  CHECK(std::abs(m) < 1e-12);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("first-order gradients match finite differences") {
  RngStream rng(42);
  const Shape mat = Shape::mat(3, 4);
  const Shape vec = Shape::vec(5);

  check_op_gradient([](const Tensor& t) { return weigh(add(t, t), 0); }, mat,
                    random_values(12, rng));
  check_op_gradient(
      [&](const Tensor& t) {
        RngStream r2(7);
        Tensor other = Tensor::constant(mat, random_values(12, r2));
        return weigh(sub(t, other), 1);
      },
      mat, random_values(12, rng));
  check_op_gradient(
      [&](const Tensor& t) {
        RngStream r2(8);
        Tensor other = Tensor::constant(mat, random_values(12, r2));
        return weigh(mul(t, other), 2);
      },
      mat, random_values(12, rng));
  check_op_gradient(
      [&](const Tensor& t) {
        RngStream r2(9);
        Tensor other = Tensor::constant(mat, random_values(12, r2, 0.5, 2.0));
        return weigh(divide(t, other), 3);
      },
      mat, random_values(12, rng));
  check_op_gradient([](const Tensor& t) { return weigh(neg(t), 4); }, mat, random_values(12, rng));
  check_op_gradient([](const Tensor& t) { return weigh(scale(t, -1.7), 5); }, mat,
                    random_values(12, rng));
  check_op_gradient([](const Tensor& t) { return weigh(add_scalar(t, 3.1), 6); }, mat,
                    random_values(12, rng));
  check_op_gradient([](const Tensor& t) { return weigh(relu(t), 7); }, mat,
                    random_values(12, rng));  // away from the kink w.h.p.
  check_op_gradient([](const Tensor& t) { return weigh(log(t), 8); }, mat,
                    random_values(12, rng, 0.2, 3.0));
  check_op_gradient([](const Tensor& t) { return weigh(exp(t), 9); }, mat,
                    random_values(12, rng, -1.0, 1.0));
  check_op_gradient([](const Tensor& t) { return weigh(sqrt(t), 10); }, mat,
                    random_values(12, rng, 0.3, 3.0));
  check_op_gradient([](const Tensor& t) { return weigh(clamp_min(t, 0.5), 11); }, mat,
                    random_values(12, rng, 0.8, 3.0));
  check_op_gradient(
      [](const Tensor& t) {
        RngStream r2(10);
        Tensor other = Tensor::constant(Shape::mat(4, 2), random_values(8, r2));
        return weigh(matmul(t, other), 12);
      },
      mat, random_values(12, rng));
  check_op_gradient([](const Tensor& t) { return weigh(transpose(t), 13); }, mat,
                    random_values(12, rng));
  check_op_gradient([](const Tensor& t) { return weigh(reshape(t, Shape::vec(12)), 14); }, mat,
                    random_values(12, rng));
  check_op_gradient([](const Tensor& t) { return sum(t); }, mat, random_values(12, rng));
  check_op_gradient([](const Tensor& t) { return mean(t); }, mat, random_values(12, rng));
  check_op_gradient([](const Tensor& t) { return weigh(rows_sum(t), 15); }, mat,
                    random_values(12, rng));
  check_op_gradient([](const Tensor& t) { return weigh(cols_sum(t), 16); }, mat,
                    random_values(12, rng));
  check_op_gradient([](const Tensor& t) { return weigh(bcast_cols(t, 3), 17); }, vec,
                    random_values(5, rng));
  check_op_gradient([](const Tensor& t) { return weigh(bcast_rows(t, 3), 18); }, vec,
                    random_values(5, rng));
  check_op_gradient([](const Tensor& t) { return weigh(expand(t, Shape::mat(2, 3)), 19); },
                    Shape::scalar(), random_values(1, rng));
  check_op_gradient(
      [](const Tensor& t) { return weigh(gather_cols(t, {1, 3, 0}), 20); }, mat,
      random_values(12, rng));
  check_op_gradient(
      [](const Tensor& t) { return weigh(scatter_cols(t, {2, 0, 1, 1, 2}, 4), 21); }, vec,
      random_values(5, rng));
  check_op_gradient([](const Tensor& t) { return weigh(select_col(t, 2), 22); }, mat,
                    random_values(12, rng));
  check_op_gradient([](const Tensor& t) { return weigh(scatter_col(t, 1, 4), 23); }, vec,
                    random_values(5, rng));
  check_op_gradient([](const Tensor& t) { return weigh(gather_vec(t, {4, 0, 2, 2}), 24); }, vec,
                    random_values(5, rng));
  check_op_gradient([](const Tensor& t) { return weigh(scatter_vec(t, {3, 0, 6, 1, 4}, 8), 25); },
                    vec, random_values(5, rng));
  check_op_gradient([](const Tensor& t) { return weigh(softmax_rows(t), 26); }, mat,
                    random_values(12, rng));
  check_op_gradient(
      [](const Tensor& t) {
        Tensor g = Tensor::constant(Shape::vec(4), {1.1, 0.9, 1.3, 0.7});
        Tensor b = Tensor::constant(Shape::vec(4), {0.1, -0.2, 0.0, 0.3});
        return weigh(batchnorm_cols(t, g, b, 1e-5), 27);
      },
      mat, random_values(12, rng));
  check_op_gradient(
      [](const Tensor& t) {
        RngStream drop_rng(123);  // reseeded per evaluation: mask identical
        return weigh(dropout(t, 0.4, drop_rng), 28);
      },
      mat, random_values(12, rng));
}

TEST_CASE("gradients flow through batchnorm affine parameters") {
  RngStream rng(5);
  std::vector<double> xv = random_values(12, rng);
  Tensor x = Tensor::constant(Shape::mat(3, 4), xv);
  auto build_gamma = [&](const Tensor& g) {
    Tensor b = Tensor::constant(Shape::vec(4), {0.1, -0.2, 0.0, 0.3});
    return weigh(batchnorm_cols(x, g, b, 1e-5), 29);
  };
  check_op_gradient(build_gamma, Shape::vec(4), random_values(4, rng, 0.5, 1.5));
}

TEST_CASE("second derivative of x^3 via retained backward") {
  Tensor x = Tensor::leaf(Shape::scalar(), {2.0});
  Tensor root = mul(mul(x, x), x);
  auto g1 = backward(root, {x}, {.create_graph = true});
  CHECK(g1[0].item() == doctest::Approx(12.0).epsilon(1e-12));  // 3x^2
  auto g2 = backward(g1[0], {x});
  CHECK(g2[0].item() == doctest::Approx(12.0).epsilon(1e-12));  // 6x
}

TEST_CASE("first derivative of x^2") {
  Tensor x = Tensor::leaf(Shape::scalar(), {3.0});
  auto g = backward(mul(x, x), {x});
  CHECK(g[0].item() == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("second-order matches finite differences of the analytic gradient") {
  // Composition covering softmax, log, batchnorm, matmul, relu, mean.
  RngStream rng(77);
  const Shape shape = Shape::mat(4, 3);
  auto first_grad = [&](const std::vector<double>& xv) {
    Tensor x = Tensor::leaf(shape, xv);
    Tensor g0 = Tensor::constant(Shape::vec(3), {1.2, 0.8, 1.0});
    Tensor b0 = Tensor::constant(Shape::vec(3), {0.0, 0.1, -0.1});
    Tensor h = batchnorm_cols(x, g0, b0, 1e-5);
    Tensor p = softmax_rows(h);
    Tensor root = mean(mul(log(add_scalar(p, 1e-3)), relu(x)));
    auto g = backward(root, {x}, {.create_graph = true});
    return g[0];
  };
  std::vector<double> x0 = random_values(12, rng, 0.2, 1.5);

  // Analytic second derivative of s(x) = sum(c * grad(x)) for random c.
  RngStream crng(31);
  std::vector<double> c = random_values(12, crng);
  Tensor xleaf = Tensor::leaf(shape, x0);
  {
    Tensor g0 = Tensor::constant(Shape::vec(3), {1.2, 0.8, 1.0});
    Tensor b0 = Tensor::constant(Shape::vec(3), {0.0, 0.1, -0.1});
    Tensor h = batchnorm_cols(xleaf, g0, b0, 1e-5);
    Tensor p = softmax_rows(h);
    Tensor root = mean(mul(log(add_scalar(p, 1e-3)), relu(xleaf)));
    auto g = backward(root, {xleaf}, {.create_graph = true});
    Tensor s = sum(mul(g[0], Tensor::constant(shape, c)));
    auto hh = backward(s, {xleaf});

    auto numeric = fd_grad(
        [&](const std::vector<double>& v) {
          Tensor gt = first_grad(v);
          double acc = 0.0;
          for (std::size_t i = 0; i < c.size(); ++i) acc += c[i] * gt.values()[i];
          return acc;
        },
        x0, 1e-5);
    CHECK(rel_err(hh[0].values(), numeric) < 1e-4);
  }
}

TEST_CASE("gradient of sum(softmax(z)) is the zero vector") {
  RngStream rng(3);
  Tensor z = Tensor::leaf(Shape::vec(6), random_values(6, rng));
  auto g = backward(sum(softmax_rows(z)), {z});
  for (double v : g[0].values()) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("dropout with the same seed is bit-identical") {
  RngStream r1(99), r2(99);
  RngStream data(1);
  std::vector<double> xv = random_values(32, data);
  Tensor x = Tensor::constant(Shape::mat(4, 8), xv);
  Tensor a = dropout(x, 0.3, r1);
  Tensor b = dropout(x, 0.3, r2);
  CHECK(a.values() == b.values());
}

TEST_CASE("dropout rate 0 is identity and consumes no randomness") {
  RngStream r(5);
  Tensor x = Tensor::constant(Shape::vec(3), {1.0, 2.0, 3.0});
  Tensor y = dropout(x, 0.0, r);
  CHECK(y.values() == x.values());
  RngStream fresh(5);
  CHECK(r.next_u64() == fresh.next_u64());
}

TEST_CASE("identical graphs give bit-identical gradients") {
  auto run = [] {
    RngStream rng(11);
    Tensor w = Tensor::leaf(Shape::mat(3, 2), random_values(6, rng));
    Tensor x = Tensor::constant(Shape::mat(5, 3), random_values(15, rng));
    Tensor p = softmax_rows(matmul(x, w));
    Tensor loss = neg(mean(log(clamp_min(gather_cols(p, {0, 1, 0, 1, 0}), 1e-12))));
    auto g = backward(loss, {w});
    return g[0].values();
  };
  CHECK(run() == run());
}

TEST_CASE("error paths") {
  Tensor a = Tensor::constant(Shape::vec(2), {1.0, 2.0});
  Tensor b = Tensor::constant(Shape::vec(3), {1.0, 2.0, 3.0});
  CHECK_THROWS_AS((void)add(a, b), GraphError);
  CHECK_THROWS_AS((void)matmul(a, b), GraphError);
  CHECK_THROWS_AS((void)log(Tensor::constant(Shape::scalar(), {-1.0})), GraphError);
  CHECK_THROWS_AS((void)exp(Tensor::constant(Shape::scalar(), {1e4})), GraphError);

  Tensor x = Tensor::leaf(Shape::vec(2), {1.0, 2.0});
  Tensor v = sum(mul(x, x));
  CHECK_THROWS_AS((void)backward(mul(x, x), {x}), GraphError);  // non-scalar root

  Tensor unrelated = Tensor::leaf(Shape::scalar(), {1.0});
  CHECK_THROWS_AS((void)backward(v, {unrelated}), GraphError);  // unreachable
  auto g = backward(v, {unrelated}, {.allow_unused = true});
  CHECK(g[0].values() == std::vector<double>{0.0});

  Tensor constant_target = Tensor::constant(Shape::scalar(), {1.0});
  CHECK_THROWS_AS((void)backward(v, {constant_target}), GraphError);  // no requires_grad
}

TEST_CASE("node accounting moves with graph lifetime") {
  GraphStats::reset_peak();
  const auto before = GraphStats::live();
  {
    Tensor x = Tensor::leaf(Shape::vec(8), std::vector<double>(8, 1.0));
    Tensor y = sum(mul(x, x));
    CHECK(GraphStats::live() > before);
    (void)y;
  }
  CHECK(GraphStats::live() == before);
}

}  // TEST_SUITE
