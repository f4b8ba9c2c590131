#include "storm/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace storm::graph {

namespace {

std::atomic<std::int64_t> g_live{0};
std::atomic<std::int64_t> g_created{0};
std::atomic<std::int64_t> g_peak{0};
std::atomic<std::int64_t> g_live_values{0};
std::atomic<std::int64_t> g_peak_values{0};

thread_local bool g_grad_enabled = true;

void bump_live() {
  const std::int64_t v = ++g_live;
  ++g_created;
  std::int64_t peak = g_peak.load(std::memory_order_relaxed);
  while (v > peak && !g_peak.compare_exchange_weak(peak, v)) {
  }
}

void account_values(std::int64_t n) {
  const std::int64_t v = g_live_values += n;
  std::int64_t peak = g_peak_values.load(std::memory_order_relaxed);
  while (v > peak && !g_peak_values.compare_exchange_weak(peak, v)) {
  }
}

[[noreturn]] void fail(const std::string& msg) { throw GraphError(msg); }

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) fail(std::string("non-finite result in op '") + op + "'");
  }
}

Tensor make(Shape shape, std::vector<double> values, const char* op,
            std::vector<Tensor> parents, Vjp vjp) {
  check_finite(values, op);
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->values = std::move(values);
  n->op = op;
  account_values(static_cast<std::int64_t>(n->values.size()));
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) {
      if (p.defined() && p.requires_grad()) {
        needs = true;
        break;
      }
    }
  }
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->vjp = std::move(vjp);
  }
  return Tensor(std::move(n));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape()))
    fail(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.shape().rank != 2) fail(std::string(op) + ": expected matrix, got " + a.shape().str());
}

void require_rank1(const Tensor& a, const char* op) {
  if (a.shape().rank != 1) fail(std::string(op) + ": expected vector, got " + a.shape().str());
}

}  // namespace

std::string Shape::str() const {
  if (rank == 0) return "scalar";
  if (rank == 1) return "vec(" + std::to_string(cols) + ")";
  return "mat(" + std::to_string(rows) + "," + std::to_string(cols) + ")";
}

Node::Node() { bump_live(); }
Node::~Node() {
  --g_live;
  g_live_values -= static_cast<std::int64_t>(values.size());
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set(bool on) { g_grad_enabled = on; }

std::int64_t GraphStats::live() { return g_live.load(); }
std::int64_t GraphStats::created() { return g_created.load(); }
std::int64_t GraphStats::peak_live() { return g_peak.load(); }
std::int64_t GraphStats::live_values() { return g_live_values.load(); }
std::int64_t GraphStats::peak_live_values() { return g_peak_values.load(); }
void GraphStats::reset_peak() {
  g_peak.store(g_live.load());
  g_peak_values.store(g_live_values.load());
}

Tensor Tensor::constant(Shape s, std::vector<double> v) {
  if (static_cast<int>(v.size()) != s.size()) fail("constant: value count does not match shape");
  return make(s, std::move(v), "const", {}, nullptr);
}

Tensor Tensor::full(Shape s, double v) {
  return constant(s, std::vector<double>(static_cast<std::size_t>(s.size()), v));
}

Tensor Tensor::leaf(Shape s, std::vector<double> v) {
  if (static_cast<int>(v.size()) != s.size()) fail("leaf: value count does not match shape");
  check_finite(v, "leaf");
  auto n = std::make_shared<Node>();
  n->shape = s;
  n->values = std::move(v);
  n->requires_grad = true;
  n->op = "leaf";
  account_values(static_cast<std::int64_t>(n->values.size()));
  return Tensor(std::move(n));
}

double Tensor::item() const {
  if (node_->shape.size() != 1) fail("item: tensor is not scalar-sized");
  return node_->values[0];
}

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make(a.shape(), std::move(out), "add", {a, b},
              [](const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make(a.shape(), std::move(out), "sub", {a, b},
              [](const Tensor& g) { return std::vector<Tensor>{g, neg(g)}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make(a.shape(), std::move(out), "mul", {a, b}, [a, b](const Tensor& g) {
    std::vector<Tensor> grads(2);
    if (a.requires_grad()) grads[0] = mul(g, b);
    if (b.requires_grad()) grads[1] = mul(g, a);
    return grads;
  });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] / b.values()[i];
  return make(a.shape(), std::move(out), "div", {a, b}, [a, b](const Tensor& g) {
    std::vector<Tensor> grads(2);
    if (a.requires_grad()) grads[0] = divide(g, b);
    if (b.requires_grad()) grads[1] = neg(divide(mul(g, a), mul(b, b)));
    return grads;
  });
}

Tensor neg(const Tensor& a) {
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -a.values()[i];
  return make(a.shape(), std::move(out), "neg", {a},
              [](const Tensor& g) { return std::vector<Tensor>{neg(g)}; });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  return make(a.shape(), std::move(out), "scale", {a},
              [c](const Tensor& g) { return std::vector<Tensor>{scale(g, c)}; });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + c;
  return make(a.shape(), std::move(out), "add_scalar", {a},
              [](const Tensor& g) { return std::vector<Tensor>{g}; });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  return make(a.shape(), std::move(out), "relu", {a}, [a](const Tensor& g) {
    // The mask is locally constant, so second order through it is zero.
    std::vector<double> m(a.values().size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = a.values()[i] > 0.0 ? 1.0 : 0.0;
    return std::vector<Tensor>{mul(g, Tensor::constant(a.shape(), std::move(m)))};
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.values()[i]);
  return make(a.shape(), std::move(out), "log", {a},
              [a](const Tensor& g) { return std::vector<Tensor>{divide(g, a)}; });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
  Tensor result = make(a.shape(), std::move(out), "exp", {a}, nullptr);
  if (result.node()->requires_grad) {
    std::weak_ptr<Node> self = result.node();
    result.node()->vjp = [self](const Tensor& g) {
      return std::vector<Tensor>{mul(g, Tensor(self.lock()))};
    };
  }
  return result;
}

Tensor sqrt(const Tensor& a) {
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(a.values()[i]);
  Tensor result = make(a.shape(), std::move(out), "sqrt", {a}, nullptr);
  if (result.node()->requires_grad) {
    std::weak_ptr<Node> self = result.node();
    result.node()->vjp = [self](const Tensor& g) {
      return std::vector<Tensor>{divide(g, scale(Tensor(self.lock()), 2.0))};
    };
  }
  return result;
}

Tensor clamp_min(const Tensor& a, double c) {
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.values()[i], c);
  return make(a.shape(), std::move(out), "clamp_min", {a}, [a, c](const Tensor& g) {
    std::vector<double> m(a.values().size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = a.values()[i] > c ? 1.0 : 0.0;
    return std::vector<Tensor>{mul(g, Tensor::constant(a.shape(), std::move(m)))};
  });
}

Tensor detach(const Tensor& a) { return Tensor::constant(a.shape(), a.values()); }

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const int m = a.shape().rows, k = a.shape().cols, n = b.shape().cols;
  if (b.shape().rows != k)
    fail("matmul: inner dimensions differ, " + a.shape().str() + " x " + b.shape().str());
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const std::size_t bo = static_cast<std::size_t>(p) * n;
      const std::size_t oo = static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) out[oo + j] += aip * bv[bo + j];
    }
  }
  return make(Shape::mat(m, n), std::move(out), "matmul", {a, b}, [a, b](const Tensor& g) {
    std::vector<Tensor> grads(2);
    if (a.requires_grad()) grads[0] = matmul(g, transpose(b));
    if (b.requires_grad()) grads[1] = matmul(transpose(a), g);
    return grads;
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const int r = a.shape().rows, c = a.shape().cols;
  std::vector<double> out(a.values().size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<std::size_t>(j) * r + i] = a.values()[static_cast<std::size_t>(i) * c + j];
  return make(Shape::mat(c, r), std::move(out), "transpose", {a},
              [](const Tensor& g) { return std::vector<Tensor>{transpose(g)}; });
}

Tensor reshape(const Tensor& a, Shape s) {
  if (s.size() != a.shape().size())
    fail("reshape: size mismatch " + a.shape().str() + " -> " + s.str());
  Shape prev = a.shape();
  return make(s, a.values(), "reshape", {a},
              [prev](const Tensor& g) { return std::vector<Tensor>{reshape(g, prev)}; });
}

// ---------------------------------------------------------------------------
// reductions / broadcasts

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  Shape in = a.shape();
  return make(Shape::scalar(), {s}, "sum", {a},
              [in](const Tensor& g) { return std::vector<Tensor>{expand(g, in)}; });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / a.shape().size()); }

Tensor rows_sum(const Tensor& a) {
  require_rank2(a, "rows_sum");
  const int r = a.shape().rows, c = a.shape().cols;
  std::vector<double> out(static_cast<std::size_t>(r), 0.0);
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += a.values()[static_cast<std::size_t>(i) * c + j];
    out[static_cast<std::size_t>(i)] = s;
  }
  return make(Shape::vec(r), std::move(out), "rows_sum", {a},
              [c](const Tensor& g) { return std::vector<Tensor>{bcast_cols(g, c)}; });
}

Tensor cols_sum(const Tensor& a) {
  require_rank2(a, "cols_sum");
  const int r = a.shape().rows, c = a.shape().cols;
  std::vector<double> out(static_cast<std::size_t>(c), 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<std::size_t>(j)] += a.values()[static_cast<std::size_t>(i) * c + j];
  return make(Shape::vec(c), std::move(out), "cols_sum", {a},
              [r](const Tensor& g) { return std::vector<Tensor>{bcast_rows(g, r)}; });
}

Tensor bcast_cols(const Tensor& v, int cols) {
  require_rank1(v, "bcast_cols");
  const int r = v.shape().cols;
  std::vector<double> out(static_cast<std::size_t>(r) * cols);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < cols; ++j)
      out[static_cast<std::size_t>(i) * cols + j] = v.values()[static_cast<std::size_t>(i)];
  return make(Shape::mat(r, cols), std::move(out), "bcast_cols", {v},
              [](const Tensor& g) { return std::vector<Tensor>{rows_sum(g)}; });
}

Tensor bcast_rows(const Tensor& v, int rows) {
  require_rank1(v, "bcast_rows");
  const int c = v.shape().cols;
  std::vector<double> out(static_cast<std::size_t>(rows) * c);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<std::size_t>(i) * c + j] = v.values()[static_cast<std::size_t>(j)];
  return make(Shape::mat(rows, c), std::move(out), "bcast_rows", {v},
              [](const Tensor& g) { return std::vector<Tensor>{cols_sum(g)}; });
}

Tensor expand(const Tensor& s, Shape shape) {
  if (s.shape().size() != 1) fail("expand: input must be scalar");
  std::vector<double> out(static_cast<std::size_t>(shape.size()), s.values()[0]);
  return make(shape, std::move(out), "expand", {s},
              [](const Tensor& g) { return std::vector<Tensor>{sum(g)}; });
}

// ---------------------------------------------------------------------------
// indexing

Tensor gather_cols(const Tensor& m, const std::vector<int>& col_per_row) {
  require_rank2(m, "gather_cols");
  const int r = m.shape().rows, c = m.shape().cols;
  if (static_cast<int>(col_per_row.size()) != r) fail("gather_cols: index count != rows");
  std::vector<double> out(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int j = col_per_row[static_cast<std::size_t>(i)];
    if (j < 0 || j >= c) fail("gather_cols: column index out of range");
    out[static_cast<std::size_t>(i)] = m.values()[static_cast<std::size_t>(i) * c + j];
  }
  return make(Shape::vec(r), std::move(out), "gather_cols", {m},
              [col_per_row, c](const Tensor& g) {
                return std::vector<Tensor>{scatter_cols(g, col_per_row, c)};
              });
}

Tensor scatter_cols(const Tensor& v, const std::vector<int>& col_per_row, int cols) {
  require_rank1(v, "scatter_cols");
  const int r = v.shape().cols;
  if (static_cast<int>(col_per_row.size()) != r) fail("scatter_cols: index count != length");
  std::vector<double> out(static_cast<std::size_t>(r) * cols, 0.0);
  for (int i = 0; i < r; ++i) {
    const int j = col_per_row[static_cast<std::size_t>(i)];
    if (j < 0 || j >= cols) fail("scatter_cols: column index out of range");
    out[static_cast<std::size_t>(i) * cols + j] = v.values()[static_cast<std::size_t>(i)];
  }
  return make(Shape::mat(r, cols), std::move(out), "scatter_cols", {v},
              [col_per_row](const Tensor& g) {
                return std::vector<Tensor>{gather_cols(g, col_per_row)};
              });
}

Tensor select_col(const Tensor& m, int col) {
  require_rank2(m, "select_col");
  const int r = m.shape().rows, c = m.shape().cols;
  if (col < 0 || col >= c) fail("select_col: column out of range");
  std::vector<double> out(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) out[static_cast<std::size_t>(i)] = m.values()[static_cast<std::size_t>(i) * c + col];
  return make(Shape::vec(r), std::move(out), "select_col", {m}, [col, c](const Tensor& g) {
    return std::vector<Tensor>{scatter_col(g, col, c)};
  });
}

Tensor scatter_col(const Tensor& v, int col, int cols) {
  require_rank1(v, "scatter_col");
  const int r = v.shape().cols;
  if (col < 0 || col >= cols) fail("scatter_col: column out of range");
  std::vector<double> out(static_cast<std::size_t>(r) * cols, 0.0);
  for (int i = 0; i < r; ++i) out[static_cast<std::size_t>(i) * cols + col] = v.values()[static_cast<std::size_t>(i)];
  return make(Shape::mat(r, cols), std::move(out), "scatter_col", {v},
              [col](const Tensor& g) { return std::vector<Tensor>{select_col(g, col)}; });
}

Tensor gather_vec(const Tensor& v, const std::vector<int>& idx) {
  require_rank1(v, "gather_vec");
  const int n = v.shape().cols;
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= n) fail("gather_vec: index out of range");
    out[i] = v.values()[static_cast<std::size_t>(idx[i])];
  }
  return make(Shape::vec(static_cast<int>(idx.size())), std::move(out), "gather_vec", {v},
              [idx, n](const Tensor& g) { return std::vector<Tensor>{scatter_vec(g, idx, n)}; });
}

Tensor scatter_vec(const Tensor& v, const std::vector<int>& idx, int len) {
  require_rank1(v, "scatter_vec");
  if (idx.size() != v.values().size()) fail("scatter_vec: index count != length");
  std::vector<double> out(static_cast<std::size_t>(len), 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= len) fail("scatter_vec: index out of range");
    out[static_cast<std::size_t>(idx[i])] += v.values()[i];
  }
  return make(Shape::vec(len), std::move(out), "scatter_vec", {v},
              [idx](const Tensor& g) { return std::vector<Tensor>{gather_vec(g, idx)}; });
}

// ---------------------------------------------------------------------------
// composites

Tensor softmax_rows(const Tensor& a) {
  const bool is_vec = a.shape().rank == 1;
  Tensor m = is_vec ? reshape(a, Shape::mat(1, a.shape().cols)) : a;
  if (m.shape().rank != 2) fail("softmax_rows: expected vector or matrix");
  const int r = m.shape().rows, c = m.shape().cols;
  // Row-max shift for stability; the shift is locally constant so it does
  // not change derivatives of any order.
  std::vector<double> shift(static_cast<std::size_t>(r) * c);
  for (int i = 0; i < r; ++i) {
    double mx = m.values()[static_cast<std::size_t>(i) * c];
    for (int j = 1; j < c; ++j) mx = std::max(mx, m.values()[static_cast<std::size_t>(i) * c + j]);
    for (int j = 0; j < c; ++j) shift[static_cast<std::size_t>(i) * c + j] = mx;
  }
  Tensor z = sub(m, Tensor::constant(Shape::mat(r, c), std::move(shift)));
  Tensor e = exp(z);
  Tensor out = divide(e, bcast_cols(rows_sum(e), c));
  return is_vec ? reshape(out, a.shape()) : out;
}

Tensor dropout(const Tensor& a, double rate, RngStream& rng) {
  if (rate < 0.0 || rate >= 1.0) fail("dropout: rate must be in [0,1)");
  if (rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.values().size());
  for (auto& v : mask) v = rng.uniform() >= rate ? keep_scale : 0.0;
  return mul(a, Tensor::constant(a.shape(), std::move(mask)));
}

Tensor batchnorm_cols(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank2(x, "batchnorm_cols");
  const int r = x.shape().rows, c = x.shape().cols;
  if (gamma.shape().rank != 1 || gamma.shape().cols != c) fail("batchnorm_cols: gamma shape");
  if (beta.shape().rank != 1 || beta.shape().cols != c) fail("batchnorm_cols: beta shape");
  Tensor mu = scale(cols_sum(x), 1.0 / r);
  Tensor xc = sub(x, bcast_rows(mu, r));
  Tensor var = scale(cols_sum(mul(xc, xc)), 1.0 / r);
  Tensor sd = sqrt(add_scalar(var, eps));
  Tensor xn = divide(xc, bcast_rows(sd, r));
  return add(mul(xn, bcast_rows(gamma, r)), bcast_rows(beta, r));
}

// ---------------------------------------------------------------------------
// backward

std::vector<Tensor> backward(const Tensor& root, const std::vector<Tensor>& targets,
                             BackwardOptions opts) {
  if (!root.defined()) fail("backward: undefined root");
  if (root.shape().rank != 0) fail("backward: root must be scalar, got " + root.shape().str());
  if (!root.node()->requires_grad)
    fail("backward: root does not require grad (no differentiable path)");
  for (const auto& t : targets) {
    if (!t.defined()) fail("backward: undefined target");
    if (!t.node()->requires_grad) fail("backward: target does not require grad");
  }

  // Iterative post-order DFS over the grad-requiring subgraph.
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root.raw(), 0});
  visited.insert(root.raw());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      Node* p = f.n->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.n);
      stack.pop_back();
    }
  }

  std::unordered_map<Node*, Tensor> grads;
  grads[root.raw()] = Tensor::scalar(1.0);

  GradModeGuard guard(opts.create_graph);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    auto gi = grads.find(n);
    if (gi == grads.end() || !n->vjp) continue;
    std::vector<Tensor> pg = n->vjp(gi->second);
    if (pg.size() != n->parents.size()) fail("backward: vjp arity mismatch in op");
    for (std::size_t i = 0; i < pg.size(); ++i) {
      Node* p = n->parents[i].get();
      if (!p->requires_grad || !pg[i].defined()) continue;
      auto existing = grads.find(p);
      if (existing == grads.end())
        grads.emplace(p, pg[i]);
      else
        existing->second = add(existing->second, pg[i]);
    }
  }

  std::vector<Tensor> out;
  out.reserve(targets.size());
  for (const auto& t : targets) {
    auto gi = grads.find(t.raw());
    if (gi != grads.end()) {
      out.push_back(gi->second);
    } else if (opts.allow_unused) {
      out.push_back(Tensor::zeros(t.shape()));
    } else {
      fail("backward: target unreachable from root");
    }
  }
  return out;
}

}  // namespace storm::graph
