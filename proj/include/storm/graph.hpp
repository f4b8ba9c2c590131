#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "storm/rng.hpp"

namespace storm::graph {

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes are scalar (rank 0), vector (rank 1) or matrix (rank 2, row-major).
struct Shape {
  int rank{0};
  int rows{1};
  int cols{1};

  static Shape scalar() { return {0, 1, 1}; }
  static Shape vec(int n) { return {1, 1, n}; }
  static Shape mat(int r, int c) { return {2, r, c}; }

  int size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Node;
class Tensor;
using NodePtr = std::shared_ptr<Node>;

// Given the gradient of some scalar root w.r.t. this node, produces the
// gradients w.r.t. each parent (aligned with Node::parents; entries for
// parents that do not require grad may be default-constructed).
using Vjp = std::function<std::vector<Tensor>(const Tensor&)>;

class Node {
 public:
  Shape shape;
  std::vector<double> values;
  bool requires_grad{false};
  std::vector<NodePtr> parents;
  Vjp vjp;  // empty for leaves and constants
  const char* op{"leaf"};

  Node();
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;
};

// Value-semantic handle to a graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor constant(Shape s, std::vector<double> v);
  static Tensor scalar(double v) { return constant(Shape::scalar(), {v}); }
  static Tensor full(Shape s, double v);
  static Tensor zeros(Shape s) { return full(s, 0.0); }
  // A leaf parameter: participates in differentiation.
  static Tensor leaf(Shape s, std::vector<double> v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& mutable_values() { return node_->values; }
  double item() const;
  double at(int i) const { return node_->values[static_cast<std::size_t>(i)]; }
  double at(int r, int c) const {
    return node_->values[static_cast<std::size_t>(r) * node_->shape.cols + c];
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  NodePtr node() const { return node_; }
  Node* raw() const { return node_.get(); }

 private:
  NodePtr node_;
};

// Whether newly created nodes record their provenance (parents + vjp).
struct GradMode {
  static bool enabled();
  static void set(bool on);
};

struct NoGradGuard {
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }

 private:
  bool prev_;
};

struct GradModeGuard {
  explicit GradModeGuard(bool on) : prev_(GradMode::enabled()) { GradMode::set(on); }
  ~GradModeGuard() { GradMode::set(prev_); }

 private:
  bool prev_;
};

// ---- elementwise / arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor clamp_min(const Tensor& a, double c);
Tensor detach(const Tensor& a);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k) x (k,n) -> (m,n)
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape s);

// ---- reductions and broadcasts ----
Tensor sum(const Tensor& a);                 // -> scalar
Tensor mean(const Tensor& a);                // -> scalar
Tensor rows_sum(const Tensor& a);            // (r,c) -> vec(r)
Tensor cols_sum(const Tensor& a);            // (r,c) -> vec(c)
Tensor bcast_cols(const Tensor& v, int cols);  // vec(r) -> (r,cols), column copies
Tensor bcast_rows(const Tensor& v, int rows);  // vec(c) -> (rows,c), row copies
Tensor expand(const Tensor& s, Shape shape);   // scalar -> filled shape

// ---- indexing ----
Tensor gather_cols(const Tensor& m, const std::vector<int>& col_per_row);  // -> vec(r)
Tensor scatter_cols(const Tensor& v, const std::vector<int>& col_per_row, int cols);
Tensor select_col(const Tensor& m, int col);               // -> vec(r)
Tensor scatter_col(const Tensor& v, int col, int cols);    // vec(r) -> (r,cols)
Tensor gather_vec(const Tensor& v, const std::vector<int>& idx);
Tensor scatter_vec(const Tensor& v, const std::vector<int>& idx, int len);

// ---- composites (gradients derive from the primitives above) ----
Tensor softmax_rows(const Tensor& a);  // matrix: per row; vector: over entries
// Inverted dropout; rate 0 returns the input unchanged without consuming rng.
Tensor dropout(const Tensor& a, double rate, RngStream& rng);
// Batch normalization over rows (training mode): each column normalized to
// mean 0/var 1 across the batch, then scaled/shifted per column.
Tensor batchnorm_cols(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

struct BackwardOptions {
  bool create_graph{false};  // returned gradients are differentiable
  bool allow_unused{false};  // zero gradient for unreachable targets
};

// Reverse-mode differentiation of a scalar root w.r.t. the given targets.
std::vector<Tensor> backward(const Tensor& root, const std::vector<Tensor>& targets,
                             BackwardOptions opts = {});

// Node accounting, used for memory-overhead checks. `live`/`peak_live`
// count nodes; `live_values`/`peak_live_values` count stored doubles, the
// meaningful proxy for retained-graph memory.
struct GraphStats {
  static std::int64_t live();
  static std::int64_t created();
  static std::int64_t peak_live();
  static std::int64_t live_values();
  static std::int64_t peak_live_values();
  static void reset_peak();
};

}  // namespace storm::graph
