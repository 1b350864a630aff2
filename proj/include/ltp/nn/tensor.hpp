#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ltp/common.hpp"

// Minimal reverse-mode automatic differentiation over 2-D double matrices.
//
// A Tensor is a shared handle to a graph node. Ops record their parents and a
// backward closure only when at least one input requires a gradient, so pure
// inference builds no graph. Parameters are leaves whose gradients accumulate
// across backward calls until zero_grad().
namespace ltp::nn {

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::span<double> grad_buffer();  // allocates zeros on first use
};

// While alive, ops on this thread record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor parameter(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor from_matrix(const MatrixD& m);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> value() const { return node_->value; }
  // In-place access for optimizers and initializers; never use on a node that
  // is part of a graph awaiting backward.
  std::span<double> mutable_value() { return node_->value; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
  double item() const;
  MatrixD to_matrix() const;

  // Gradient view; all zeros when nothing has been accumulated.
  std::vector<double> grad() const;
  std::span<double> grad_buffer() { return node_->grad_buffer(); }
  void zero_grad();

  // Reverse sweep from a 1x1 tensor. Throws UsageError for non-scalars and for
  // a second call on the same graph.
  void backward();

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value,
                            std::vector<Tensor> parents, std::function<void(Node&)> backward_fn);

  std::shared_ptr<Node> node_;
};

// Builds an op output. `backward_fn` reads node.grad and accumulates into the
// parents' grad buffers; it is dropped when no parent requires a gradient.
Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward_fn);

// ---- Linear algebra -------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);     // a * b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T

// ---- Elementwise ----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& a, const Tensor& row);  // row: 1 x cols, broadcast over rows
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor abs(const Tensor& a);                         // subgradient 0 at 0
Tensor log_floor(const Tensor& a, double floor);    // log(max(a, floor))
Tensor minimum(const Tensor& a, const Tensor& b);   // ties route to a
Tensor maximum(const Tensor& a, const Tensor& b);   // ties route to a

// ---- Reductions and indexing ----------------------------------------------
Tensor sum(const Tensor& a);
Tensor element(const Tensor& a, std::size_t r, std::size_t c);
Tensor add_all(const std::vector<Tensor>& terms);  // sum of equally shaped tensors

// ---- Normalization --------------------------------------------------------
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// ---- Attention ------------------------------------------------------------
// Multi-head scaled dot-product attention. Q: m x d, K: n x d, V: n x dv, with
// d and dv divisible by `heads`. Head h uses column block h of each input:
//   A_h = softmax(Q_h K_h^T / sqrt(d / heads)),  out[:, block h] = A_h V_h.
// When `capture` is non-null it receives the head-averaged attention map.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, MatrixD* capture = nullptr);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

}  // namespace ltp::nn
