#include "ltp/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "ltp/nn/kernels.hpp"

namespace ltp::nn {

namespace {
thread_local int no_grad_depth = 0;
}

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_enabled() { return no_grad_depth == 0; }

std::span<double> Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::constant(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (rows == 0 || cols == 0) throw ShapeError("tensor extents must be positive");
  if (values.size() != rows * cols) throw ShapeError("value count does not match shape");
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  return constant(rows, cols, std::vector<double>(rows * cols, 0.0));
}

Tensor Tensor::parameter(std::size_t rows, std::size_t cols, std::vector<double> values) {
  Tensor t = constant(rows, cols, std::move(values));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::from_matrix(const MatrixD& m) { return constant(m.rows, m.cols, m.data); }

double Tensor::item() const {
  if (size() != 1) throw UsageError("item() on a non-scalar tensor");
  return node_->value[0];
}

MatrixD Tensor::to_matrix() const {
  MatrixD m(rows(), cols());
  m.data = node_->value;
  return m;
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

void Tensor::backward() {
  if (!defined() || size() != 1) throw UsageError("backward() requires a scalar tensor");
  if (node_->backward_done) throw UsageError("backward() called twice on the same graph");
  node_->backward_done = true;
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of grad-requiring nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  const bool needs = grad_enabled() &&
                     std::any_of(parents.begin(), parents.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    n->requires_grad = true;
    for (auto& p : parents) n->parents.push_back(p.shared());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

// Accumulates g into p's gradient if p participates in differentiation.
template <typename F>
void accumulate_into(Node* p, F&& fill) {
  if (!p->requires_grad) return;
  fill(p->grad_buffer());
}

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& a, Fwd fwd, Bwd local_grad) {
  std::vector<double> out(a.size());
  const auto x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  Node* pa = a.node();
  return make_result(a.rows(), a.cols(), std::move(out), {a}, [pa, local_grad](Node& self) {
    accumulate_into(pa, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * local_grad(pa->value[i], self.value[i]);
    });
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  kernels::gemm_nn(m, n, k, a.value(), b.value(), out, false);
  Node* pa = a.node();
  Node* pb = b.node();
  return make_result(m, n, std::move(out), {a, b}, [pa, pb, m, n, k](Node& self) {
    accumulate_into(pa, [&](std::span<double> g) { kernels::gemm_nt(m, k, n, self.grad, pb->value, g, true); });
    accumulate_into(pb, [&](std::span<double> g) { kernels::gemm_tn(k, n, m, pa->value, self.grad, g, true); });
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n);
  kernels::gemm_nt(m, n, k, a.value(), b.value(), out, false);
  Node* pa = a.node();
  Node* pb = b.node();
  return make_result(m, n, std::move(out), {a, b}, [pa, pb, m, n, k](Node& self) {
    accumulate_into(pa, [&](std::span<double> g) { kernels::gemm_nn(m, k, n, self.grad, pb->value, g, true); });
    accumulate_into(pb, [&](std::span<double> g) { kernels::gemm_tn(n, k, m, self.grad, pa->value, g, true); });
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  Node* pa = a.node();
  Node* pb = b.node();
  return make_result(a.rows(), a.cols(), std::move(out), {a, b}, [pa, pb](Node& self) {
    for (Node* p : {pa, pb}) {
      accumulate_into(p, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  Node* pa = a.node();
  Node* pb = b.node();
  return make_result(a.rows(), a.cols(), std::move(out), {a, b}, [pa, pb](Node& self) {
    accumulate_into(pa, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    accumulate_into(pb, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  Node* pa = a.node();
  Node* pb = b.node();
  return make_result(a.rows(), a.cols(), std::move(out), {a, b}, [pa, pb](Node& self) {
    accumulate_into(pa, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    });
    accumulate_into(pb, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    });
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  Node* pa = a.node();
  Node* pb = b.node();
  return make_result(a.rows(), a.cols(), std::move(out), {a, b}, [pa, pb](Node& self) {
    accumulate_into(pa, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb->value[i];
    });
    accumulate_into(pb, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.value[i] / pb->value[i];
    });
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row must be 1 x cols");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.value().begin(), a.value().end());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += row.value()[j];
  }
  Node* pa = a.node();
  Node* pr = row.node();
  return make_result(m, n, std::move(out), {a, row}, [pa, pr, m, n](Node& self) {
    accumulate_into(pa, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    accumulate_into(pr, [&](std::span<double> g) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
      }
    });
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& a) {
  return unary(a, [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor log_floor(const Tensor& a, double floor) {
  return unary(a, [floor](double x) { return std::log(std::max(x, floor)); },
               [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

namespace {

Tensor select(const Tensor& a, const Tensor& b, bool take_min) {
  require_same_shape(a, b, take_min ? "minimum" : "maximum");
  std::vector<double> out(a.size());
  std::vector<char> from_a(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.value()[i], y = b.value()[i];
    from_a[i] = take_min ? (x <= y) : (x >= y);
    out[i] = from_a[i] ? x : y;
  }
  Node* pa = a.node();
  Node* pb = b.node();
  return make_result(a.rows(), a.cols(), std::move(out), {a, b}, [pa, pb, from_a](Node& self) {
    accumulate_into(pa, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (from_a[i]) g[i] += self.grad[i];
      }
    });
    accumulate_into(pb, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!from_a[i]) g[i] += self.grad[i];
      }
    });
  });
}

}  // namespace

Tensor minimum(const Tensor& a, const Tensor& b) { return select(a, b, true); }
Tensor maximum(const Tensor& a, const Tensor& b) { return select(a, b, false); }

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  Node* pa = a.node();
  return make_result(1, 1, {s}, {a}, [pa](Node& self) {
    accumulate_into(pa, [&](std::span<double> g) {
      for (double& v : g) v += self.grad[0];
    });
  });
}

Tensor element(const Tensor& a, std::size_t r, std::size_t c) {
  if (r >= a.rows() || c >= a.cols()) throw ShapeError("element: index out of range");
  const std::size_t idx = r * a.cols() + c;
  Node* pa = a.node();
  return make_result(1, 1, {a.value()[idx]}, {a}, [pa, idx](Node& self) {
    accumulate_into(pa, [&](std::span<double> g) { g[idx] += self.grad[0]; });
  });
}

Tensor add_all(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw ShapeError("add_all: no terms");
  std::vector<double> out(terms[0].size(), 0.0);
  for (const auto& t : terms) {
    require_same_shape(t, terms[0], "add_all");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t.value()[i];
  }
  std::vector<Node*> ps;
  for (const auto& t : terms) ps.push_back(t.node());
  return make_result(terms[0].rows(), terms[0].cols(), std::move(out), terms, [ps](Node& self) {
    for (Node* p : ps) {
      accumulate_into(p, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  kernels::softmax_rows(m, n, a.value(), out);
  Node* pa = a.node();
  return make_result(m, n, std::move(out), {a}, [pa, m, n](Node& self) {
    accumulate_into(pa, [&](std::span<double> g) {
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * self.value[i * n + j];
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.value[i * n + j] * (self.grad[i * n + j] - dot);
      }
    });
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw ShapeError("layer_norm: gamma/beta must be 1 x cols");
  }
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(m);
  kernels::normalize_rows(m, n, x.value(), eps, xhat, inv_std);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xhat[i * n + j] * gamma.value()[j] + beta.value()[j];
  }
  Node* px = x.node();
  Node* pg = gamma.node();
  Node* pb = beta.node();
  return make_result(m, n, std::move(out), {x, gamma, beta},
                     [px, pg, pb, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const auto& dy = self.grad;
                       accumulate_into(pg, [&](std::span<double> g) {
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t j = 0; j < n; ++j) g[j] += dy[i * n + j] * xhat[i * n + j];
                         }
                       });
                       accumulate_into(pb, [&](std::span<double> g) {
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t j = 0; j < n; ++j) g[j] += dy[i * n + j];
                         }
                       });
                       accumulate_into(px, [&](std::span<double> g) {
                         const double inv_n = 1.0 / static_cast<double>(n);
                         for (std::size_t i = 0; i < m; ++i) {
                           double mean_d = 0.0, mean_dx = 0.0;
                           for (std::size_t j = 0; j < n; ++j) {
                             const double d = dy[i * n + j] * pg->value[j];
                             mean_d += d;
                             mean_dx += d * xhat[i * n + j];
                           }
                           mean_d *= inv_n;
                           mean_dx *= inv_n;
                           for (std::size_t j = 0; j < n; ++j) {
                             const double d = dy[i * n + j] * pg->value[j];
                             g[i * n + j] += inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
                           }
                         }
                       });
                     });
}

// ---------------------------------------------------------------------------

namespace {

void copy_block(std::span<const double> src, std::size_t rows, std::size_t src_cols, std::size_t col0,
                std::size_t width, std::vector<double>& dst) {
  dst.resize(rows * width);
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * src_cols + col0), width,
                dst.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
}

void add_block(std::span<double> dst, std::size_t rows, std::size_t dst_cols, std::size_t col0, std::size_t width,
               const std::vector<double>& src) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < width; ++j) dst[i * dst_cols + col0 + j] += src[i * width + j];
  }
}

}  // namespace

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, MatrixD* capture) {
  const std::size_t m = q.rows(), n = k.rows(), d = q.cols(), dv = v.cols();
  if (k.cols() != d) throw ShapeError("attention: Q and K inner dimensions differ");
  if (v.rows() != n) throw ShapeError("attention: K and V lengths differ");
  if (heads == 0 || d % heads != 0 || dv % heads != 0) throw ShapeError("attention: heads must divide widths");
  const std::size_t dk = d / heads, dvh = dv / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<double> out(m * dv, 0.0);
  std::vector<double> maps(heads * m * n);  // per-head attention, kept for backward
  std::vector<double> qh, kh, vh, oh(m * dvh);
  for (std::size_t h = 0; h < heads; ++h) {
    copy_block(q.value(), m, d, h * dk, dk, qh);
    copy_block(k.value(), n, d, h * dk, dk, kh);
    copy_block(v.value(), n, dv, h * dvh, dvh, vh);
    std::span<double> a(maps.data() + h * m * n, m * n);
    kernels::gemm_nt(m, n, dk, qh, kh, a, false);
    for (double& x : a) x *= inv_sqrt;
    kernels::softmax_rows(m, n, a, a);
    kernels::gemm_nn(m, dvh, n, a, vh, oh, false);
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(oh.begin() + static_cast<std::ptrdiff_t>(i * dvh), dvh,
                  out.begin() + static_cast<std::ptrdiff_t>(i * dv + h * dvh));
    }
  }
  if (capture != nullptr) {
    *capture = MatrixD(m, n, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < m * n; ++i) capture->data[i] += maps[h * m * n + i];
    }
    for (double& x : capture->data) x /= static_cast<double>(heads);
  }

  Node* pq = q.node();
  Node* pk = k.node();
  Node* pv = v.node();
  return make_result(
      m, dv, std::move(out), {q, k, v},
      [pq, pk, pv, m, n, d, dv, dk, dvh, heads, inv_sqrt, maps = std::move(maps)](Node& self) {
        std::vector<double> qh, kh, vh, doh, da(m * n), ds(m * n), tmp;
        for (std::size_t h = 0; h < heads; ++h) {
          std::span<const double> a(maps.data() + h * m * n, m * n);
          copy_block(self.grad, m, dv, h * dvh, dvh, doh);
          copy_block(pv->value, n, dv, h * dvh, dvh, vh);
          if (pv->requires_grad) {
            tmp.assign(n * dvh, 0.0);
            kernels::gemm_tn(n, dvh, m, a, doh, tmp, false);
            add_block(pv->grad_buffer(), n, dv, h * dvh, dvh, tmp);
          }
          if (!pq->requires_grad && !pk->requires_grad) continue;
          kernels::gemm_nt(m, n, dvh, doh, vh, da, false);
          for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += da[i * n + j] * a[i * n + j];
            for (std::size_t j = 0; j < n; ++j) ds[i * n + j] = a[i * n + j] * (da[i * n + j] - dot) * inv_sqrt;
          }
          if (pq->requires_grad) {
            copy_block(pk->value, n, d, h * dk, dk, kh);
            tmp.assign(m * dk, 0.0);
            kernels::gemm_nn(m, dk, n, ds, kh, tmp, false);
            add_block(pq->grad_buffer(), m, d, h * dk, dk, tmp);
          }
          if (pk->requires_grad) {
            copy_block(pq->value, m, d, h * dk, dk, qh);
            tmp.assign(n * dk, 0.0);
            kernels::gemm_tn(n, dk, m, ds, qh, tmp, false);
            add_block(pk->grad_buffer(), n, d, h * dk, dk, tmp);
          }
        }
      });
}

}  // namespace ltp::nn
