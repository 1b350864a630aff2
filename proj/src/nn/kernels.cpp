#include "ltp/nn/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

namespace ltp::nn::kernels {

namespace serial {

// Same per-element operation order as par:: so results agree bit for bit.

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = s;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, CSpan in, MSpan out) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = in[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, in[r * cols + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out[r * cols + j] = std::exp(in[r * cols + j] - mx);
      sum += out[r * cols + j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] *= inv;
  }
}

void normalize_rows(std::size_t rows, std::size_t cols, CSpan in, double eps, MSpan out, MSpan inv_std) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += in[r * cols + j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double dv = in[r * cols + j] - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = (in[r * cols + j] - mean) * is;
  }
}

}  // namespace serial

namespace par {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;
}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate) {
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* ci = cp + i * n;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ap[i * k + p];
      const double* brow = bp + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate) {
  // Transpose B once so the inner loop streams contiguous memory.
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_nn(m, n, k, a, bt, c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate) {
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* ci = cp + i * n;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double api = ap[p * m + i];
      const double* brow = bp + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * brow[j];
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, CSpan in, MSpan out) {
  const auto nr = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::ptrdiff_t rr = 0; rr < nr; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const double* x = in.data() + r * cols;
    double* y = out.data() + r * cols;
    double mx = x[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    const double inv = 1.0 / sum;
#pragma omp simd
    for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
  }
}

void normalize_rows(std::size_t rows, std::size_t cols, CSpan in, double eps, MSpan out, MSpan inv_std) {
  const auto nr = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::ptrdiff_t rr = 0; rr < nr; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const double* x = in.data() + r * cols;
    double* y = out.data() + r * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += x[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
#pragma omp simd
    for (std::size_t j = 0; j < cols; ++j) y[j] = (x[j] - mean) * is;
  }
}

}  // namespace par

namespace {
std::atomic<Backend> g_backend{Backend::kParallel};
}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

#define LTP_DISPATCH(fn, ...) \
  (backend() == Backend::kSerial ? serial::fn(__VA_ARGS__) : par::fn(__VA_ARGS__))

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate) {
  LTP_DISPATCH(gemm_nn, m, n, k, a, b, c, accumulate);
}
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate) {
  LTP_DISPATCH(gemm_nt, m, n, k, a, b, c, accumulate);
}
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate) {
  LTP_DISPATCH(gemm_tn, m, n, k, a, b, c, accumulate);
}
void softmax_rows(std::size_t rows, std::size_t cols, CSpan in, MSpan out) {
  LTP_DISPATCH(softmax_rows, rows, cols, in, out);
}
void normalize_rows(std::size_t rows, std::size_t cols, CSpan in, double eps, MSpan out, MSpan inv_std) {
  LTP_DISPATCH(normalize_rows, rows, cols, in, eps, out, inv_std);
}

#undef LTP_DISPATCH

}  // namespace ltp::nn::kernels
