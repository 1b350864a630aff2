#pragma once

#include <cstddef>
#include <span>

// Dense row-major kernels used by the autodiff core.
//
// Two implementations share one signature set:
//   serial::  textbook loops, kept as the reference for tests and benchmarks;
//   par::     OpenMP-parallel over output rows with vectorizable inner loops.
// In par:: every output element is produced by exactly one thread and reduces
// over the inner dimension in ascending order, so results do not depend on the
// thread count.
namespace ltp::nn::kernels {

using CSpan = std::span<const double>;
using MSpan = std::span<double>;

namespace serial {
// C (+)= A * B; A: m x k, B: k x n, C: m x n
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate);
// C (+)= A * B^T; A: m x k, B: n x k
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate);
// C (+)= A^T * B; A: k x m, B: k x n
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate);
// Row-wise softmax; `in` may alias `out`.
void softmax_rows(std::size_t rows, std::size_t cols, CSpan in, MSpan out);
// Row-wise standardization (no affine). Also returns 1/sigma per row.
void normalize_rows(std::size_t rows, std::size_t cols, CSpan in, double eps, MSpan out, MSpan inv_std);
}  // namespace serial

namespace par {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate);
void softmax_rows(std::size_t rows, std::size_t cols, CSpan in, MSpan out);
void normalize_rows(std::size_t rows, std::size_t cols, CSpan in, double eps, MSpan out, MSpan inv_std);
}  // namespace par

// Process-wide switch consulted by the dispatching overloads below; defaults
// to the parallel kernels.
enum class Backend { kSerial, kParallel };
void set_backend(Backend backend);
Backend backend();

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, CSpan a, CSpan b, MSpan c, bool accumulate);
void softmax_rows(std::size_t rows, std::size_t cols, CSpan in, MSpan out);
void normalize_rows(std::size_t rows, std::size_t cols, CSpan in, double eps, MSpan out, MSpan inv_std);

}  // namespace ltp::nn::kernels
