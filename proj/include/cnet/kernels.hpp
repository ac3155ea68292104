#pragma once

#include <cstddef>

// Dense row-major kernels used by the autodiff graph.
//
// Each kernel exists twice: a serial reference in cnet::kernels::serial and
// an OpenMP version in cnet::kernels::omp. Both accumulate every output
// element in the same order, so their results are bit-identical; the
// OpenMP versions only partition the outer loop. The unqualified entry
// points dispatch to OpenMP above a work threshold when not already inside
// a parallel region.

namespace cnet::kernels {

namespace serial {

// y = A x, A is m x n.
void gemv(const double* a, std::size_t m, std::size_t n, const double* x,
          double* y);
// y += A^T x, A is m x n, y has n entries.
void gemv_t_acc(const double* a, std::size_t m, std::size_t n, const double* x,
                double* y);
// A += x y^T, A is m x n.
void ger_acc(double* a, std::size_t m, std::size_t n, const double* x,
             const double* y);
// C = A B (A m x k, B k x n) or C = A B^T (B n x k) when transpose_b.
void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool transpose_b);
// C += A^T B with A m x k, B m x n, C k x n.
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n);

}  // namespace serial

namespace omp {

void gemv(const double* a, std::size_t m, std::size_t n, const double* x,
          double* y);
void gemv_t_acc(const double* a, std::size_t m, std::size_t n, const double* x,
                double* y);
void ger_acc(double* a, std::size_t m, std::size_t n, const double* x,
             const double* y);
void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool transpose_b);
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n);

}  // namespace omp

// Multiply-adds below which the dispatcher stays serial.
inline constexpr std::size_t kParallelThreshold = 1 << 16;

void gemv(const double* a, std::size_t m, std::size_t n, const double* x,
          double* y);
void gemv_t_acc(const double* a, std::size_t m, std::size_t n, const double* x,
                double* y);
void ger_acc(double* a, std::size_t m, std::size_t n, const double* x,
             const double* y);
void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool transpose_b);
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n);

}  // namespace cnet::kernels
