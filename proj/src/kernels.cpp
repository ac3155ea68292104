#include "cnet/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdint>

namespace cnet::kernels {

namespace serial {

void gemv(const double* a, std::size_t m, std::size_t n, const double* x,
          double* y) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void gemv_t_acc(const double* a, std::size_t m, std::size_t n, const double* x,
                double* y) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a + i * n;
    const double xi = x[i];
    for (std::size_t j = 0; j < n; ++j) y[j] += row[j] * xi;
  }
}

void ger_acc(double* a, std::size_t m, std::size_t n, const double* x,
             const double* y) {
  for (std::size_t i = 0; i < m; ++i) {
    double* row = a + i * n;
    const double xi = x[i];
    for (std::size_t j = 0; j < n; ++j) row[j] += xi * y[j];
  }
}

void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool transpose_b) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      if (transpose_b) {
        const double* brow = b + j * k;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      } else {
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p * n + j];
      }
      c[i * n + j] = acc;
    }
  }
}

void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      double* crow = c + p * n;
      const double* brow = b + i * n;
      for (std::size_t q = 0; q < n; ++q) crow[q] += aip * brow[q];
    }
  }
}

}  // namespace serial

namespace omp {

void gemv(const double* a, std::size_t m, std::size_t n, const double* x,
          double* y) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* row = a + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void gemv_t_acc(const double* a, std::size_t m, std::size_t n, const double* x,
                double* y) {
  // Columns are split into blocks; inside a block the row loop stays outer so
  // each y[j] sees the same addition order as the serial kernel.
  constexpr std::int64_t kBlock = 64;
  const auto blocks = static_cast<std::int64_t>((n + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::size_t lo = static_cast<std::size_t>(blk * kBlock);
    const std::size_t hi = std::min(n, lo + kBlock);
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = a + i * n;
      const double xi = x[i];
      for (std::size_t j = lo; j < hi; ++j) y[j] += row[j] * xi;
    }
  }
}

void ger_acc(double* a, std::size_t m, std::size_t n, const double* x,
             const double* y) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    double* row = a + i * n;
    const double xi = x[i];
    for (std::size_t j = 0; j < n; ++j) row[j] += xi * y[j];
  }
}

void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool transpose_b) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      if (transpose_b) {
        const double* brow = b + j * k;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      } else {
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p * n + j];
      }
      c[i * n + j] = acc;
    }
  }
}

void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  const auto out_rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < out_rows; ++p) {
    double* crow = c + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double aip = a[i * k + p];
      const double* brow = b + i * n;
      for (std::size_t q = 0; q < n; ++q) crow[q] += aip * brow[q];
    }
  }
}

}  // namespace omp

namespace {

bool go_parallel(std::size_t work) {
  return work >= kParallelThreshold && !omp_in_parallel() &&
         omp_get_max_threads() > 1;
}

}  // namespace

void gemv(const double* a, std::size_t m, std::size_t n, const double* x,
          double* y) {
  go_parallel(m * n) ? omp::gemv(a, m, n, x, y) : serial::gemv(a, m, n, x, y);
}

void gemv_t_acc(const double* a, std::size_t m, std::size_t n, const double* x,
                double* y) {
  go_parallel(m * n) ? omp::gemv_t_acc(a, m, n, x, y)
                     : serial::gemv_t_acc(a, m, n, x, y);
}

void ger_acc(double* a, std::size_t m, std::size_t n, const double* x,
             const double* y) {
  go_parallel(m * n) ? omp::ger_acc(a, m, n, x, y)
                     : serial::ger_acc(a, m, n, x, y);
}

void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool transpose_b) {
  go_parallel(m * k * n) ? omp::gemm(a, b, c, m, k, n, transpose_b)
                         : serial::gemm(a, b, c, m, k, n, transpose_b);
}

void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  go_parallel(m * k * n) ? omp::gemm_tn_acc(a, b, c, m, k, n)
                         : serial::gemm_tn_acc(a, b, c, m, k, n);
}

}  // namespace cnet::kernels
