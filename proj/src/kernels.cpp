#include "paramask/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace paramask::kern {

namespace serial {

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t l = 0; l < k; ++l) sum += a[i * k + l] * b[l * n + j];
      if (accumulate)
        c[i * n + j] += sum;
      else
        c[i * n + j] = sum;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t l = 0; l < k; ++l) sum += a[i * k + l] * b[j * k + l];
      if (accumulate)
        c[i * n + j] += sum;
      else
        c[i * n + j] = sum;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t p, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t l = 0; l < p; ++l) sum += a[l * m + i] * b[l * n + j];
      if (accumulate)
        c[i * n + j] += sum;
      else
        c[i * n + j] = sum;
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xi = x + i * cols;
    double* yi = y + i * cols;
    double mx = xi[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yi[j] /= sum;
  }
}

void sigmoid(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

}  // namespace serial

namespace omp {

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t l = 0; l < k; ++l) sum += a[i * k + l] * b[l * n + j];
      if (accumulate)
        c[i * n + j] += sum;
      else
        c[i * n + j] = sum;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t l = 0; l < k; ++l) sum += a[i * k + l] * b[j * k + l];
      if (accumulate)
        c[i * n + j] += sum;
      else
        c[i * n + j] = sum;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t p, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t l = 0; l < p; ++l) sum += a[l * m + i] * b[l * n + j];
      if (accumulate)
        c[i * n + j] += sum;
      else
        c[i * n + j] = sum;
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < rows; ++i) {
    serial::softmax_rows(x + i * cols, y + i * cols, 1, cols);
  }
}

void sigmoid(const double* x, double* y, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

}  // namespace omp

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {
// Work below this many flops is not worth a parallel region.
constexpr std::size_t kMatmulCutoff = 1u << 15;
constexpr std::size_t kMapCutoff = 1u << 14;

bool go_parallel(std::size_t work, std::size_t cutoff) {
  return max_threads() > 1 && work >= cutoff;
}
}  // namespace

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (go_parallel(m * k * n, kMatmulCutoff))
    omp::matmul_nn(a, b, c, m, k, n, accumulate);
  else
    serial::matmul_nn(a, b, c, m, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (go_parallel(m * k * n, kMatmulCutoff))
    omp::matmul_nt(a, b, c, m, k, n, accumulate);
  else
    serial::matmul_nt(a, b, c, m, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t p, std::size_t n, bool accumulate) {
  if (go_parallel(m * p * n, kMatmulCutoff))
    omp::matmul_tn(a, b, c, m, p, n, accumulate);
  else
    serial::matmul_tn(a, b, c, m, p, n, accumulate);
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  if (go_parallel(rows * cols, kMapCutoff))
    omp::softmax_rows(x, y, rows, cols);
  else
    serial::softmax_rows(x, y, rows, cols);
}

void sigmoid(const double* x, double* y, std::size_t n) {
  if (go_parallel(n, kMapCutoff))
    omp::sigmoid(x, y, n);
  else
    serial::sigmoid(x, y, n);
}

}  // namespace paramask::kern
