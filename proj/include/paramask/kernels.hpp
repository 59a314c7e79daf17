#pragma once

#include <cstddef>

// Dense row-major compute kernels behind the autodiff primitives.
//
// Every kernel exists twice: a plain serial version under kern::serial (the
// reference the tests and the benchmark compare against) and an OpenMP
// version under kern::omp. Parallelism is always over output elements, each
// produced by exactly one thread with a fixed summation order, so the two
// paths return bitwise-identical results. The unqualified wrappers dispatch
// to the OpenMP path when the problem is large enough to pay for it.

namespace paramask::kern {

namespace serial {

// c[m x n] = a[m x k] * b[k x n]           (+= when accumulate)
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// c[m x n] = a[p x m]^T * b[p x n]
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t p, std::size_t n, bool accumulate = false);

// Row-wise softmax with max subtraction.
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);

void sigmoid(const double* x, double* y, std::size_t n);

}  // namespace serial

namespace omp {

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t p, std::size_t n, bool accumulate = false);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void sigmoid(const double* x, double* y, std::size_t n);

}  // namespace omp

// Number of threads the OpenMP path would use (1 when built without OpenMP).
int max_threads();

// Dispatching wrappers used by the autodiff engine.
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t p, std::size_t n, bool accumulate = false);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void sigmoid(const double* x, double* y, std::size_t n);

}  // namespace paramask::kern
