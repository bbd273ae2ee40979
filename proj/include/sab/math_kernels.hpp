#pragma once

#include <cstddef>

namespace sab::kern {

// Elementwise nonlinearities over contiguous buffers. Backed by libmvec's
// vector tanh/exp where available (~2 ulp of libm); scalar libm otherwise.
// Every caller goes through these so train and eval paths share numerics.
void vtanh(const double* x, double* y, std::size_t n);
void vsigmoid(const double* x, double* y, std::size_t n);
void vrelu(const double* x, double* y, std::size_t n);

// y[i] += a * x[i]
void axpy(std::size_t n, double a, const double* x, double* y);

// Elementwise binary/unary forms shared by the tape forward and the no-tape
// eval path (keeps the two bitwise identical).
void vadd(const double* a, const double* b, double* y, std::size_t n);
void vsub(const double* a, const double* b, double* y, std::size_t n);
void vmul(const double* a, const double* b, double* y, std::size_t n);
void vscale(const double* x, double factor, double* y, std::size_t n);
// y[r,c] = x[r,c] + bias[r]
void add_bias_rows(const double* x, const double* bias, double* y, int rows, int cols);

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
// A is (M x K) after op, B is (K x N) after op, C is (M x N).
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc);

// Pins the BLAS backend to one thread; call once at startup. Keeps runs
// deterministic on machines where the default is a thread pool.
void pin_blas_single_thread();

}  // namespace sab::kern
