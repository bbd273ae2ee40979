#include "sab/math_kernels.hpp"

#include <cblas.h>
#include <cmath>

#if defined(SAB_HAVE_LIBMVEC) && defined(__AVX512F__)
#include <immintrin.h>
extern "C" {
__m512d _ZGVeN8v_tanh(__m512d);
__m512d _ZGVeN8v_exp(__m512d);
}
#define SAB_VEC_WIDTH 8
#elif defined(SAB_HAVE_LIBMVEC) && defined(__AVX2__)
#include <immintrin.h>
extern "C" {
__m256d _ZGVdN4v_tanh(__m256d);
__m256d _ZGVdN4v_exp(__m256d);
}
#define SAB_VEC_WIDTH 4
#endif

namespace sab::kern {

void vtanh(const double* x, double* y, std::size_t n) {
    std::size_t i = 0;
#if SAB_VEC_WIDTH == 8
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(y + i, _ZGVeN8v_tanh(_mm512_loadu_pd(x + i)));
#elif SAB_VEC_WIDTH == 4
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _ZGVdN4v_tanh(_mm256_loadu_pd(x + i)));
#endif
    for (; i < n; ++i) y[i] = std::tanh(x[i]);
}

void vsigmoid(const double* x, double* y, std::size_t n) {
    // 1 / (1 + exp(-x)); exp overflow to +inf gives the correct 0 limit
    std::size_t i = 0;
#if SAB_VEC_WIDTH == 8
    const __m512d one = _mm512_set1_pd(1.0);
    const __m512d neg = _mm512_set1_pd(-0.0);
    for (; i + 8 <= n; i += 8) {
        __m512d v = _mm512_xor_pd(_mm512_loadu_pd(x + i), neg);
        __m512d e = _ZGVeN8v_exp(v);
        _mm512_storeu_pd(y + i, _mm512_div_pd(one, _mm512_add_pd(one, e)));
    }
#elif SAB_VEC_WIDTH == 4
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d neg = _mm256_set1_pd(-0.0);
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_xor_pd(_mm256_loadu_pd(x + i), neg);
        __m256d e = _ZGVdN4v_exp(v);
        _mm256_storeu_pd(y + i, _mm256_div_pd(one, _mm256_add_pd(one, e)));
    }
#endif
    for (; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void vrelu(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void axpy(std::size_t n, double a, const double* x, double* y) {
    cblas_daxpy(int(n), a, x, 1, y, 1);
}

void vadd(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void vsub(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void vmul(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void vscale(const double* x, double factor, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = factor * x[i];
}

void add_bias_rows(const double* x, const double* bias, double* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double b = bias[r];
        const double* src = x + std::size_t(r) * cols;
        double* dst = y + std::size_t(r) * cols;
        for (int c = 0; c < cols; ++c) dst[c] = src[c] + b;
    }
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
                ldc);
}

void pin_blas_single_thread() {
    openblas_set_num_threads(1);
}

}  // namespace sab::kern
