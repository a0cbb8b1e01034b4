// AVX2 variants. Compiled with -mavx2 only; callers go through the runtime
// dispatch in kernels.cpp so this code never runs on CPUs without AVX2.
//
// Bit-exactness contract with the scalar reference: identical per-element
// operation order (matmul accumulates k ascending), separate mul and add
// (no FMA intrinsics), and -ffp-contract=off so the compiler cannot fuse.

#include "vitdp/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

namespace vitdp::kernels::avx2 {

void gemm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        int64_t j = 0;
        // 4 accumulator vectors = 32 output columns held in registers.
        for (; j + 32 <= n; j += 32) {
            __m256 acc0 = _mm256_setzero_ps();
            __m256 acc1 = _mm256_setzero_ps();
            __m256 acc2 = _mm256_setzero_ps();
            __m256 acc3 = _mm256_setzero_ps();
            for (int64_t p = 0; p < k; ++p) {
                const __m256 va = _mm256_set1_ps(arow[p]);
                const float* brow = b + p * n + j;
                acc0 = _mm256_add_ps(acc0, _mm256_mul_ps(va, _mm256_loadu_ps(brow)));
                acc1 = _mm256_add_ps(acc1, _mm256_mul_ps(va, _mm256_loadu_ps(brow + 8)));
                acc2 = _mm256_add_ps(acc2, _mm256_mul_ps(va, _mm256_loadu_ps(brow + 16)));
                acc3 = _mm256_add_ps(acc3, _mm256_mul_ps(va, _mm256_loadu_ps(brow + 24)));
            }
            _mm256_storeu_ps(crow + j, acc0);
            _mm256_storeu_ps(crow + j + 8, acc1);
            _mm256_storeu_ps(crow + j + 16, acc2);
            _mm256_storeu_ps(crow + j + 24, acc3);
        }
        for (; j + 8 <= n; j += 8) {
            __m256 acc = _mm256_setzero_ps();
            for (int64_t p = 0; p < k; ++p) {
                const __m256 va = _mm256_set1_ps(arow[p]);
                acc = _mm256_add_ps(acc, _mm256_mul_ps(va, _mm256_loadu_ps(b + p * n + j)));
            }
            _mm256_storeu_ps(crow + j, acc);
        }
        for (; j < n; ++j) {
            float acc = 0.0f;
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * b[p * n + j];
            crow[j] = acc;
        }
    }
}

void ew_add(const float* a, const float* b, float* out, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void ew_sub(const float* a, const float* b, float* out, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void ew_mul(const float* a, const float* b, float* out, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void ew_scale(const float* a, float c, float* out, int64_t n) {
    const __m256 vc = _mm256_set1_ps(c);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), vc));
    for (; i < n; ++i) out[i] = a[i] * c;
}

void ew_axpy(float a, const float* x, float* y, int64_t n) {
    const __m256 va = _mm256_set1_ps(a);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 prod = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

}  // namespace vitdp::kernels::avx2

#else  // non-x86: dispatch never selects avx2, but the symbols must link

namespace vitdp::kernels::avx2 {

void gemm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    ref::gemm_nn(a, b, c, m, k, n);
}
void ew_add(const float* a, const float* b, float* out, int64_t n) { ref::ew_add(a, b, out, n); }
void ew_sub(const float* a, const float* b, float* out, int64_t n) { ref::ew_sub(a, b, out, n); }
void ew_mul(const float* a, const float* b, float* out, int64_t n) { ref::ew_mul(a, b, out, n); }
void ew_scale(const float* a, float c, float* out, int64_t n) { ref::ew_scale(a, c, out, n); }
void ew_axpy(float a, const float* x, float* y, int64_t n) { ref::ew_axpy(a, x, y, n); }

}  // namespace vitdp::kernels::avx2

#endif
