#pragma once

#include <cstdint>
#include <vector>

namespace vitdp::kernels {

// Numeric inner loops used by the tensor layer. Every kernel exists as a
// scalar reference (namespace ref, templated, also the double-precision path)
// and, for float, an AVX2 variant selected at runtime. The two variants are
// bit-identical by construction: the AVX2 code keeps the same per-element
// operation order (k ascending in matmul, one mul + one add per term, no FMA)
// and the whole project builds with -ffp-contract=off.

enum class Backend { scalar, avx2 };

// Resolved once per process: VITDP_KERNELS=scalar|avx2|auto, else best
// supported. Forcing an unsupported backend throws.
Backend active_backend();
void force_backend(Backend b);
const char* backend_name(Backend b);
bool avx2_supported();

namespace ref {

// C[m x n] = A[m x k] * B[k x n], row-major, C overwritten.
// Each element accumulates left-to-right over k; this order is the contract
// every other matmul path must reproduce exactly.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * b[p * n + j];
            crow[j] = acc;
        }
    }
}

template <typename T>
void transpose(const T* src, T* dst, int64_t rows, int64_t cols) {
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

template <typename T>
void ew_add(const T* a, const T* b, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void ew_sub(const T* a, const T* b, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void ew_mul(const T* a, const T* b, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void ew_scale(const T* a, T c, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * c;
}

// y += a * x
template <typename T>
void ew_axpy(T a, const T* x, T* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Index of the first NaN/Inf, or -1 when all finite.
template <typename T>
int64_t find_nonfinite(const T* p, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        const T v = p[i];
        if (!(v - v == T(0))) return i;
    }
    return -1;
}

}  // namespace ref

namespace avx2 {
void gemm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);
void ew_add(const float* a, const float* b, float* out, int64_t n);
void ew_sub(const float* a, const float* b, float* out, int64_t n);
void ew_mul(const float* a, const float* b, float* out, int64_t n);
void ew_scale(const float* a, float c, float* out, int64_t n);
void ew_axpy(float a, const float* x, float* y, int64_t n);
}  // namespace avx2

// Dispatched float entry points.
void gemm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);
void ew_add(const float* a, const float* b, float* out, int64_t n);
void ew_sub(const float* a, const float* b, float* out, int64_t n);
void ew_mul(const float* a, const float* b, float* out, int64_t n);
void ew_scale(const float* a, float c, float* out, int64_t n);
void ew_axpy(float a, const float* x, float* y, int64_t n);

// Double always takes the reference path; training runs in float.
inline void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    ref::gemm_nn(a, b, c, m, k, n);
}
inline void ew_add(const double* a, const double* b, double* out, int64_t n) { ref::ew_add(a, b, out, n); }
inline void ew_sub(const double* a, const double* b, double* out, int64_t n) { ref::ew_sub(a, b, out, n); }
inline void ew_mul(const double* a, const double* b, double* out, int64_t n) { ref::ew_mul(a, b, out, n); }
inline void ew_scale(const double* a, double c, double* out, int64_t n) { ref::ew_scale(a, c, out, n); }
inline void ew_axpy(double a, const double* x, double* y, int64_t n) { ref::ew_axpy(a, x, y, n); }

// C[m x n] = A[m x k] * B[n x k]^T. Transposing B first (exact data movement)
// lets both backends reuse gemm_nn and keeps the k-ascending order.
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    std::vector<T> bt(static_cast<size_t>(k) * n);
    ref::transpose(b, bt.data(), n, k);
    gemm_nn(a, bt.data(), c, m, k, n);
}

// C[m x n] = A[k x m]^T * B[k x n].
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    std::vector<T> at(static_cast<size_t>(m) * k);
    ref::transpose(a, at.data(), k, m);
    gemm_nn(at.data(), b, c, m, k, n);
}

}  // namespace vitdp::kernels
