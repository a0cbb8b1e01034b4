#include "vitdp/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace vitdp::kernels {

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

const char* backend_name(Backend b) {
    return b == Backend::avx2 ? "avx2" : "scalar";
}

namespace {

Backend resolve_from_env() {
    const char* env = std::getenv("VITDP_KERNELS");
    if (env != nullptr && std::strlen(env) > 0) {
        std::string s(env);
        if (s == "scalar") return Backend::scalar;
        if (s == "avx2") {
            if (!avx2_supported())
                throw std::runtime_error("VITDP_KERNELS=avx2 but the CPU lacks AVX2");
            return Backend::avx2;
        }
        if (s != "auto")
            throw std::runtime_error("VITDP_KERNELS must be scalar, avx2 or auto (got '" + s + "')");
    }
    return avx2_supported() ? Backend::avx2 : Backend::scalar;
}

std::atomic<int> g_backend{-1};

}  // namespace

Backend active_backend() {
    int b = g_backend.load(std::memory_order_relaxed);
    if (b < 0) {
        b = static_cast<int>(resolve_from_env());
        g_backend.store(b, std::memory_order_relaxed);
    }
    return static_cast<Backend>(b);
}

void force_backend(Backend b) {
    if (b == Backend::avx2 && !avx2_supported())
        throw std::runtime_error("cannot force avx2 backend: CPU lacks AVX2");
    g_backend.store(static_cast<int>(b), std::memory_order_relaxed);
}

void gemm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    if (active_backend() == Backend::avx2)
        avx2::gemm_nn(a, b, c, m, k, n);
    else
        ref::gemm_nn(a, b, c, m, k, n);
}

void ew_add(const float* a, const float* b, float* out, int64_t n) {
    if (active_backend() == Backend::avx2)
        avx2::ew_add(a, b, out, n);
    else
        ref::ew_add(a, b, out, n);
}

void ew_sub(const float* a, const float* b, float* out, int64_t n) {
    if (active_backend() == Backend::avx2)
        avx2::ew_sub(a, b, out, n);
    else
        ref::ew_sub(a, b, out, n);
}

void ew_mul(const float* a, const float* b, float* out, int64_t n) {
    if (active_backend() == Backend::avx2)
        avx2::ew_mul(a, b, out, n);
    else
        ref::ew_mul(a, b, out, n);
}

void ew_scale(const float* a, float c, float* out, int64_t n) {
    if (active_backend() == Backend::avx2)
        avx2::ew_scale(a, c, out, n);
    else
        ref::ew_scale(a, c, out, n);
}

void ew_axpy(float a, const float* x, float* y, int64_t n) {
    if (active_backend() == Backend::avx2)
        avx2::ew_axpy(a, x, y, n);
    else
        ref::ew_axpy(a, x, y, n);
}

}  // namespace vitdp::kernels
