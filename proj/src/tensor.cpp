#include "vitdp/tensor.hpp"

#include "vitdp/kernels.hpp"

namespace vitdp {

template <typename T>
void require_finite(const Tensor<T>& t, const char* where) {
    int64_t bad = kernels::ref::find_nonfinite(t.ptr(), t.numel());
    if (bad >= 0)
        throw NumericError(std::string(where) + " produced a non-finite value at flat index " +
                           std::to_string(bad));
}

namespace {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch (" + a.shape_str() + " vs " +
                         b.shape_str() + ")");
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    Tensor<T> out(a.shape);
    kernels::ew_add(a.ptr(), b.ptr(), out.ptr(), a.numel());
    require_finite(out, "add");
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "sub");
    Tensor<T> out(a.shape);
    kernels::ew_sub(a.ptr(), b.ptr(), out.ptr(), a.numel());
    require_finite(out, "sub");
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mul");
    Tensor<T> out(a.shape);
    kernels::ew_mul(a.ptr(), b.ptr(), out.ptr(), a.numel());
    require_finite(out, "mul");
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, T c) {
    Tensor<T> out(a.shape);
    for (int64_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] + c;
    require_finite(out, "add");
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, T c) {
    return add(a, -c);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, T c) {
    return scale(a, c);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    Tensor<T> out(a.shape);
    kernels::ew_scale(a.ptr(), c, out.ptr(), a.numel());
    require_finite(out, "scale");
    return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("matmul expects 2-D tensors (got " + a.shape_str() + " and " +
                         b.shape_str() + ")");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul inner dimensions disagree: " + a.shape_str() + " * " +
                         b.shape_str());
    Tensor<T> out({a.dim(0), b.dim(1)});
    kernels::gemm_nn(a.ptr(), b.ptr(), out.ptr(), a.dim(0), a.dim(1), b.dim(1));
    require_finite(out, "matmul");
    return out;
}

template struct Tensor<float>;
template struct Tensor<double>;

#define VITDP_INSTANTIATE(T)                                             \
    template void require_finite<T>(const Tensor<T>&, const char*);      \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);       \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);       \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);       \
    template Tensor<T> add<T>(const Tensor<T>&, T);                      \
    template Tensor<T> sub<T>(const Tensor<T>&, T);                      \
    template Tensor<T> mul<T>(const Tensor<T>&, T);                      \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                    \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);

VITDP_INSTANTIATE(float)
VITDP_INSTANTIATE(double)
#undef VITDP_INSTANTIATE

}  // namespace vitdp
