#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "vitdp/errors.hpp"

namespace vitdp {

// Dense row-major array. float carries training, double the verification
// path; shapes are ordinary int64 dims.
template <typename T>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), T(0));
    }

    Tensor(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != static_cast<int64_t>(data.size()))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape (" + shape_str() + ")");
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d <= 0) throw ShapeError("non-positive dimension " + std::to_string(d));
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t ndim() const { return static_cast<int64_t>(shape.size()); }
    int64_t dim(int64_t i) const { return shape[static_cast<size_t>(i)]; }

    // Rows x cols view of the last dimension; scalars count as 1 x 1.
    int64_t last_dim() const { return shape.empty() ? 1 : shape.back(); }
    int64_t rows() const { return last_dim() == 0 ? 0 : numel() / last_dim(); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s;
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s.empty() ? "scalar" : s;
    }
};

template <typename T>
Tensor<T> scalar_tensor(T v) {
    return Tensor<T>({1}, {v});
}

// Throws NumericError if any element is NaN/Inf; `where` names the producer.
template <typename T>
void require_finite(const Tensor<T>& t, const char* where);

// Elementwise ops on matching shapes (ShapeError otherwise), plus scalar
// broadcast forms. These are the non-tape entry points; the tape has its own.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> add(const Tensor<T>& a, T c);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, T c);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, T c);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c);

// matmul on 2-D tensors; inner dims must agree.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

extern template struct Tensor<float>;
extern template struct Tensor<double>;

}  // namespace vitdp
