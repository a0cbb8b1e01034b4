#include "vitdp/tape.hpp"

#include <cmath>
#include <string>

#include "vitdp/kernels.hpp"

namespace vitdp {

namespace {

template <typename T>
void acc(Tensor<T>& dst, const T* src) {
    kernels::ew_add(dst.ptr(), src, dst.ptr(), dst.numel());
}

const char* opname(int op);

template <typename T>
struct GeluConsts {
    static constexpr T c1 = T(0.7978845608028654);  // sqrt(2/pi)
    static constexpr T c2 = T(0.044715);
};

}  // namespace

template <typename T>
typename Tape<T>::Id Tape<T>::push(Node n) {
    require_finite(n.value, opname(static_cast<int>(n.op)));
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

template <typename T>
typename Tape<T>::Id Tape<T>::leaf(Tensor<T> v, bool requires_grad) {
    Node n;
    n.op = Op::leaf;
    n.requires_grad = requires_grad;
    n.value = std::move(v);
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::add(Id a, Id b) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    if (!va.same_shape(vb))
        throw ShapeError("add: shape mismatch (" + va.shape_str() + " vs " + vb.shape_str() + ")");
    Node n;
    n.op = Op::add;
    n.in0 = a;
    n.in1 = b;
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = Tensor<T>(va.shape);
    kernels::ew_add(va.ptr(), vb.ptr(), n.value.ptr(), va.numel());
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::sub(Id a, Id b) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    if (!va.same_shape(vb))
        throw ShapeError("sub: shape mismatch (" + va.shape_str() + " vs " + vb.shape_str() + ")");
    Node n;
    n.op = Op::sub;
    n.in0 = a;
    n.in1 = b;
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = Tensor<T>(va.shape);
    kernels::ew_sub(va.ptr(), vb.ptr(), n.value.ptr(), va.numel());
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::mul(Id a, Id b) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    if (!va.same_shape(vb))
        throw ShapeError("mul: shape mismatch (" + va.shape_str() + " vs " + vb.shape_str() + ")");
    Node n;
    n.op = Op::mul;
    n.in0 = a;
    n.in1 = b;
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = Tensor<T>(va.shape);
    kernels::ew_mul(va.ptr(), vb.ptr(), n.value.ptr(), va.numel());
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::scale(Id a, T c) {
    const Tensor<T>& va = value(a);
    Node n;
    n.op = Op::scale_const;
    n.in0 = a;
    n.scalar = c;
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor<T>(va.shape);
    kernels::ew_scale(va.ptr(), c, n.value.ptr(), va.numel());
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::sum_all(Id a) {
    const Tensor<T>& va = value(a);
    T s = T(0);
    for (int64_t i = 0; i < va.numel(); ++i) s += va.data[static_cast<size_t>(i)];
    Node n;
    n.op = Op::sum_all;
    n.in0 = a;
    n.requires_grad = at(a).requires_grad;
    n.value = scalar_tensor(s);
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::matmul(Id a, Id b) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    if (va.ndim() != 2 || vb.ndim() != 2)
        throw ShapeError("matmul expects 2-D tensors (got " + va.shape_str() + " and " +
                         vb.shape_str() + ")");
    if (va.dim(1) != vb.dim(0))
        throw ShapeError("matmul inner dimensions disagree: " + va.shape_str() + " * " +
                         vb.shape_str());
    Node n;
    n.op = Op::matmul;
    n.in0 = a;
    n.in1 = b;
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = Tensor<T>({va.dim(0), vb.dim(1)});
    kernels::gemm_nn(va.ptr(), vb.ptr(), n.value.ptr(), va.dim(0), va.dim(1), vb.dim(1));
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::bmm(Id a, Id b) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    if (va.ndim() != 3 || vb.ndim() != 3 || va.dim(0) != vb.dim(0) || va.dim(2) != vb.dim(1))
        throw ShapeError("bmm: incompatible shapes " + va.shape_str() + " and " + vb.shape_str());
    const int64_t bt = va.dim(0), m = va.dim(1), k = va.dim(2), nn = vb.dim(2);
    Node n;
    n.op = Op::bmm;
    n.in0 = a;
    n.in1 = b;
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = Tensor<T>({bt, m, nn});
    for (int64_t q = 0; q < bt; ++q)
        kernels::gemm_nn(va.ptr() + q * m * k, vb.ptr() + q * k * nn, n.value.ptr() + q * m * nn,
                         m, k, nn);
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::bmm_nt(Id a, Id b) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    if (va.ndim() != 3 || vb.ndim() != 3 || va.dim(0) != vb.dim(0) || va.dim(2) != vb.dim(2))
        throw ShapeError("bmm_nt: incompatible shapes " + va.shape_str() + " and " + vb.shape_str());
    const int64_t bt = va.dim(0), m = va.dim(1), k = va.dim(2), nn = vb.dim(1);
    Node n;
    n.op = Op::bmm_nt;
    n.in0 = a;
    n.in1 = b;
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = Tensor<T>({bt, m, nn});
    for (int64_t q = 0; q < bt; ++q)
        kernels::gemm_nt(va.ptr() + q * m * k, vb.ptr() + q * nn * k, n.value.ptr() + q * m * nn,
                         m, k, nn);
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::add_bias_rows(Id x, Id bias) {
    const Tensor<T>& vx = value(x);
    const Tensor<T>& vb = value(bias);
    const int64_t d = vx.last_dim();
    if (vb.numel() != d)
        throw ShapeError("add_bias_rows: bias length " + std::to_string(vb.numel()) +
                         " vs row width " + std::to_string(d));
    Node n;
    n.op = Op::add_bias_rows;
    n.in0 = x;
    n.in1 = bias;
    n.requires_grad = at(x).requires_grad || at(bias).requires_grad;
    n.value = Tensor<T>(vx.shape);
    const int64_t rows = vx.rows();
    for (int64_t r = 0; r < rows; ++r)
        kernels::ew_add(vx.ptr() + r * d, vb.ptr(), n.value.ptr() + r * d, d);
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::add_rows_cycled(Id x, Id table) {
    const Tensor<T>& vx = value(x);
    const Tensor<T>& vt = value(table);
    const int64_t d = vx.last_dim();
    if (vt.ndim() != 2 || vt.dim(1) != d || vx.rows() % vt.dim(0) != 0)
        throw ShapeError("add_rows_cycled: table " + vt.shape_str() + " does not tile " +
                         vx.shape_str());
    const int64_t s = vt.dim(0);
    Node n;
    n.op = Op::add_rows_cycled;
    n.in0 = x;
    n.in1 = table;
    n.g0 = s;
    n.requires_grad = at(x).requires_grad || at(table).requires_grad;
    n.value = Tensor<T>(vx.shape);
    const int64_t rows = vx.rows();
    for (int64_t r = 0; r < rows; ++r)
        kernels::ew_add(vx.ptr() + r * d, vt.ptr() + (r % s) * d, n.value.ptr() + r * d, d);
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::prepend_token(Id x, Id tok, int64_t groups) {
    const Tensor<T>& vx = value(x);
    const Tensor<T>& vt = value(tok);
    const int64_t d = vx.last_dim();
    if (vx.rows() % groups != 0 || vt.numel() != d)
        throw ShapeError("prepend_token: cannot split " + vx.shape_str() + " into " +
                         std::to_string(groups) + " groups with token width " +
                         std::to_string(vt.numel()));
    const int64_t body = vx.rows() / groups;  // rows per group before insertion
    const int64_t s = body + 1;
    Node n;
    n.op = Op::prepend_token;
    n.in0 = x;
    n.in1 = tok;
    n.g0 = groups;
    n.g1 = s;
    n.requires_grad = at(x).requires_grad || at(tok).requires_grad;
    n.value = Tensor<T>({groups * s, d});
    for (int64_t q = 0; q < groups; ++q) {
        T* out = n.value.ptr() + q * s * d;
        std::copy(vt.ptr(), vt.ptr() + d, out);
        std::copy(vx.ptr() + q * body * d, vx.ptr() + (q + 1) * body * d, out + d);
    }
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::take_first_row_per_group(Id x, int64_t groups) {
    const Tensor<T>& vx = value(x);
    const int64_t d = vx.last_dim();
    if (vx.rows() % groups != 0)
        throw ShapeError("take_first_row_per_group: " + vx.shape_str() + " not divisible into " +
                         std::to_string(groups) + " groups");
    const int64_t s = vx.rows() / groups;
    Node n;
    n.op = Op::take_first;
    n.in0 = x;
    n.g0 = groups;
    n.g1 = s;
    n.requires_grad = at(x).requires_grad;
    n.value = Tensor<T>({groups, d});
    for (int64_t q = 0; q < groups; ++q)
        std::copy(vx.ptr() + q * s * d, vx.ptr() + q * s * d + d, n.value.ptr() + q * d);
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::slice_cols(Id x, int64_t c0, int64_t c1) {
    const Tensor<T>& vx = value(x);
    if (vx.ndim() != 2 || c0 < 0 || c1 <= c0 || c1 > vx.dim(1))
        throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + ", " +
                         std::to_string(c1) + ") on " + vx.shape_str());
    const int64_t rows = vx.dim(0), cols = vx.dim(1), w = c1 - c0;
    Node n;
    n.op = Op::slice_cols;
    n.in0 = x;
    n.g0 = c0;
    n.g1 = c1;
    n.requires_grad = at(x).requires_grad;
    n.value = Tensor<T>({rows, w});
    for (int64_t r = 0; r < rows; ++r)
        std::copy(vx.ptr() + r * cols + c0, vx.ptr() + r * cols + c1, n.value.ptr() + r * w);
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::split_heads(Id x, int64_t groups, int64_t seq, int64_t heads) {
    const Tensor<T>& vx = value(x);
    if (vx.ndim() != 2 || vx.dim(0) != groups * seq || vx.dim(1) % heads != 0)
        throw ShapeError("split_heads: " + vx.shape_str() + " vs groups=" + std::to_string(groups) +
                         " seq=" + std::to_string(seq) + " heads=" + std::to_string(heads));
    const int64_t e = vx.dim(1) / heads;
    Node n;
    n.op = Op::split_heads;
    n.in0 = x;
    n.g0 = groups;
    n.g1 = seq;
    n.g2 = heads;
    n.requires_grad = at(x).requires_grad;
    n.value = Tensor<T>({groups * heads, seq, e});
    for (int64_t q = 0; q < groups; ++q)
        for (int64_t h = 0; h < heads; ++h)
            for (int64_t t = 0; t < seq; ++t)
                std::copy(vx.ptr() + (q * seq + t) * heads * e + h * e,
                          vx.ptr() + (q * seq + t) * heads * e + (h + 1) * e,
                          n.value.ptr() + (((q * heads + h) * seq) + t) * e);
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::merge_heads(Id x, int64_t groups, int64_t seq, int64_t heads) {
    const Tensor<T>& vx = value(x);
    if (vx.ndim() != 3 || vx.dim(0) != groups * heads || vx.dim(1) != seq)
        throw ShapeError("merge_heads: " + vx.shape_str() + " vs groups=" + std::to_string(groups) +
                         " seq=" + std::to_string(seq) + " heads=" + std::to_string(heads));
    const int64_t e = vx.dim(2);
    Node n;
    n.op = Op::merge_heads;
    n.in0 = x;
    n.g0 = groups;
    n.g1 = seq;
    n.g2 = heads;
    n.requires_grad = at(x).requires_grad;
    n.value = Tensor<T>({groups * seq, heads * e});
    for (int64_t q = 0; q < groups; ++q)
        for (int64_t h = 0; h < heads; ++h)
            for (int64_t t = 0; t < seq; ++t)
                std::copy(vx.ptr() + (((q * heads + h) * seq) + t) * e,
                          vx.ptr() + (((q * heads + h) * seq) + t + 1) * e,
                          n.value.ptr() + (q * seq + t) * heads * e + h * e);
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::softmax_rows(Id x) {
    const Tensor<T>& vx = value(x);
    const int64_t d = vx.last_dim(), rows = vx.rows();
    Node n;
    n.op = Op::softmax_rows;
    n.in0 = x;
    n.requires_grad = at(x).requires_grad;
    n.value = Tensor<T>(vx.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const T* in = vx.ptr() + r * d;
        T* out = n.value.ptr() + r * d;
        T m = in[0];
        for (int64_t j = 1; j < d; ++j) m = in[j] > m ? in[j] : m;
        T sum = T(0);
        for (int64_t j = 0; j < d; ++j) {
            out[j] = std::exp(in[j] - m);
            sum += out[j];
        }
        for (int64_t j = 0; j < d; ++j) out[j] /= sum;
    }
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::layer_norm(Id x, Id gain, Id bias, T eps) {
    const Tensor<T>& vx = value(x);
    const Tensor<T>& vg = value(gain);
    const Tensor<T>& vb = value(bias);
    const int64_t d = vx.last_dim(), rows = vx.rows();
    if (vg.numel() != d || vb.numel() != d)
        throw ShapeError("layer_norm: gain/bias length vs row width " + std::to_string(d));
    Node n;
    n.op = Op::layer_norm;
    n.in0 = x;
    n.in1 = gain;
    n.in2 = bias;
    n.scalar = eps;
    n.requires_grad = at(x).requires_grad || at(gain).requires_grad || at(bias).requires_grad;
    n.value = Tensor<T>(vx.shape);
    n.cache.resize(static_cast<size_t>(rows * d + rows));  // xhat rows then inv_std
    T* xhat = n.cache.data();
    T* inv = n.cache.data() + rows * d;
    for (int64_t r = 0; r < rows; ++r) {
        const T* in = vx.ptr() + r * d;
        T mean = T(0);
        for (int64_t j = 0; j < d; ++j) mean += in[j];
        mean /= T(d);
        T var = T(0);
        for (int64_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= T(d);
        inv[r] = T(1) / std::sqrt(var + eps);
        T* out = n.value.ptr() + r * d;
        for (int64_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (in[j] - mean) * inv[r];
            out[j] = vg.ptr()[j] * xhat[r * d + j] + vb.ptr()[j];
        }
    }
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::gelu(Id x) {
    const Tensor<T>& vx = value(x);
    Node n;
    n.op = Op::gelu;
    n.in0 = x;
    n.requires_grad = at(x).requires_grad;
    n.value = Tensor<T>(vx.shape);
    for (int64_t i = 0; i < vx.numel(); ++i) {
        const T v = vx.data[static_cast<size_t>(i)];
        const T u = GeluConsts<T>::c1 * (v + GeluConsts<T>::c2 * v * v * v);
        n.value.data[static_cast<size_t>(i)] = T(0.5) * v * (T(1) + std::tanh(u));
    }
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::cross_entropy(Id logits, std::vector<int32_t> labels) {
    const Tensor<T>& vx = value(logits);
    if (vx.ndim() != 2)
        throw ShapeError("cross_entropy expects 2-D logits, got " + vx.shape_str());
    const int64_t b = vx.dim(0), c = vx.dim(1);
    if (static_cast<int64_t>(labels.size()) != b)
        throw InputError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(b));
    for (int32_t y : labels)
        if (y < 0 || y >= c)
            throw InputError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                             std::to_string(c) + ")");
    Node n;
    n.op = Op::cross_entropy;
    n.in0 = logits;
    n.requires_grad = at(logits).requires_grad;
    n.labels = std::move(labels);
    n.cache.resize(static_cast<size_t>(b * c));  // softmax probabilities
    T total = T(0);
    for (int64_t r = 0; r < b; ++r) {
        const T* in = vx.ptr() + r * c;
        T m = in[0];
        for (int64_t j = 1; j < c; ++j) m = in[j] > m ? in[j] : m;
        T sum = T(0);
        for (int64_t j = 0; j < c; ++j) {
            n.cache[static_cast<size_t>(r * c + j)] = std::exp(in[j] - m);
            sum += n.cache[static_cast<size_t>(r * c + j)];
        }
        for (int64_t j = 0; j < c; ++j) n.cache[static_cast<size_t>(r * c + j)] /= sum;
        total += (m + std::log(sum)) - in[n.labels[static_cast<size_t>(r)]];
    }
    n.value = scalar_tensor(total / T(b));
    return push(std::move(n));
}

template <typename T>
Tensor<T>& Tape<T>::grad_buf(Id id) {
    Tensor<T>& g = grads_[static_cast<size_t>(id)];
    if (g.numel() == 0) g = Tensor<T>(at(id).value.shape);
    return g;
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Id id) {
    if (grads_.size() != nodes_.size()) grads_.resize(nodes_.size());
    return grad_buf(id);
}

template <typename T>
void Tape<T>::backward(Id loss) {
    if (value(loss).numel() != 1)
        throw UsageError("backward requires a scalar loss, got shape " +
                         value(loss).shape_str());
    grads_.assign(nodes_.size(), Tensor<T>());
    if (!at(loss).requires_grad) return;
    grad_buf(loss).data[0] = T(1);
    for (Id i = loss; i >= 0; --i) {
        if (!at(i).requires_grad) continue;
        if (grads_[static_cast<size_t>(i)].numel() == 0) continue;  // nothing flowed here
        backward_node(i);
    }
}

template <typename T>
void Tape<T>::backward_node(Id id) {
    Node& n = at(id);
    const Tensor<T>& g = grads_[static_cast<size_t>(id)];
    const bool need0 = n.in0 >= 0 && at(n.in0).requires_grad;
    const bool need1 = n.in1 >= 0 && at(n.in1).requires_grad;
    const bool need2 = n.in2 >= 0 && at(n.in2).requires_grad;

    switch (n.op) {
        case Op::leaf:
            break;
        case Op::add: {
            if (need0) acc(grad_buf(n.in0), g.ptr());
            if (need1) acc(grad_buf(n.in1), g.ptr());
            break;
        }
        case Op::sub: {
            if (need0) acc(grad_buf(n.in0), g.ptr());
            if (need1) kernels::ew_axpy(T(-1), g.ptr(), grad_buf(n.in1).ptr(), g.numel());
            break;
        }
        case Op::mul: {
            if (need0) {
                Tensor<T> t(g.shape);
                kernels::ew_mul(g.ptr(), value(n.in1).ptr(), t.ptr(), g.numel());
                acc(grad_buf(n.in0), t.ptr());
            }
            if (need1) {
                Tensor<T> t(g.shape);
                kernels::ew_mul(g.ptr(), value(n.in0).ptr(), t.ptr(), g.numel());
                acc(grad_buf(n.in1), t.ptr());
            }
            break;
        }
        case Op::scale_const: {
            if (need0) kernels::ew_axpy(n.scalar, g.ptr(), grad_buf(n.in0).ptr(), g.numel());
            break;
        }
        case Op::sum_all: {
            if (need0) {
                Tensor<T>& gx = grad_buf(n.in0);
                const T gs = g.data[0];
                for (int64_t i = 0; i < gx.numel(); ++i) gx.data[static_cast<size_t>(i)] += gs;
            }
            break;
        }
        case Op::matmul: {
            const Tensor<T>& a = value(n.in0);
            const Tensor<T>& b = value(n.in1);
            const int64_t m = a.dim(0), k = a.dim(1), nn = b.dim(1);
            if (need0) {
                Tensor<T> t({m, k});
                kernels::gemm_nt(g.ptr(), b.ptr(), t.ptr(), m, nn, k);
                acc(grad_buf(n.in0), t.ptr());
            }
            if (need1) {
                Tensor<T> t({k, nn});
                kernels::gemm_tn(a.ptr(), g.ptr(), t.ptr(), k, m, nn);
                acc(grad_buf(n.in1), t.ptr());
            }
            break;
        }
        case Op::bmm: {
            const Tensor<T>& a = value(n.in0);
            const Tensor<T>& b = value(n.in1);
            const int64_t bt = a.dim(0), m = a.dim(1), k = a.dim(2), nn = b.dim(2);
            if (need0) {
                Tensor<T> t({bt, m, k});
                for (int64_t q = 0; q < bt; ++q)
                    kernels::gemm_nt(g.ptr() + q * m * nn, b.ptr() + q * k * nn, t.ptr() + q * m * k,
                                     m, nn, k);
                acc(grad_buf(n.in0), t.ptr());
            }
            if (need1) {
                Tensor<T> t({bt, k, nn});
                for (int64_t q = 0; q < bt; ++q)
                    kernels::gemm_tn(a.ptr() + q * m * k, g.ptr() + q * m * nn, t.ptr() + q * k * nn,
                                     k, m, nn);
                acc(grad_buf(n.in1), t.ptr());
            }
            break;
        }
        case Op::bmm_nt: {
            // out = A * B^T with A {bt,m,k}, B {bt,n,k}
            const Tensor<T>& a = value(n.in0);
            const Tensor<T>& b = value(n.in1);
            const int64_t bt = a.dim(0), m = a.dim(1), k = a.dim(2), nn = b.dim(1);
            if (need0) {
                Tensor<T> t({bt, m, k});
                for (int64_t q = 0; q < bt; ++q)
                    kernels::gemm_nn(g.ptr() + q * m * nn, b.ptr() + q * nn * k, t.ptr() + q * m * k,
                                     m, nn, k);
                acc(grad_buf(n.in0), t.ptr());
            }
            if (need1) {
                Tensor<T> t({bt, nn, k});
                for (int64_t q = 0; q < bt; ++q)
                    kernels::gemm_tn(g.ptr() + q * m * nn, a.ptr() + q * m * k, t.ptr() + q * nn * k,
                                     nn, m, k);
                acc(grad_buf(n.in1), t.ptr());
            }
            break;
        }
        case Op::add_bias_rows: {
            const int64_t d = g.last_dim(), rows = g.rows();
            if (need0) acc(grad_buf(n.in0), g.ptr());
            if (need1) {
                Tensor<T>& gb = grad_buf(n.in1);
                for (int64_t r = 0; r < rows; ++r)
                    kernels::ew_add(gb.ptr(), g.ptr() + r * d, gb.ptr(), d);
            }
            break;
        }
        case Op::add_rows_cycled: {
            const int64_t d = g.last_dim(), rows = g.rows(), s = n.g0;
            if (need0) acc(grad_buf(n.in0), g.ptr());
            if (need1) {
                Tensor<T>& gt = grad_buf(n.in1);
                for (int64_t r = 0; r < rows; ++r)
                    kernels::ew_add(gt.ptr() + (r % s) * d, g.ptr() + r * d,
                                    gt.ptr() + (r % s) * d, d);
            }
            break;
        }
        case Op::prepend_token: {
            const int64_t groups = n.g0, s = n.g1, d = g.last_dim(), body = s - 1;
            if (need1) {
                Tensor<T>& gt = grad_buf(n.in1);
                for (int64_t q = 0; q < groups; ++q)
                    kernels::ew_add(gt.ptr(), g.ptr() + q * s * d, gt.ptr(), d);
            }
            if (need0) {
                Tensor<T>& gx = grad_buf(n.in0);
                for (int64_t q = 0; q < groups; ++q)
                    kernels::ew_add(gx.ptr() + q * body * d, g.ptr() + (q * s + 1) * d,
                                    gx.ptr() + q * body * d, body * d);
            }
            break;
        }
        case Op::take_first: {
            const int64_t groups = n.g0, s = n.g1, d = g.last_dim();
            if (need0) {
                Tensor<T>& gx = grad_buf(n.in0);
                for (int64_t q = 0; q < groups; ++q)
                    kernels::ew_add(gx.ptr() + q * s * d, g.ptr() + q * d, gx.ptr() + q * s * d, d);
            }
            break;
        }
        case Op::slice_cols: {
            const int64_t c0 = n.g0, w = n.g1 - n.g0;
            if (need0) {
                Tensor<T>& gx = grad_buf(n.in0);
                const int64_t cols = gx.dim(1), rows = gx.dim(0);
                for (int64_t r = 0; r < rows; ++r)
                    kernels::ew_add(gx.ptr() + r * cols + c0, g.ptr() + r * w,
                                    gx.ptr() + r * cols + c0, w);
            }
            break;
        }
        case Op::split_heads: {
            const int64_t groups = n.g0, s = n.g1, heads = n.g2, e = n.value.dim(2);
            if (need0) {
                Tensor<T>& gx = grad_buf(n.in0);
                for (int64_t q = 0; q < groups; ++q)
                    for (int64_t h = 0; h < heads; ++h)
                        for (int64_t t = 0; t < s; ++t)
                            kernels::ew_add(gx.ptr() + (q * s + t) * heads * e + h * e,
                                            g.ptr() + (((q * heads + h) * s) + t) * e,
                                            gx.ptr() + (q * s + t) * heads * e + h * e, e);
            }
            break;
        }
        case Op::merge_heads: {
            const int64_t groups = n.g0, s = n.g1, heads = n.g2;
            const int64_t e = n.value.dim(1) / heads;
            if (need0) {
                Tensor<T>& gx = grad_buf(n.in0);
                for (int64_t q = 0; q < groups; ++q)
                    for (int64_t h = 0; h < heads; ++h)
                        for (int64_t t = 0; t < s; ++t)
                            kernels::ew_add(gx.ptr() + (((q * heads + h) * s) + t) * e,
                                            g.ptr() + (q * s + t) * heads * e + h * e,
                                            gx.ptr() + (((q * heads + h) * s) + t) * e, e);
            }
            break;
        }
        case Op::softmax_rows: {
            if (need0) {
                const Tensor<T>& y = n.value;
                const int64_t d = y.last_dim(), rows = y.rows();
                Tensor<T>& gx = grad_buf(n.in0);
                for (int64_t r = 0; r < rows; ++r) {
                    const T* yr = y.ptr() + r * d;
                    const T* gr = g.ptr() + r * d;
                    T dot = T(0);
                    for (int64_t j = 0; j < d; ++j) dot += gr[j] * yr[j];
                    T* out = gx.ptr() + r * d;
                    for (int64_t j = 0; j < d; ++j) out[j] += yr[j] * (gr[j] - dot);
                }
            }
            break;
        }
        case Op::layer_norm: {
            const Tensor<T>& vg = value(n.in1);
            const int64_t d = g.last_dim(), rows = g.rows();
            const T* xhat = n.cache.data();
            const T* inv = n.cache.data() + rows * d;
            if (need0) {
                Tensor<T>& gx = grad_buf(n.in0);
                for (int64_t r = 0; r < rows; ++r) {
                    const T* gr = g.ptr() + r * d;
                    const T* xr = xhat + r * d;
                    T s1 = T(0), s2 = T(0);
                    for (int64_t j = 0; j < d; ++j) {
                        const T gy = gr[j] * vg.ptr()[j];
                        s1 += gy;
                        s2 += gy * xr[j];
                    }
                    T* out = gx.ptr() + r * d;
                    for (int64_t j = 0; j < d; ++j) {
                        const T gy = gr[j] * vg.ptr()[j];
                        out[j] += inv[r] * (gy - (s1 + xr[j] * s2) / T(d));
                    }
                }
            }
            if (need1) {
                Tensor<T>& gg = grad_buf(n.in1);
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < d; ++j)
                        gg.ptr()[j] += g.ptr()[r * d + j] * xhat[r * d + j];
            }
            if (need2) {
                Tensor<T>& gb = grad_buf(n.in2);
                for (int64_t r = 0; r < rows; ++r)
                    kernels::ew_add(gb.ptr(), g.ptr() + r * d, gb.ptr(), d);
            }
            break;
        }
        case Op::gelu: {
            if (need0) {
                const Tensor<T>& x = value(n.in0);
                Tensor<T>& gx = grad_buf(n.in0);
                for (int64_t i = 0; i < x.numel(); ++i) {
                    const T v = x.data[static_cast<size_t>(i)];
                    const T u = GeluConsts<T>::c1 * (v + GeluConsts<T>::c2 * v * v * v);
                    const T t = std::tanh(u);
                    const T du = GeluConsts<T>::c1 * (T(1) + T(3) * GeluConsts<T>::c2 * v * v);
                    const T dydx = T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * du;
                    gx.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)] * dydx;
                }
            }
            break;
        }
        case Op::cross_entropy: {
            if (need0) {
                const Tensor<T>& logits = value(n.in0);
                const int64_t b = logits.dim(0), c = logits.dim(1);
                Tensor<T>& gx = grad_buf(n.in0);
                const T gs = g.data[0] / T(b);
                for (int64_t r = 0; r < b; ++r) {
                    const T* p = n.cache.data() + r * c;
                    T* out = gx.ptr() + r * c;
                    const int64_t y = n.labels[static_cast<size_t>(r)];
                    for (int64_t j = 0; j < c; ++j)
                        out[j] += gs * (p[j] - (j == y ? T(1) : T(0)));
                }
            }
            break;
        }
    }
}

template <typename T>
void Tape<T>::reset() {
    nodes_.clear();
    grads_.clear();
}

namespace {
const char* opname(int op) {
    static const char* names[] = {
        "leaf",          "add",          "sub",           "mul",        "scale",
        "sum_all",       "matmul",       "bmm",           "bmm_nt",     "add_bias_rows",
        "add_rows_cycled", "prepend_token", "take_first", "slice_cols", "split_heads",
        "merge_heads",   "softmax",      "layer_norm",    "gelu",       "cross_entropy",
    };
    return names[op];
}
}  // namespace

template class Tape<float>;
template class Tape<double>;

}  // namespace vitdp
