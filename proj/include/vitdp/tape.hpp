#pragma once

#include <cstdint>
#include <vector>

#include "vitdp/tensor.hpp"

namespace vitdp {

// Reverse-mode autodiff over a recorded op list. Ops append nodes in
// topological order; backward() walks them once in reverse. Node ids are
// indices into the tape, so the DAG property holds by construction.
//
// The op set is exactly what the transformer forward needs plus the
// elementwise basics; shapes are validated on record, outputs are checked
// finite, and every reduction in forward or backward runs left-to-right so
// repeated runs are bit-identical.
template <typename T>
class Tape {
public:
    using Id = int32_t;

    Tape() = default;

    // Tracked input (parameter) or, with requires_grad=false, plain data.
    Id leaf(Tensor<T> v, bool requires_grad = true);

    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id scale(Id a, T c);
    Id sum_all(Id a);

    Id matmul(Id a, Id b);
    // Batched matmul on {B,m,k} x {B,k,n}; _nt treats the second input as
    // {B,n,k} and multiplies by its transpose (attention scores).
    Id bmm(Id a, Id b);
    Id bmm_nt(Id a, Id b);

    Id add_bias_rows(Id x, Id bias);
    // out[r] = x[r] + table[r mod table_rows]; positional embeddings.
    Id add_rows_cycled(Id x, Id table);
    // x holds `groups` sequences of (seq-1) rows; inserts tok as row 0 of
    // each sequence.
    Id prepend_token(Id x, Id tok, int64_t groups);
    Id take_first_row_per_group(Id x, int64_t groups);
    Id slice_cols(Id x, int64_t c0, int64_t c1);
    // [g*s, h*e] -> {g*h, s, e} and back.
    Id split_heads(Id x, int64_t groups, int64_t seq, int64_t heads);
    Id merge_heads(Id x, int64_t groups, int64_t seq, int64_t heads);

    Id softmax_rows(Id x);
    Id layer_norm(Id x, Id gain, Id bias, T eps);
    Id gelu(Id x);
    // Mean negative log-likelihood over the batch; labels in [0, C).
    Id cross_entropy(Id logits, std::vector<int32_t> labels);

    const Tensor<T>& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse recording
    // order. loss must be scalar.
    void backward(Id loss);

    // Gradient of the last backward() wrt node id; zeros if untouched.
    const Tensor<T>& grad(Id id);

    size_t size() const { return nodes_.size(); }
    void reset();

private:
    enum class Op : uint8_t {
        leaf,
        add,
        sub,
        mul,
        scale_const,
        sum_all,
        matmul,
        bmm,
        bmm_nt,
        add_bias_rows,
        add_rows_cycled,
        prepend_token,
        take_first,
        slice_cols,
        split_heads,
        merge_heads,
        softmax_rows,
        layer_norm,
        gelu,
        cross_entropy,
    };

    struct Node {
        Op op;
        Id in0 = -1;
        Id in1 = -1;
        Id in2 = -1;
        bool requires_grad = false;
        Tensor<T> value;
        T scalar = T(0);                // scale constant / layer_norm eps
        int64_t g0 = 0, g1 = 0, g2 = 0; // groups/seq/heads or col range
        std::vector<int32_t> labels;    // cross_entropy
        std::vector<T> cache;           // layer_norm xhat+inv_std, ce probs
    };

    Id push(Node n);
    Node& at(Id id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& at(Id id) const { return nodes_[static_cast<size_t>(id)]; }
    Tensor<T>& grad_buf(Id id);
    void backward_node(Id id);

    std::vector<Node> nodes_;
    std::vector<Tensor<T>> grads_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace vitdp
