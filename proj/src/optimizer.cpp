#include "vitdp/optimizer.hpp"

#include <cmath>

#include "vitdp/errors.hpp"

namespace vitdp {

template <typename T>
OptimizerState<T> make_optimizer(const TrainConfig& cfg, const ParamSet<T>& params) {
    OptimizerState<T> st;
    st.kind = cfg.optimizer;
    st.learning_rate = cfg.learning_rate;
    st.momentum = cfg.momentum;
    st.beta1 = cfg.beta1;
    st.beta2 = cfg.beta2;
    st.eps = cfg.adam_eps;
    st.m = zeros_like(params);
    if (st.kind == OptimizerKind::adam) st.v = zeros_like(params);
    return st;
}

namespace {

template <typename T>
void check_mirrored(const ParamSet<T>& params, const ParamSet<T>& other, const char* what) {
    if (params.count() != other.count())
        throw ShapeError(std::string(what) + " holds " + std::to_string(other.count()) +
                         " tensors, parameters hold " + std::to_string(params.count()));
    for (size_t i = 0; i < params.count(); ++i) {
        if (!params.entries[i].second.same_shape(other.entries[i].second))
            throw ShapeError(std::string(what) + " shape mismatch at " + params.entries[i].first);
    }
}

}  // namespace

template <typename T>
void optimizer_step(OptimizerState<T>& state, ParamSet<T>& params, const ParamSet<T>& grads) {
    check_mirrored(params, grads, "gradients");
    check_mirrored(params, state.m, "optimizer state");
    state.step += 1;

    const T lr = static_cast<T>(state.learning_rate);
    if (state.kind == OptimizerKind::sgd) {
        const T mu = static_cast<T>(state.momentum);
        for (size_t t = 0; t < params.count(); ++t) {
            T* p = params.entries[t].second.ptr();
            T* m = state.m.entries[t].second.ptr();
            const T* g = grads.entries[t].second.ptr();
            const int64_t n = params.entries[t].second.numel();
            for (int64_t i = 0; i < n; ++i) {
                m[i] = mu * m[i] + g[i];
                p[i] -= lr * m[i];
            }
        }
        return;
    }

    check_mirrored(params, state.v, "optimizer state");
    const T b1 = static_cast<T>(state.beta1);
    const T b2 = static_cast<T>(state.beta2);
    const T eps = static_cast<T>(state.eps);
    const T bc1 = static_cast<T>(1.0 - std::pow(state.beta1, static_cast<double>(state.step)));
    const T bc2 = static_cast<T>(1.0 - std::pow(state.beta2, static_cast<double>(state.step)));
    for (size_t t = 0; t < params.count(); ++t) {
        T* p = params.entries[t].second.ptr();
        T* m = state.m.entries[t].second.ptr();
        T* v = state.v.entries[t].second.ptr();
        const T* g = grads.entries[t].second.ptr();
        const int64_t n = params.entries[t].second.numel();
        for (int64_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = m[i] / bc1;
            const T vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

template struct OptimizerState<float>;
template OptimizerState<float> make_optimizer<float>(const TrainConfig&, const ParamSet<float>&);
template void optimizer_step<float>(OptimizerState<float>&, ParamSet<float>&, const ParamSet<float>&);
template struct OptimizerState<double>;
template OptimizerState<double> make_optimizer<double>(const TrainConfig&, const ParamSet<double>&);
template void optimizer_step<double>(OptimizerState<double>&, ParamSet<double>&, const ParamSet<double>&);

}  // namespace vitdp
