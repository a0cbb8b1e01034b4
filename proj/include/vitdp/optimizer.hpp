#pragma once

#include <cstdint>

#include "vitdp/train_config.hpp"
#include "vitdp/vit.hpp"

namespace vitdp {

// Per-parameter buffers mirroring the ParamSet shapes. `m` is the momentum
// buffer for SGD and the first moment for Adam; `v` is the Adam second moment
// and stays empty for SGD.
template <typename T>
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::sgd;
    double learning_rate = 0.0;
    double momentum = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step = 0;  // completed optimizer steps
    ParamSet<T> m;
    ParamSet<T> v;
};

template <typename T>
OptimizerState<T> make_optimizer(const TrainConfig& cfg, const ParamSet<T>& params);

// In-place update. SGD: m <- momentum*m + g, p -= lr*m. Adam: bias-corrected
// moment estimates, p -= lr * mhat / (sqrt(vhat) + eps). Deterministic
// elementwise order.
template <typename T>
void optimizer_step(OptimizerState<T>& state, ParamSet<T>& params, const ParamSet<T>& grads);

}  // namespace vitdp
