#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vitdp/tensor.hpp"

namespace vitdp {

struct ViTConfig {
    int64_t image_size = 32;
    int64_t channels = 3;
    int64_t patch_size = 16;
    int64_t embed_dim = 64;
    int64_t num_heads = 4;
    int64_t depth = 4;
    int64_t mlp_ratio = 4;
    int64_t num_classes = 10;

    void validate() const;  // throws ConfigError
    int64_t patch_dim() const { return channels * patch_size * patch_size; }
    int64_t num_patches() const { return (image_size / patch_size) * (image_size / patch_size); }
};

int64_t seq_len(const ViTConfig& cfg);

// Named parameters in a fixed order. The order defines the layout of the
// flattened gradient buffer, so it must be identical on every rank.
template <typename T>
struct ParamSet {
    std::vector<std::pair<std::string, Tensor<T>>> entries;

    void add(std::string name, Tensor<T> t);
    size_t count() const { return entries.size(); }
    int64_t total_elems() const;
    Tensor<T>& at(const std::string& name);
    const Tensor<T>& at(const std::string& name) const;
    bool has(const std::string& name) const;

    // Flat copy in entry order; unflatten requires the same shapes.
    std::vector<T> flatten() const;
    void unflatten(const std::vector<T>& flat);

    template <typename U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const auto& [name, t] : entries) {
            Tensor<U> c(t.shape);
            for (int64_t i = 0; i < t.numel(); ++i)
                c.data[static_cast<size_t>(i)] = static_cast<U>(t.data[static_cast<size_t>(i)]);
            out.entries.emplace_back(name, std::move(c));
        }
        return out;
    }
};

template <typename T>
ParamSet<T> init_params(const ViTConfig& cfg, uint64_t seed);

// Zero tensors shaped like p, same names. Gradient and optimizer-state carrier.
template <typename T>
ParamSet<T> zeros_like(const ParamSet<T>& p);

// Images {b, channels, H, W} -> patch rows {b * num_patches, patch_dim},
// patches row-major over the patch grid, each flattened channel-major.
template <typename T>
Tensor<T> patchify(const ViTConfig& cfg, const Tensor<T>& images);

template <typename T>
Tensor<T> forward(const ViTConfig& cfg, const ParamSet<T>& params, const Tensor<T>& images);

template <typename T>
struct LossResult {
    T loss;
    double accuracy;
    ParamSet<T> grads;
};

template <typename T>
LossResult<T> loss_and_grads(const ViTConfig& cfg, const ParamSet<T>& params,
                             const Tensor<T>& images, const std::vector<int32_t>& labels);

// Central differences against supplied analytic gradients over `samples`
// random coordinates. Returns the worst relative error. 64-bit only.
double finite_diff_gradcheck(const std::function<double(const ParamSet<double>&)>& f,
                             const ParamSet<double>& params, const ParamSet<double>& analytic,
                             int samples, double h, uint64_t seed);

extern template struct ParamSet<float>;
extern template struct ParamSet<double>;

}  // namespace vitdp
