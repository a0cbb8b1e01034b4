#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitdp/tensor.hpp"

namespace vitdp {

struct Dataset {
    Tensor<float> images;  // {N, 3, H, W}, values in [0, 1]
    std::vector<int32_t> labels;
    int32_t class_count = 0;
    std::string source;  // cifar10 | cifar100 | synthetic

    int64_t size() const { return static_cast<int64_t>(labels.size()); }
    int64_t image_size() const { return images.ndim() == 4 ? images.dim(2) : 0; }
};

enum class CifarVariant { cifar10, cifar100 };

// path may be one .bin file or a directory; a directory loads every *.bin
// inside in name order. CIFAR-100 records carry coarse+fine labels; the fine
// one is kept.
Dataset load_cifar_binary(const std::string& path, CifarVariant variant);

// Class-conditional Gaussian blobs on a grid, labels i mod class_count.
Dataset make_synthetic(int64_t n, int32_t class_count, int64_t image_size, uint64_t seed);

enum class ShardMode { strong, weak };

struct ShardSpec {
    ShardMode mode = ShardMode::strong;
    int rank = 0;
    int world_size = 1;
    double weak_fraction = 0.1;
    uint64_t seed = 0;
};

// One seeded global shuffle, then a contiguous per-rank slice: N/world samples
// in strong mode, N*weak_fraction in weak mode. Slices are disjoint.
Dataset shard(const Dataset& ds, const ShardSpec& spec);

struct Batch {
    Tensor<float> images;  // {micro, 3, H, W}
    std::vector<int32_t> labels;
};

// Shuffled index order for one epoch, seeded by seed ^ epoch.
std::vector<int64_t> epoch_order(int64_t n, uint64_t seed, int64_t epoch);

Batch take(const Dataset& ds, const int64_t* idx, int64_t count);

// Full epoch of micro-batches; the trailing partial batch is dropped.
std::vector<Batch> batches(const Dataset& ds, int64_t micro_batch, uint64_t seed, int64_t epoch);

}  // namespace vitdp
