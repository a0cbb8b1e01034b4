#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitdp/dataset.hpp"
#include "vitdp/vit.hpp"

namespace vitdp {

enum class OptimizerKind { sgd, adam };

// Which samples a rank trains on. `sharded`: each rank owns a disjoint slice
// for the whole run. `interleave`: every rank sees the full set and takes its
// micro-slice of each global batch, so runs at different world sizes consume
// identical sample windows per optimizer step.
enum class DataAssignment { sharded, interleave };

struct TrainConfig {
    // DeepSpeed-style fields, verbatim names in the JSON file.
    int64_t train_batch_size = 32;
    int64_t gradient_accumulation_steps = 1;
    int64_t micro_batch_per_gpu = 16;
    bool wall_clock_breakdown = true;

    // Engine extension section.
    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 3e-4;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int64_t epochs = 5;
    uint64_t seed = 1234;
    ShardMode scaling_mode = ShardMode::strong;
    double weak_fraction = 0.1;
    DataAssignment assignment = DataAssignment::sharded;
    ViTConfig model;

    std::vector<std::string> warnings;  // unknown fields seen while parsing
};

TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::string& path);

// Checks the batch identity against the actual world size and the remaining
// invariants. Throws ConfigError / UnsupportedError.
void validate_config(const TrainConfig& cfg, int world_size);

// The stock configuration used when no config file is given.
std::string default_config_json();

// Serializes cfg back to the JSON layout parse_train_config accepts. The
// launcher uses this to hand per-cell configs to worker processes.
std::string config_to_json(const TrainConfig& cfg);

const char* optimizer_name(OptimizerKind k);

}  // namespace vitdp
