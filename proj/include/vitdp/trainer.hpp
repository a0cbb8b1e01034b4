#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitdp/dataset.hpp"
#include "vitdp/metrics.hpp"
#include "vitdp/process_group.hpp"
#include "vitdp/train_config.hpp"
#include "vitdp/vit.hpp"

namespace vitdp {

struct TrainOptions {
    std::string run_id = "run";
    // Emulates a slow device: after each micro-batch, sleep
    // (multiplier - 1) x that micro-batch's measured compute time.
    double slowdown_multiplier = 1.0;
    // When set, rank 0 writes metrics.csv and checkpoint.bin here.
    std::string out_dir;
    // Test hook: nudges this rank's parameters after each epoch's steps so
    // the end-of-epoch checksum must detect the divergence.
    bool test_corrupt_params = false;
};

struct TrainResult {
    std::vector<EpochMetrics> local_epochs;  // this rank's rows
    std::vector<EpochMetrics> world_epochs;  // every rank's rows, rank-major per epoch
    std::vector<float> step_losses;          // global mean loss per optimizer step
    std::vector<int64_t> allreduce_calls_per_epoch;  // gradient syncs, measured
    ParamSet<float> params;
    uint64_t param_fingerprint = 0;
};

// The synchronous data-parallel loop. Every rank calls this with the full
// dataset and the same config; sharding happens inside. Per optimizer step:
// accumulate micro-batch gradients, average the window, AllReduce-average
// across ranks, apply the optimizer. Epochs end with a barrier and a
// checksum AllReduce that verifies all ranks hold bit-identical parameters.
TrainResult run_training(ProcessGroup& pg, const TrainConfig& cfg, const Dataset& data,
                         const TrainOptions& opts = {});

}  // namespace vitdp
