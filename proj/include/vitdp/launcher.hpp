#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vitdp/metrics.hpp"
#include "vitdp/train_config.hpp"

namespace vitdp {

struct LaunchSpec {
    int world_size = 1;
    TrainConfig config;
    std::string dataset = "synthetic";  // "synthetic" or a CIFAR binary path/dir
    int64_t synthetic_samples = 2048;
    std::string out_dir;  // per-run directory for config/metrics/checkpoint
    std::string run_id = "run";
    std::map<int, double> slowdowns;  // rank -> compute multiplier
    double timeout_s = 600.0;
};

struct LaunchResult {
    std::vector<int> exit_status;       // by spawn order; 128+signal when killed
    std::vector<EpochMetrics> metrics;  // parsed back from out_dir/metrics.csv
    std::vector<std::string> coordinator_log;
};

// Worker executable: $VITDP_BIN when set, else this process's own binary.
std::string worker_binary_path();

// Starts a coordinator on an ephemeral port, spawns world_size worker
// processes over loopback, waits for them, and reads the metrics back.
// Any nonzero worker exit kills the rest and raises HarnessError naming the
// failing rank and status.
LaunchResult launch_local_world(const LaunchSpec& spec);

}  // namespace vitdp
