#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vitdp/launcher.hpp"
#include "vitdp/metrics.hpp"
#include "vitdp/train_config.hpp"

namespace vitdp {

struct SweepSpec {
    std::vector<int> world_sizes;  // ascending, each >= 1
    ShardMode mode = ShardMode::strong;
    std::vector<int64_t> micro_batches = {16};
    std::vector<int64_t> accumulations = {1};
    int64_t epochs = 5;
    int repeats = 1;
    std::map<int, double> slowdowns;
    std::string dataset = "synthetic";
    int64_t synthetic_samples = 8192;
    double weak_fraction = 0.1;
    TrainConfig base_config;  // model/optimizer/seed template; batch fields set per cell
    std::string out_dir;
    double timeout_s = 600.0;
};

struct ScalingRow {
    int world_size = 1;
    int64_t micro_batch = 0;  // 0 when aggregated from bare metrics rows
    int64_t accumulation = 0;
    double mean_epoch_s = 0.0;
    double speedup = 0.0;     // T(1) / T(W) within the same micro/accum group
    double efficiency = 0.0;  // speedup / world_size
    double comm_fraction = 0.0;
    bool failed = false;
    std::string note;
};

struct ScalingReport {
    std::vector<EpochMetrics> rows;  // every per-rank epoch row of every cell
    std::vector<ScalingRow> aggregates;
};

// Aggregates bare metrics rows by world size. Epoch time for a world is the
// max total_s over its ranks, averaged over runs and epochs. Throws
// UsageError when no world=1 rows exist to serve as the baseline.
std::vector<ScalingRow> compute_speedup(const std::vector<EpochMetrics>& rows);

// Runs every (world x micro x accum x repeat) cell through
// launch_local_world. A failing cell is recorded and the sweep continues.
ScalingReport run_sweep(const SweepSpec& spec);

// dir/metrics.csv with every per-rank row plus dir/summary.txt with the
// aggregate table.
void write_report(const ScalingReport& report, const std::string& dir);

std::string format_report_table(const ScalingReport& report);

}  // namespace vitdp
