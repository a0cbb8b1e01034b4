#include "vitdp/sweep.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "vitdp/errors.hpp"

namespace vitdp {

namespace fs = std::filesystem;

namespace {

struct GroupStats {
    double epoch_time_sum = 0.0;  // sum over (run, epoch) of max-over-ranks total_s
    int64_t epoch_count = 0;
    double comm_sum = 0.0;
    double total_sum = 0.0;
};

// Max over ranks per (run_id, epoch), then averaged.
std::map<int, GroupStats> stats_by_world(const std::vector<EpochMetrics>& rows) {
    std::map<std::tuple<int, std::string, int64_t>, double> epoch_max;
    std::map<int, GroupStats> by_world;
    for (const auto& r : rows) {
        auto key = std::make_tuple(r.world_size, r.run_id, r.epoch);
        auto [it, fresh] = epoch_max.emplace(key, r.total_s);
        if (!fresh) it->second = std::max(it->second, r.total_s);
        auto& g = by_world[r.world_size];
        g.comm_sum += r.comm_s;
        g.total_sum += r.total_s;
    }
    for (const auto& [key, t] : epoch_max) {
        auto& g = by_world[std::get<0>(key)];
        g.epoch_time_sum += t;
        g.epoch_count += 1;
    }
    return by_world;
}

}  // namespace

std::vector<ScalingRow> compute_speedup(const std::vector<EpochMetrics>& rows) {
    if (rows.empty()) throw UsageError("no metrics rows to aggregate");
    const auto by_world = stats_by_world(rows);
    const auto base = by_world.find(1);
    if (base == by_world.end())
        throw UsageError("no world_size=1 rows; speedup needs the single-rank baseline");
    const double t1 = base->second.epoch_time_sum / static_cast<double>(base->second.epoch_count);

    std::vector<ScalingRow> out;
    for (const auto& [world, g] : by_world) {
        ScalingRow row;
        row.world_size = world;
        row.mean_epoch_s = g.epoch_time_sum / static_cast<double>(g.epoch_count);
        row.speedup = t1 / row.mean_epoch_s;
        row.efficiency = row.speedup / static_cast<double>(world);
        row.comm_fraction = g.total_sum > 0.0 ? g.comm_sum / g.total_sum : 0.0;
        out.push_back(std::move(row));
    }
    return out;
}

ScalingReport run_sweep(const SweepSpec& spec) {
    if (spec.world_sizes.empty()) throw UsageError("sweep needs at least one world size");
    if (!std::is_sorted(spec.world_sizes.begin(), spec.world_sizes.end()))
        throw ConfigError("world sizes must be ascending");
    for (int w : spec.world_sizes)
        if (w < 1) throw ConfigError("world size must be >= 1, got " + std::to_string(w));
    if (spec.micro_batches.empty() || spec.accumulations.empty())
        throw UsageError("sweep needs at least one micro-batch and accumulation value");
    if (spec.repeats < 1) throw ConfigError("repeats must be >= 1");
    if (spec.out_dir.empty()) throw UsageError("sweep needs an output directory");

    ScalingReport report;
    // cell rows keyed by (micro, accum) for per-group speedup over worlds
    std::map<std::pair<int64_t, int64_t>, std::vector<EpochMetrics>> group_rows;
    std::vector<ScalingRow> failures;

    for (int rep = 0; rep < spec.repeats; ++rep) {
        for (int64_t micro : spec.micro_batches) {
            for (int64_t accum : spec.accumulations) {
                for (int world : spec.world_sizes) {
                    TrainConfig cfg = spec.base_config;
                    cfg.micro_batch_per_gpu = micro;
                    cfg.gradient_accumulation_steps = accum;
                    cfg.train_batch_size = micro * accum * world;
                    cfg.scaling_mode = spec.mode;
                    cfg.weak_fraction = spec.weak_fraction;
                    cfg.epochs = spec.epochs;

                    std::ostringstream id;
                    id << "w" << world << "_m" << micro << "_a" << accum << "_"
                       << (spec.mode == ShardMode::strong ? "strong" : "weak") << "_r" << rep;

                    LaunchSpec launch;
                    launch.world_size = world;
                    launch.config = cfg;
                    launch.dataset = spec.dataset;
                    launch.synthetic_samples = spec.synthetic_samples;
                    launch.out_dir = (fs::path(spec.out_dir) / id.str()).string();
                    launch.run_id = id.str();
                    launch.slowdowns = spec.slowdowns;
                    launch.timeout_s = spec.timeout_s;
                    try {
                        LaunchResult res = launch_local_world(launch);
                        auto& bucket = group_rows[{micro, accum}];
                        bucket.insert(bucket.end(), res.metrics.begin(), res.metrics.end());
                        report.rows.insert(report.rows.end(), res.metrics.begin(),
                                           res.metrics.end());
                    } catch (const Error& e) {
                        ScalingRow bad;
                        bad.world_size = world;
                        bad.micro_batch = micro;
                        bad.accumulation = accum;
                        bad.failed = true;
                        bad.note = e.what();
                        failures.push_back(std::move(bad));
                    }
                }
            }
        }
    }

    for (auto& [key, rows] : group_rows) {
        try {
            std::vector<ScalingRow> agg = compute_speedup(rows);
            for (auto& row : agg) {
                row.micro_batch = key.first;
                row.accumulation = key.second;
                report.aggregates.push_back(std::move(row));
            }
        } catch (const UsageError& e) {
            ScalingRow bad;
            bad.micro_batch = key.first;
            bad.accumulation = key.second;
            bad.failed = true;
            bad.note = e.what();
            report.aggregates.push_back(std::move(bad));
        }
    }
    report.aggregates.insert(report.aggregates.end(), failures.begin(), failures.end());
    return report;
}

std::string format_report_table(const ScalingReport& report) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-6s %-6s %-6s %-12s %-9s %-11s %-9s\n", "world", "micro",
                  "accum", "epoch_s", "speedup", "efficiency", "comm_frac");
    os << line;
    for (const auto& r : report.aggregates) {
        if (r.failed) continue;
        // Rows rebuilt from a bare metrics CSV carry no micro/accum values.
        const std::string micro =
            r.micro_batch > 0 ? std::to_string(r.micro_batch) : std::string("-");
        const std::string accum =
            r.accumulation > 0 ? std::to_string(r.accumulation) : std::string("-");
        std::snprintf(line, sizeof(line), "%-6d %-6s %-6s %-12.4f %-9.3f %-11.3f %-9.4f\n",
                      r.world_size, micro.c_str(), accum.c_str(), r.mean_epoch_s, r.speedup,
                      r.efficiency, r.comm_fraction);
        os << line;
    }
    for (const auto& r : report.aggregates) {
        if (!r.failed) continue;
        os << "FAILED world=" << r.world_size << " micro=" << r.micro_batch
           << " accum=" << r.accumulation << ": " << r.note << "\n";
    }
    return os.str();
}

void write_report(const ScalingReport& report, const std::string& dir) {
    fs::create_directories(dir);
    write_metrics_csv((fs::path(dir) / "metrics.csv").string(), report.rows);
    const std::string path = (fs::path(dir) / "summary.txt").string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << format_report_table(report);
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace vitdp
