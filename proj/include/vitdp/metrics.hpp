#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vitdp {

struct EpochMetrics {
    std::string run_id;
    int world_size = 1;
    int rank = 0;
    int64_t epoch = 0;  // zero-based
    double compute_s = 0.0;
    double comm_s = 0.0;
    double total_s = 0.0;
    double loss = 0.0;
    double accuracy = 0.0;
};

// The fixed CSV schema. Floating fields are printed with enough digits to
// round-trip exactly.
const char* metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& rows);
std::vector<EpochMetrics> read_metrics_csv(const std::string& path);

}  // namespace vitdp
