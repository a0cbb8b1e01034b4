#include "vitdp/metrics.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vitdp/errors.hpp"

namespace vitdp {

namespace {

constexpr const char* kHeader = "run_id,world_size,rank,epoch,compute_s,comm_s,total_s,loss,accuracy";

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

int64_t parse_int(const std::string& s, const char* what) {
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0')
        throw FormatError(std::string("bad ") + what + " field \"" + s + "\"");
    return v;
}

double parse_double(const std::string& s, const char* what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw FormatError(std::string("bad ") + what + " field \"" + s + "\"");
    return v;
}

}  // namespace

const char* metrics_csv_header() { return kHeader; }

std::string metrics_csv_row(const EpochMetrics& m) {
    if (m.run_id.find(',') != std::string::npos || m.run_id.find('\n') != std::string::npos)
        throw FormatError("run_id \"" + m.run_id + "\" may not contain commas or newlines");
    std::ostringstream os;
    os << m.run_id << ',' << m.world_size << ',' << m.rank << ',' << m.epoch << ','
       << fmt_double(m.compute_s) << ',' << fmt_double(m.comm_s) << ',' << fmt_double(m.total_s)
       << ',' << fmt_double(m.loss) << ',' << fmt_double(m.accuracy);
    return os.str();
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& rows) {
    std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << kHeader << '\n';
    for (const auto& m : rows) out << metrics_csv_row(m) << '\n';
    out.flush();
    if (!out) throw IoError("failed writing " + path);
}

std::vector<EpochMetrics> read_metrics_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kHeader)
        throw FormatError(path + " header \"" + line + "\" does not match the metrics schema");

    std::vector<EpochMetrics> rows;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_commas(line);
        if (f.size() != 9)
            throw FormatError(path + ":" + std::to_string(lineno) + " has " +
                              std::to_string(f.size()) + " fields, expected 9");
        EpochMetrics m;
        m.run_id = f[0];
        m.world_size = static_cast<int>(parse_int(f[1], "world_size"));
        m.rank = static_cast<int>(parse_int(f[2], "rank"));
        m.epoch = parse_int(f[3], "epoch");
        m.compute_s = parse_double(f[4], "compute_s");
        m.comm_s = parse_double(f[5], "comm_s");
        m.total_s = parse_double(f[6], "total_s");
        m.loss = parse_double(f[7], "loss");
        m.accuracy = parse_double(f[8], "accuracy");
        rows.push_back(std::move(m));
    }
    return rows;
}

}  // namespace vitdp
