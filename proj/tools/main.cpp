#include <signal.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vitdp/dataset.hpp"
#include "vitdp/errors.hpp"
#include "vitdp/launcher.hpp"
#include "vitdp/metrics.hpp"
#include "vitdp/process_group.hpp"
#include "vitdp/sweep.hpp"
#include "vitdp/train_config.hpp"
#include "vitdp/trainer.hpp"

namespace fs = std::filesystem;
using namespace vitdp;

namespace {

std::map<int, double> parse_slowdowns(const std::vector<std::string>& specs) {
    std::map<int, double> out;
    for (const auto& s : specs) {
        const size_t colon = s.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == s.size())
            throw UsageError("slowdown must look like RANK:MULT, got \"" + s + "\"");
        char* end = nullptr;
        const long rank = std::strtol(s.c_str(), &end, 10);
        if (end != s.c_str() + colon)
            throw UsageError("bad slowdown rank in \"" + s + "\"");
        const double mult = std::strtod(s.c_str() + colon + 1, &end);
        if (*end != '\0') throw UsageError("bad slowdown multiplier in \"" + s + "\"");
        out[static_cast<int>(rank)] = mult;
    }
    return out;
}

std::pair<std::string, uint16_t> split_hostport(const std::string& s) {
    const size_t colon = s.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == s.size())
        throw UsageError("coordinator address must look like HOST:PORT, got \"" + s + "\"");
    char* end = nullptr;
    const long port = std::strtol(s.c_str() + colon + 1, &end, 10);
    if (*end != '\0' || port < 1 || port > 65535)
        throw UsageError("bad coordinator port in \"" + s + "\"");
    return {s.substr(0, colon), static_cast<uint16_t>(port)};
}

ShardMode parse_mode(const std::string& s) {
    if (s == "strong") return ShardMode::strong;
    if (s == "weak") return ShardMode::weak;
    throw UsageError("mode must be strong or weak, got \"" + s + "\"");
}

Dataset build_dataset(const TrainConfig& cfg, const std::string& selector, int64_t synthetic_n) {
    if (selector == "synthetic")
        return make_synthetic(synthetic_n, cfg.model.num_classes, cfg.model.image_size, cfg.seed);
    const CifarVariant variant =
        cfg.model.num_classes == 100 ? CifarVariant::cifar100 : CifarVariant::cifar10;
    return load_cifar_binary(selector, variant);
}

void print_warnings(const TrainConfig& cfg) {
    for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
}

struct LaunchArgs {
    int world = 1;
    std::string config_path;
    std::string dataset = "synthetic";
    int64_t synthetic_n = 2048;
    std::string mode;
    double weak_fraction = -1.0;
    std::vector<std::string> slowdowns;
    int64_t epochs = -1;
    int64_t seed = -1;
    int64_t micro = -1;
    int64_t accum = -1;
    int64_t batch = -1;
    std::string out_dir = "runs/launch";
    std::string run_id = "launch";
    double timeout_s = 600.0;
};

TrainConfig resolve_config(const LaunchArgs& a, int world) {
    TrainConfig cfg = a.config_path.empty() ? parse_train_config(default_config_json())
                                            : load_train_config(a.config_path);
    print_warnings(cfg);
    if (!a.mode.empty()) cfg.scaling_mode = parse_mode(a.mode);
    if (a.weak_fraction >= 0.0) cfg.weak_fraction = a.weak_fraction;
    if (a.epochs >= 0) cfg.epochs = a.epochs;
    if (a.seed >= 0) cfg.seed = static_cast<uint64_t>(a.seed);
    bool batch_dirty = false;
    if (a.micro >= 0) {
        cfg.micro_batch_per_gpu = a.micro;
        batch_dirty = true;
    }
    if (a.accum >= 0) {
        cfg.gradient_accumulation_steps = a.accum;
        batch_dirty = true;
    }
    if (a.batch >= 0) {
        cfg.train_batch_size = a.batch;
    } else if (batch_dirty) {
        cfg.train_batch_size =
            cfg.micro_batch_per_gpu * cfg.gradient_accumulation_steps * world;
    }
    return cfg;
}

int cmd_launch(const LaunchArgs& a) {
    LaunchSpec spec;
    spec.world_size = a.world;
    spec.config = resolve_config(a, a.world);
    spec.dataset = a.dataset;
    spec.synthetic_samples = a.synthetic_n;
    spec.out_dir = a.out_dir;
    spec.run_id = a.run_id;
    spec.slowdowns = parse_slowdowns(a.slowdowns);
    spec.timeout_s = a.timeout_s;

    LaunchResult res = launch_local_world(spec);

    std::map<int64_t, double> epoch_time;
    std::map<int64_t, std::pair<double, double>> epoch_la;
    for (const auto& m : res.metrics) {
        auto [it, fresh] = epoch_time.emplace(m.epoch, m.total_s);
        if (!fresh) it->second = std::max(it->second, m.total_s);
        epoch_la[m.epoch] = {m.loss, m.accuracy};
    }
    std::cout << "world " << spec.world_size << ", " << spec.config.epochs << " epochs, run "
              << spec.run_id << "\n";
    for (const auto& [epoch, t] : epoch_time) {
        const auto [loss, acc] = epoch_la[epoch];
        std::printf("epoch %lld: loss %.4f  acc %.4f  time %.3fs\n",
                    static_cast<long long>(epoch), loss, acc, t);
    }
    std::cout << "metrics: " << (fs::path(a.out_dir) / "metrics.csv").string() << "\n"
              << "checkpoint: " << (fs::path(a.out_dir) / "checkpoint.bin").string() << "\n";
    return 0;
}

struct WorkerArgs {
    std::string coordinator;
    std::string config_path;
    std::string dataset = "synthetic";
    int64_t synthetic_n = 2048;
    std::string out_dir;
    std::string run_id = "run";
    double timeout_s = 600.0;
    std::vector<std::string> slowdowns;
};

int cmd_worker(const WorkerArgs& a) {
    const auto [host, port] = split_hostport(a.coordinator);
    TrainConfig cfg = load_train_config(a.config_path);
    auto pg = ProcessGroup::connect(host, port, 0, a.timeout_s);
    const int rank = pg->rank();

    if (!a.out_dir.empty()) {
        const std::string pid_path =
            (fs::path(a.out_dir) / ("rank_" + std::to_string(rank) + ".pid")).string();
        std::ofstream f(pid_path, std::ios::binary);
        f << getpid() << "\n";
    }
    if (const char* crash = std::getenv("VITDP_TEST_CRASH_RANK"); crash && *crash) {
        if (std::atoi(crash) == rank) std::exit(3);
    }

    const std::map<int, double> slowdowns = parse_slowdowns(a.slowdowns);
    TrainOptions opts;
    opts.run_id = a.run_id;
    opts.out_dir = a.out_dir;
    if (const auto it = slowdowns.find(rank); it != slowdowns.end())
        opts.slowdown_multiplier = it->second;

    const Dataset data = build_dataset(cfg, a.dataset, a.synthetic_n);
    run_training(*pg, cfg, data, opts);
    pg->shutdown();
    return 0;
}

struct SweepArgs {
    std::vector<int> worlds;
    std::string mode = "strong";
    std::vector<int64_t> micros = {16};
    std::vector<int64_t> accums = {1};
    int64_t epochs = 5;
    int repeats = 1;
    std::string dataset = "synthetic";
    int64_t synthetic_n = 8192;
    double weak_fraction = 0.1;
    std::vector<std::string> slowdowns;
    int64_t seed = -1;
    std::string config_path;
    std::string out_dir = "runs/sweep";
    double timeout_s = 600.0;
};

int cmd_sweep(const SweepArgs& a) {
    SweepSpec spec;
    spec.world_sizes = a.worlds;
    spec.mode = parse_mode(a.mode);
    spec.micro_batches = a.micros;
    spec.accumulations = a.accums;
    spec.epochs = a.epochs;
    spec.repeats = a.repeats;
    spec.slowdowns = parse_slowdowns(a.slowdowns);
    spec.dataset = a.dataset;
    spec.synthetic_samples = a.synthetic_n;
    spec.weak_fraction = a.weak_fraction;
    spec.base_config = a.config_path.empty() ? parse_train_config(default_config_json())
                                             : load_train_config(a.config_path);
    print_warnings(spec.base_config);
    if (a.seed >= 0) spec.base_config.seed = static_cast<uint64_t>(a.seed);
    spec.out_dir = a.out_dir;
    spec.timeout_s = a.timeout_s;

    const ScalingReport report = run_sweep(spec);
    write_report(report, a.out_dir);
    std::cout << format_report_table(report);
    std::cout << "report: " << (fs::path(a.out_dir) / "summary.txt").string() << "\n";
    return 0;
}

int cmd_report(const std::string& in_dir) {
    ScalingReport report;
    std::error_code ec;
    for (fs::recursive_directory_iterator it(in_dir, ec), end; it != end; it.increment(ec)) {
        if (ec) break;
        if (it->path().filename() == "metrics.csv") {
            const auto rows = read_metrics_csv(it->path().string());
            report.rows.insert(report.rows.end(), rows.begin(), rows.end());
        }
    }
    if (report.rows.empty())
        throw UsageError("no metrics.csv files found under " + in_dir);
    report.aggregates = compute_speedup(report.rows);
    std::ofstream out((fs::path(in_dir) / "summary.txt").string(), std::ios::binary);
    out << format_report_table(report);
    std::cout << format_report_table(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    signal(SIGPIPE, SIG_IGN);
    CLI::App app{"data-parallel ViT trainer and scaling harness"};
    app.require_subcommand(1);

    LaunchArgs la;
    CLI::App* launch = app.add_subcommand("launch", "run one local world of workers");
    launch->add_option("--world", la.world, "number of worker processes")->required();
    launch->add_option("--config", la.config_path, "JSON config file");
    launch->add_option("--dataset", la.dataset, "'synthetic' or CIFAR binary path");
    launch->add_option("--synthetic-n", la.synthetic_n, "synthetic dataset size");
    launch->add_option("--mode", la.mode, "strong|weak scaling");
    launch->add_option("--weak-fraction", la.weak_fraction, "per-rank dataset fraction");
    launch->add_option("--slowdown", la.slowdowns, "RANK:MULT compute slowdown")
        ->take_all();
    launch->add_option("--epochs", la.epochs, "epoch count");
    launch->add_option("--seed", la.seed, "run seed");
    launch->add_option("--micro", la.micro, "micro-batch per rank");
    launch->add_option("--accum", la.accum, "gradient accumulation steps");
    launch->add_option("--batch", la.batch, "global batch size");
    launch->add_option("--out", la.out_dir, "output directory");
    launch->add_option("--run-id", la.run_id, "metrics run id");
    launch->add_option("--timeout", la.timeout_s, "harness timeout seconds");

    WorkerArgs wa;
    CLI::App* worker = app.add_subcommand("worker", "single rank; join a coordinator");
    worker->add_option("--coordinator", wa.coordinator, "HOST:PORT")->required();
    worker->add_option("--config", wa.config_path, "JSON config file")->required();
    worker->add_option("--dataset", wa.dataset, "'synthetic' or CIFAR binary path");
    worker->add_option("--synthetic-n", wa.synthetic_n, "synthetic dataset size");
    worker->add_option("--out", wa.out_dir, "output directory");
    worker->add_option("--run-id", wa.run_id, "metrics run id");
    worker->add_option("--timeout", wa.timeout_s, "collective timeout seconds");
    worker->add_option("--slowdown", wa.slowdowns, "RANK:MULT compute slowdown")
        ->take_all();

    SweepArgs sa;
    CLI::App* sweep = app.add_subcommand("sweep", "scaling sweep over world sizes");
    sweep->add_option("--worlds", sa.worlds, "world sizes, e.g. 1,2,4")
        ->required()
        ->delimiter(',');
    sweep->add_option("--mode", sa.mode, "strong|weak scaling");
    sweep->add_option("--micro", sa.micros, "micro-batch values")->delimiter(',');
    sweep->add_option("--accum", sa.accums, "accumulation values")->delimiter(',');
    sweep->add_option("--epochs", sa.epochs, "epoch count");
    sweep->add_option("--repeats", sa.repeats, "repeats per cell");
    sweep->add_option("--dataset", sa.dataset, "'synthetic' or CIFAR binary path");
    sweep->add_option("--synthetic-n", sa.synthetic_n, "synthetic dataset size");
    sweep->add_option("--weak-fraction", sa.weak_fraction, "per-rank dataset fraction");
    sweep->add_option("--slowdown", sa.slowdowns, "RANK:MULT compute slowdown")
        ->take_all();
    sweep->add_option("--seed", sa.seed, "run seed");
    sweep->add_option("--config", sa.config_path, "base JSON config file");
    sweep->add_option("--out", sa.out_dir, "output directory");
    sweep->add_option("--timeout", sa.timeout_s, "per-cell timeout seconds");

    std::string report_in;
    CLI::App* report = app.add_subcommand("report", "aggregate metrics CSVs into a summary");
    report->add_option("--in", report_in, "directory holding metrics.csv files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (launch->parsed()) return cmd_launch(la);
        if (worker->parsed()) return cmd_worker(wa);
        if (sweep->parsed()) return cmd_sweep(sa);
        if (report->parsed()) return cmd_report(report_in);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
