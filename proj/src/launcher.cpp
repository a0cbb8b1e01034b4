#include "vitdp/launcher.hpp"

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "vitdp/coordinator.hpp"
#include "vitdp/errors.hpp"

namespace vitdp {

namespace fs = std::filesystem;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// rank_<r>.pid files are written by workers once the coordinator assigns
// their rank; they are the only pid -> rank mapping the launcher has.
std::map<pid_t, int> read_rank_files(const std::string& out_dir) {
    std::map<pid_t, int> by_pid;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(out_dir, ec)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("rank_", 0) != 0 || entry.path().extension() != ".pid") continue;
        const int rank = std::atoi(name.c_str() + 5);
        std::ifstream in(entry.path());
        long pid = 0;
        if (in >> pid) by_pid[static_cast<pid_t>(pid)] = rank;
    }
    return by_pid;
}

std::string describe_exit(int status) {
    if (status >= 128) return "killed by signal " + std::to_string(status - 128);
    return "exited with status " + std::to_string(status);
}

}  // namespace

std::string worker_binary_path() {
    if (const char* env = std::getenv("VITDP_BIN"); env && *env) return env;
    std::error_code ec;
    const fs::path self = fs::read_symlink("/proc/self/exe", ec);
    if (ec) throw HarnessError("cannot resolve worker binary: set VITDP_BIN");
    return self.string();
}

LaunchResult launch_local_world(const LaunchSpec& spec) {
    if (spec.world_size < 1)
        throw ConfigError("world size must be at least 1, got " +
                          std::to_string(spec.world_size));
    if (spec.out_dir.empty()) throw UsageError("launch needs an output directory");
    for (const auto& [rank, mult] : spec.slowdowns) {
        if (rank < 0 || rank >= spec.world_size)
            throw ConfigError("slowdown rank " + std::to_string(rank) + " outside world of " +
                              std::to_string(spec.world_size));
        if (mult < 1.0)
            throw ConfigError("slowdown multiplier must be >= 1, got " + std::to_string(mult));
    }
    validate_config(spec.config, spec.world_size);

    fs::create_directories(spec.out_dir);
    for (const char* stale : {"metrics.csv", "checkpoint.bin"})
        fs::remove(fs::path(spec.out_dir) / stale);
    {
        std::error_code ec;
        for (const auto& entry : fs::directory_iterator(spec.out_dir, ec)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("rank_", 0) == 0 && entry.path().extension() == ".pid")
                fs::remove(entry.path());
        }
    }
    const std::string config_path = (fs::path(spec.out_dir) / "config.json").string();
    {
        std::ofstream out(config_path, std::ios::binary);
        if (!out) throw IoError("cannot write " + config_path);
        out << config_to_json(spec.config);
    }

    Coordinator coord(spec.world_size, spec.timeout_s);
    std::thread coord_thread = coord.spawn();

    const std::string bin = worker_binary_path();
    std::vector<std::string> args = {
        bin,
        "worker",
        "--coordinator",
        "127.0.0.1:" + std::to_string(coord.port()),
        "--config",
        config_path,
        "--dataset",
        spec.dataset,
        "--out",
        spec.out_dir,
        "--run-id",
        spec.run_id,
        "--timeout",
        std::to_string(spec.timeout_s),
    };
    if (spec.dataset == "synthetic") {
        args.push_back("--synthetic-n");
        args.push_back(std::to_string(spec.synthetic_samples));
    }
    for (const auto& [rank, mult] : spec.slowdowns) {
        args.push_back("--slowdown");
        args.push_back(std::to_string(rank) + ":" + std::to_string(mult));
    }
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);

    std::vector<pid_t> pids;
    pids.reserve(static_cast<size_t>(spec.world_size));
    for (int i = 0; i < spec.world_size; ++i) {
        const pid_t pid = fork();
        if (pid < 0) {
            for (pid_t p : pids) kill(p, SIGKILL);
            for (pid_t p : pids) waitpid(p, nullptr, 0);
            coord_thread.join();
            throw HarnessError("fork failed spawning worker " + std::to_string(i));
        }
        if (pid == 0) {
            execv(bin.c_str(), argv.data());
            _exit(127);
        }
        pids.push_back(pid);
    }

    LaunchResult result;
    result.exit_status.assign(pids.size(), -1);
    const double deadline = now_seconds() + spec.timeout_s;
    size_t done = 0;
    bool timed_out = false;
    while (done < pids.size()) {
        bool progressed = false;
        for (size_t i = 0; i < pids.size(); ++i) {
            if (result.exit_status[i] != -1) continue;
            int status = 0;
            const pid_t got = waitpid(pids[i], &status, WNOHANG);
            if (got == pids[i]) {
                result.exit_status[i] =
                    WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
                ++done;
                progressed = true;
            }
        }
        if (done == pids.size()) break;
        const bool any_failed =
            std::any_of(result.exit_status.begin(), result.exit_status.end(),
                        [](int st) { return st > 0; });
        if (any_failed || now_seconds() > deadline) {
            timed_out = !any_failed;
            for (size_t i = 0; i < pids.size(); ++i) {
                if (result.exit_status[i] != -1) continue;
                kill(pids[i], SIGKILL);
                int status = 0;
                waitpid(pids[i], &status, 0);
                result.exit_status[i] =
                    WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
            }
            break;
        }
        if (!progressed) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    coord_thread.join();
    result.coordinator_log = coord.event_log();

    if (timed_out)
        throw HarnessError("worker world did not finish within " +
                           std::to_string(spec.timeout_s) + "s" +
                           (coord.failed() ? "; coordinator: " + coord.error() : ""));

    // Genuine exits first: a worker the harness had to kill after another
    // failed is a symptom, not the cause.
    std::vector<std::string> failures;
    const auto rank_of = read_rank_files(spec.out_dir);
    for (const bool want_exits : {true, false}) {
        for (size_t i = 0; i < pids.size(); ++i) {
            const int st = result.exit_status[i];
            if (st == 0 || (st < 128) != want_exits) continue;
            const auto it = rank_of.find(pids[i]);
            if (it != rank_of.end())
                failures.push_back("worker rank " + std::to_string(it->second) + " (pid " +
                                   std::to_string(pids[i]) + ") " + describe_exit(st));
            else
                failures.push_back("worker #" + std::to_string(i) + " (pid " +
                                   std::to_string(pids[i]) + ") " + describe_exit(st) +
                                   " before rank assignment");
        }
    }
    if (!failures.empty()) {
        std::string msg = failures[0];
        for (size_t i = 1; i < failures.size(); ++i) msg += "; " + failures[i];
        throw HarnessError(msg);
    }
    if (coord.failed()) throw HarnessError("coordinator: " + coord.error());

    result.metrics = read_metrics_csv((fs::path(spec.out_dir) / "metrics.csv").string());
    return result;
}

}  // namespace vitdp
