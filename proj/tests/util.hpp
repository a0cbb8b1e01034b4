#pragma once

// Shared helpers for multi-rank tests: run per-rank bodies on threads with
// exception propagation, socket worlds over loopback, scratch directories.

#include <exception>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "vitdp/coordinator.hpp"
#include "vitdp/process_group.hpp"

namespace testutil {

inline std::vector<std::exception_ptr> run_ranks_collect(int world_size,
                                                         const std::function<void(int)>& fn) {
    std::vector<std::exception_ptr> errors(static_cast<size_t>(world_size));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(world_size));
    for (int r = 0; r < world_size; ++r)
        threads.emplace_back([&, r] {
            try {
                fn(r);
            } catch (...) {
                errors[static_cast<size_t>(r)] = std::current_exception();
            }
        });
    for (auto& t : threads) t.join();
    return errors;
}

// Runs fn(rank) on world_size threads; rethrows the first captured exception.
inline void run_ranks(int world_size, const std::function<void(int)>& fn) {
    for (auto& e : run_ranks_collect(world_size, fn))
        if (e) std::rethrow_exception(e);
}

// Coordinator plus world_size socket-backed process groups, all in-process.
// pgs[i] holds the group whose assigned rank is i.
struct SocketWorld {
    std::unique_ptr<vitdp::Coordinator> coord;
    std::thread coord_thread;
    std::vector<std::unique_ptr<vitdp::ProcessGroup>> pgs;

    SocketWorld() = default;
    SocketWorld(SocketWorld&&) = default;
    SocketWorld& operator=(SocketWorld&&) = delete;

    void finish() {
        for (auto& pg : pgs)
            if (pg) pg->shutdown();
        if (coord_thread.joinable()) coord_thread.join();
    }
    ~SocketWorld() { finish(); }
};

inline SocketWorld make_socket_world(int world_size, double timeout_s = 30.0) {
    SocketWorld w;
    w.coord = std::make_unique<vitdp::Coordinator>(world_size, timeout_s);
    w.coord_thread = w.coord->spawn();
    std::vector<std::unique_ptr<vitdp::ProcessGroup>> got(static_cast<size_t>(world_size));
    run_ranks(world_size, [&](int i) {
        got[static_cast<size_t>(i)] =
            vitdp::ProcessGroup::connect("127.0.0.1", w.coord->port(), world_size, timeout_s);
    });
    w.pgs.resize(static_cast<size_t>(world_size));
    for (auto& pg : got) {
        const int r = pg->rank();
        w.pgs[static_cast<size_t>(r)] = std::move(pg);
    }
    return w;
}

// Fresh empty directory under the system temp dir.
inline std::string fresh_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / "vitdp_tests" / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

}  // namespace testutil
