#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "vitdp/channel.hpp"

namespace vitdp {

// Rendezvous and barrier service. Accepts exactly `expected_world` workers,
// assigns ranks in connection order, hands out the peer address table, then
// serves barrier rounds until every worker sends SHUTDOWN.
class Coordinator {
public:
    explicit Coordinator(int expected_world, double timeout_s = 30.0);
    ~Coordinator();
    Coordinator(const Coordinator&) = delete;
    Coordinator& operator=(const Coordinator&) = delete;

    uint16_t port() const { return port_; }
    void run();
    std::thread spawn();  // run() on a background thread

    bool failed() const;
    std::string error() const;
    // "ARRIVE <rank> <tag>" / "RELEASE <tag>" entries in service order.
    std::vector<std::string> event_log() const;

private:
    struct Member {
        std::unique_ptr<SocketChannel> ch;
        std::string host;
        uint16_t peer_port = 0;
        bool hello = false;
        bool shutdown = false;
    };

    void handle_frame(size_t idx, const Frame& f);
    void assign_ranks();
    void fail_rendezvous();
    void release_barrier(uint32_t tag, const std::vector<int>& missing);
    void log_event(const std::string& line);
    void set_error(const std::string& msg);

    int expected_world_;
    double timeout_s_;
    int listen_fd_ = -1;
    uint16_t port_ = 0;

    std::vector<Member> members_;
    bool ranks_assigned_ = false;

    struct Round {
        std::vector<bool> arrived;
        int count = 0;
        double first_arrive = 0.0;  // monotonic seconds
        bool released = false;
    };
    std::vector<std::pair<uint32_t, Round>> rounds_;

    mutable std::mutex mu_;
    std::vector<std::string> log_;
    bool failed_ = false;
    std::string error_;
};

}  // namespace vitdp
