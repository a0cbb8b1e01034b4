#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vitdp/channel.hpp"
#include "vitdp/errors.hpp"

namespace vitdp {

// One participant in a world of ranks. Collectives are blocking and must be
// invoked by every rank in the same order with the same payload lengths.
// Socket worlds talk to a Coordinator for rendezvous and barriers; thread
// worlds (make_thread_world) share a process and use in-memory channels.
class ProcessGroup {
public:
    // Rendezvous against a coordinator. expected_world 0 accepts whatever the
    // coordinator announces; a nonzero value must match it.
    static std::unique_ptr<ProcessGroup> connect(const std::string& host, uint16_t port,
                                                 int expected_world = 0, double timeout_s = 30.0);
    ~ProcessGroup();
    ProcessGroup(const ProcessGroup&) = delete;
    ProcessGroup& operator=(const ProcessGroup&) = delete;

    int rank() const { return rank_; }
    int world_size() const { return world_; }

    void allreduce_sum(float* data, int64_t n);
    void allreduce_average(float* data, int64_t n);
    void broadcast(float* data, int64_t n, int root);
    void broadcast_bytes(uint8_t* data, int64_t n, int root);
    void barrier();
    void shutdown();

    void set_timeout(double seconds);

    // Time spent inside collective calls (includes waiting on peers).
    double comm_seconds() const { return comm_seconds_; }
    void reset_comm_seconds() { comm_seconds_ = 0.0; }

    uint64_t ring_bytes_sent() const;
    uint64_t ring_bytes_received() const;
    uint64_t allreduce_calls() const { return allreduce_calls_; }

private:
    friend std::vector<std::unique_ptr<ProcessGroup>> make_thread_world(int, double);
    ProcessGroup() = default;

    struct ThreadBarrier;

    Frame ring_exchange(const Frame& out);
    void check_ring_frame(const Frame& f, Opcode op, uint32_t tag, uint32_t chunk,
                          size_t payload_bytes) const;

    int rank_ = 0;
    int world_ = 1;
    std::unique_ptr<Channel> coord_;  // socket mode only
    std::unique_ptr<Channel> next_;
    std::unique_ptr<Channel> prev_;
    std::shared_ptr<ThreadBarrier> thread_barrier_;  // thread mode only
    double timeout_s_ = 30.0;

    uint32_t op_tag_ = 0;
    uint32_t barrier_round_ = 0;
    double comm_seconds_ = 0.0;
    uint64_t allreduce_calls_ = 0;
    bool shut_down_ = false;
};

std::vector<std::unique_ptr<ProcessGroup>> make_thread_world(int world_size,
                                                             double timeout_s = 30.0);

// Left-to-right sequential sum across ranks; the reference the ring is
// checked against.
template <typename T>
std::vector<T> naive_allreduce_oracle(const std::vector<std::vector<T>>& inputs) {
    if (inputs.empty()) throw UsageError("oracle needs at least one input");
    const size_t n = inputs[0].size();
    for (const auto& v : inputs)
        if (v.size() != n) throw UsageError("oracle inputs differ in length");
    std::vector<T> out(inputs[0]);
    for (size_t r = 1; r < inputs.size(); ++r)
        for (size_t i = 0; i < n; ++i) out[i] += inputs[r][i];
    return out;
}

}  // namespace vitdp
