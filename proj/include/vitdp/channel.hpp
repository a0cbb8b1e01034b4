#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "vitdp/frame.hpp"

namespace vitdp {

// Reliable ordered frame stream. Counters cover frame bytes (header + payload).
class Channel {
public:
    virtual ~Channel() = default;
    virtual void send_frame(const Frame& f) = 0;
    virtual Frame recv_frame() = 0;
    virtual void flush() {}
    virtual void close() {}
    uint64_t bytes_sent() const { return bytes_sent_; }
    uint64_t bytes_received() const { return bytes_received_; }
    void set_timeout(double seconds) { timeout_s_ = seconds; }
    double timeout() const { return timeout_s_; }

protected:
    uint64_t bytes_sent_ = 0;
    uint64_t bytes_received_ = 0;
    double timeout_s_ = 30.0;
};

namespace net {
// port 0 picks an ephemeral port; the chosen one is written back.
int tcp_listen(uint16_t& port, int backlog = 64);
// Retries refused connections until the deadline (the listener may start late).
int tcp_connect(const std::string& host, uint16_t port, double timeout_s);
int tcp_accept(int listen_fd, double timeout_s, std::string* peer_host = nullptr);
void close_fd(int fd);
}  // namespace net

// Nonblocking socket with an outgoing queue. send_frame never blocks; while
// recv_frame waits for inbound bytes it keeps draining the queue, so two peers
// pushing large chunks at each other cannot deadlock on full kernel buffers.
class SocketChannel : public Channel {
public:
    explicit SocketChannel(int fd);  // takes ownership of fd
    ~SocketChannel() override;
    SocketChannel(const SocketChannel&) = delete;
    SocketChannel& operator=(const SocketChannel&) = delete;

    void send_frame(const Frame& f) override;
    Frame recv_frame() override;
    void flush() override;
    void close() override;

    // Nonblocking: ingests whatever is readable, true once a full frame parsed.
    bool poll_frame(Frame& out);
    bool has_pending() const { return outbox_off_ < outbox_.size(); }
    void pump_writes() { try_flush_outbox(); }
    int fd() const { return fd_; }

private:
    bool try_parse(Frame& out);
    void try_flush_outbox();
    void read_available();  // nonblocking reads into inbox

    int fd_ = -1;
    bool peer_closed_ = false;
    std::vector<uint8_t> outbox_;
    size_t outbox_off_ = 0;
    std::vector<uint8_t> inbox_;
    size_t inbox_off_ = 0;
};

// In-process counterpart with identical framing; queues are unbounded.
class MemoryChannel : public Channel {
public:
    void send_frame(const Frame& f) override;
    Frame recv_frame() override;
    void close() override;

private:
    friend std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_memory_pair();
    struct Queue {
        std::mutex m;
        std::condition_variable cv;
        std::deque<Frame> q;
        bool closed = false;
    };
    std::shared_ptr<Queue> tx_;
    std::shared_ptr<Queue> rx_;
};

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_memory_pair();

}  // namespace vitdp
