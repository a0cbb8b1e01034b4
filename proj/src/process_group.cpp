#include "vitdp/process_group.hpp"

#include <poll.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <mutex>

#include "vitdp/frame.hpp"

namespace vitdp {

namespace {

using Clock = std::chrono::steady_clock;

struct ScopedTimer {
    explicit ScopedTimer(double& acc) : acc_(acc), t0_(Clock::now()) {}
    ~ScopedTimer() { acc_ += std::chrono::duration<double>(Clock::now() - t0_).count(); }
    double& acc_;
    Clock::time_point t0_;
};

int remaining_ms(Clock::time_point deadline) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    return left.count() <= 0 ? 0 : static_cast<int>(left.count());
}

}  // namespace

struct ProcessGroup::ThreadBarrier {
    explicit ThreadBarrier(int w) : world(w) {}
    std::mutex m;
    std::condition_variable cv;
    int world;
    int count = 0;
    uint64_t gen = 0;

    void wait(double timeout_s) {
        std::unique_lock<std::mutex> lk(m);
        const uint64_t g = gen;
        if (++count == world) {
            count = 0;
            ++gen;
            cv.notify_all();
            return;
        }
        if (!cv.wait_for(lk, std::chrono::duration<double>(timeout_s), [&] { return gen != g; })) {
            --count;
            throw DeadlockError("barrier timeout");
        }
    }
};

std::unique_ptr<ProcessGroup> ProcessGroup::connect(const std::string& host, uint16_t port,
                                                    int expected_world, double timeout_s) {
    auto pg = std::unique_ptr<ProcessGroup>(new ProcessGroup());
    pg->timeout_s_ = timeout_s;

    uint16_t listen_port = 0;
    int listen_fd = net::tcp_listen(listen_port);
    try {
        auto coord = std::make_unique<SocketChannel>(net::tcp_connect(host, port, timeout_s));
        coord->set_timeout(timeout_s);

        Frame hello;
        hello.opcode = Opcode::hello;
        hello.chunk_index = listen_port;
        coord->send_frame(hello);
        coord->flush();

        Frame assign = coord->recv_frame();
        if (assign.opcode != Opcode::rank_assign || assign.payload.size() < 8)
            throw ProtocolError(std::string("expected RANK_ASSIGN, got ") +
                                opcode_name(assign.opcode));
        const uint32_t status = load_u32_le(assign.payload.data());
        if (status == 1) {
            const uint32_t got = load_u32_le(assign.payload.data() + 4);
            const uint32_t want = assign.payload.size() >= 12
                                      ? load_u32_le(assign.payload.data() + 8)
                                      : 0;
            throw RendezvousError("rendezvous timeout: " + std::to_string(got) + " of " +
                                  std::to_string(want) + " workers connected");
        }
        if (status == 2) throw RendezvousError("rejected: world already complete");
        if (status != 0) throw ProtocolError("unknown rendezvous status " + std::to_string(status));

        const int world = static_cast<int>(load_u32_le(assign.payload.data() + 4));
        const int rank = static_cast<int>(assign.chunk_index);
        if (world < 1 || rank < 0 || rank >= world)
            throw ProtocolError("bad rank assignment " + std::to_string(rank) + "/" +
                                std::to_string(world));
        if (expected_world > 0 && world != expected_world)
            throw RendezvousError("coordinator world " + std::to_string(world) + " but expected " +
                                  std::to_string(expected_world));

        std::vector<std::pair<std::string, uint16_t>> table;
        size_t off = 8;
        for (int r = 0; r < world; ++r) {
            if (off + 4 > assign.payload.size()) throw ProtocolError("truncated address table");
            const uint32_t hlen = load_u32_le(assign.payload.data() + off);
            off += 4;
            if (off + hlen + 4 > assign.payload.size())
                throw ProtocolError("truncated address table");
            std::string h(assign.payload.begin() + static_cast<std::ptrdiff_t>(off),
                          assign.payload.begin() + static_cast<std::ptrdiff_t>(off + hlen));
            off += hlen;
            const uint16_t p = static_cast<uint16_t>(load_u32_le(assign.payload.data() + off));
            off += 4;
            table.emplace_back(std::move(h), p);
        }

        pg->coord_ = std::move(coord);
        pg->rank_ = rank;
        pg->world_ = world;

        if (world > 1) {
            const int succ = (rank + 1) % world;
            auto next = std::make_unique<SocketChannel>(
                net::tcp_connect(table[static_cast<size_t>(succ)].first,
                                 table[static_cast<size_t>(succ)].second, timeout_s));
            next->set_timeout(timeout_s);
            Frame ring_hello;
            ring_hello.opcode = Opcode::hello;
            ring_hello.chunk_index = static_cast<uint32_t>(rank);
            next->send_frame(ring_hello);
            next->flush();

            auto prev = std::make_unique<SocketChannel>(net::tcp_accept(listen_fd, timeout_s));
            prev->set_timeout(timeout_s);
            Frame h = prev->recv_frame();
            const int want_pred = (rank + world - 1) % world;
            if (h.opcode != Opcode::hello || static_cast<int>(h.chunk_index) != want_pred)
                throw ProtocolError("ring neighbor claims rank " + std::to_string(h.chunk_index) +
                                    ", expected " + std::to_string(want_pred));
            pg->next_ = std::move(next);
            pg->prev_ = std::move(prev);
        }
        net::close_fd(listen_fd);
    } catch (...) {
        net::close_fd(listen_fd);
        throw;
    }
    return pg;
}

ProcessGroup::~ProcessGroup() {
    try {
        shutdown();
    } catch (...) {
    }
}

void ProcessGroup::shutdown() {
    if (shut_down_) return;
    shut_down_ = true;
    if (coord_) {
        try {
            Frame f;
            f.opcode = Opcode::shutdown;
            coord_->send_frame(f);
            coord_->flush();
        } catch (const TransportError&) {
        }
    }
    for (Channel* c : {coord_.get(), next_.get(), prev_.get()})
        if (c) c->close();
}

void ProcessGroup::set_timeout(double seconds) {
    timeout_s_ = seconds;
    for (Channel* c : {coord_.get(), next_.get(), prev_.get()})
        if (c) c->set_timeout(seconds);
}

uint64_t ProcessGroup::ring_bytes_sent() const { return next_ ? next_->bytes_sent() : 0; }
uint64_t ProcessGroup::ring_bytes_received() const { return prev_ ? prev_->bytes_received() : 0; }

Frame ProcessGroup::ring_exchange(const Frame& out) {
    auto* snext = dynamic_cast<SocketChannel*>(next_.get());
    auto* sprev = dynamic_cast<SocketChannel*>(prev_.get());
    if (!snext || !sprev) {
        next_->send_frame(out);
        return prev_->recv_frame();
    }
    // Keep draining our outgoing queue while waiting for the inbound frame, so
    // a ring of simultaneous large sends cannot wedge on full socket buffers.
    snext->send_frame(out);
    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                             std::chrono::duration<double>(timeout_s_));
    Frame in;
    while (true) {
        if (sprev->poll_frame(in)) return in;
        pollfd pfds[2] = {{sprev->fd(), POLLIN, 0}, {snext->fd(), POLLOUT, 0}};
        const nfds_t nfds = snext->has_pending() ? 2 : 1;
        const int ms = remaining_ms(deadline);
        if (ms == 0) throw TransportError("timeout in ring exchange");
        const int rc = ::poll(pfds, nfds, ms);
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw TransportError("poll failed in ring exchange");
        }
        if (rc == 0) throw TransportError("timeout in ring exchange");
        if (nfds == 2 && (pfds[1].revents & POLLOUT)) snext->pump_writes();
    }
}

void ProcessGroup::check_ring_frame(const Frame& f, Opcode op, uint32_t tag, uint32_t chunk,
                                    size_t payload_bytes) const {
    if (f.opcode != op || f.tag != tag || f.chunk_index != chunk ||
        f.payload.size() != payload_bytes)
        throw ProtocolError(std::string("ring frame mismatch: got ") + opcode_name(f.opcode) +
                            " tag " + std::to_string(f.tag) + " chunk " +
                            std::to_string(f.chunk_index) + " len " +
                            std::to_string(f.payload.size()) + ", expected " + opcode_name(op) +
                            " tag " + std::to_string(tag) + " chunk " + std::to_string(chunk) +
                            " len " + std::to_string(payload_bytes));
}

void ProcessGroup::allreduce_sum(float* data, int64_t n) {
    ScopedTimer timer(comm_seconds_);
    ++allreduce_calls_;
    if (n < 0) throw UsageError("negative buffer length");
    if (world_ == 1 || n == 0) return;

    const int64_t W = world_;
    const int64_t chunk = (n + W - 1) / W;  // ceil split; last chunk may be short or empty
    auto lo = [&](int64_t c) { return std::min(c * chunk, n); };
    auto len = [&](int64_t c) { return std::min((c + 1) * chunk, n) - std::min(c * chunk, n); };
    auto wrap = [&](int64_t v) { return ((v % W) + W) % W; };
    const uint32_t tag = op_tag_++;

    for (int64_t s = 0; s < W - 1; ++s) {
        const int64_t sc = wrap(rank_ - s), rc = wrap(rank_ - s - 1);
        Frame f;
        f.opcode = Opcode::reduce_chunk;
        f.tag = tag;
        f.chunk_index = static_cast<uint32_t>(sc);
        f.payload = floats_to_bytes(data + lo(sc), static_cast<size_t>(len(sc)));
        Frame in = ring_exchange(f);
        check_ring_frame(in, Opcode::reduce_chunk, tag, static_cast<uint32_t>(rc),
                         static_cast<size_t>(len(rc)) * 4);
        float* dst = data + lo(rc);
        for (int64_t i = 0; i < len(rc); ++i)
            dst[i] += load_f32_le(in.payload.data() + static_cast<size_t>(i) * 4);
    }

    for (int64_t s = 0; s < W - 1; ++s) {
        const int64_t sc = wrap(rank_ + 1 - s), rc = wrap(rank_ - s);
        Frame f;
        f.opcode = Opcode::gather_chunk;
        f.tag = tag;
        f.chunk_index = static_cast<uint32_t>(sc);
        f.payload = floats_to_bytes(data + lo(sc), static_cast<size_t>(len(sc)));
        Frame in = ring_exchange(f);
        check_ring_frame(in, Opcode::gather_chunk, tag, static_cast<uint32_t>(rc),
                         static_cast<size_t>(len(rc)) * 4);
        float* dst = data + lo(rc);
        for (int64_t i = 0; i < len(rc); ++i)
            dst[i] = load_f32_le(in.payload.data() + static_cast<size_t>(i) * 4);
    }

    if (auto* snext = dynamic_cast<SocketChannel*>(next_.get())) snext->flush();
}

void ProcessGroup::allreduce_average(float* data, int64_t n) {
    allreduce_sum(data, n);
    ScopedTimer timer(comm_seconds_);
    const float inv = static_cast<float>(1.0 / static_cast<double>(world_));
    for (int64_t i = 0; i < n; ++i) data[i] *= inv;
}

void ProcessGroup::broadcast_bytes(uint8_t* data, int64_t n, int root) {
    ScopedTimer timer(comm_seconds_);
    if (root < 0 || root >= world_) throw UsageError("broadcast root out of range");
    if (world_ == 1 || n == 0) return;
    const uint32_t tag = op_tag_++;
    if (rank_ == root) {
        Frame f;
        f.opcode = Opcode::bcast;
        f.tag = tag;
        f.payload.assign(data, data + n);
        next_->send_frame(f);
        next_->flush();
    } else {
        Frame in = prev_->recv_frame();
        check_ring_frame(in, Opcode::bcast, tag, 0, static_cast<size_t>(n));
        std::copy(in.payload.begin(), in.payload.end(), data);
        if ((rank_ + 1) % world_ != root) {
            next_->send_frame(in);
            next_->flush();
        }
    }
}

void ProcessGroup::broadcast(float* data, int64_t n, int root) {
    if (world_ == 1 || n == 0) return;
    std::vector<uint8_t> bytes = floats_to_bytes(data, static_cast<size_t>(n));
    broadcast_bytes(bytes.data(), static_cast<int64_t>(bytes.size()), root);
    if (rank_ != root) bytes_to_floats(bytes, data, static_cast<size_t>(n));
}

void ProcessGroup::barrier() {
    ScopedTimer timer(comm_seconds_);
    if (world_ == 1) return;
    if (thread_barrier_) {
        thread_barrier_->wait(timeout_s_);
        return;
    }
    const uint32_t round = barrier_round_++;
    Frame f;
    f.opcode = Opcode::barrier_arrive;
    f.tag = round;
    coord_->send_frame(f);
    coord_->flush();
    Frame in = coord_->recv_frame();
    if (in.opcode != Opcode::barrier_release || in.tag != round || in.payload.size() < 8)
        throw ProtocolError(std::string("expected BARRIER_RELEASE ") + std::to_string(round) +
                            ", got " + opcode_name(in.opcode) + " tag " + std::to_string(in.tag));
    const uint32_t status = load_u32_le(in.payload.data());
    if (status != 0) {
        const uint32_t count = load_u32_le(in.payload.data() + 4);
        std::string names;
        for (uint32_t i = 0; i < count && 8 + 4 * i + 4 <= in.payload.size(); ++i) {
            if (!names.empty()) names += ", ";
            names += std::to_string(load_u32_le(in.payload.data() + 8 + 4 * i));
        }
        throw DeadlockError("barrier timeout; missing ranks: " + names);
    }
}

std::vector<std::unique_ptr<ProcessGroup>> make_thread_world(int world_size, double timeout_s) {
    if (world_size < 1) throw UsageError("world size must be at least 1");
    std::vector<std::unique_ptr<ProcessGroup>> pgs;
    pgs.reserve(static_cast<size_t>(world_size));
    auto tb = std::make_shared<ProcessGroup::ThreadBarrier>(world_size);
    for (int r = 0; r < world_size; ++r) {
        auto pg = std::unique_ptr<ProcessGroup>(new ProcessGroup());
        pg->rank_ = r;
        pg->world_ = world_size;
        pg->timeout_s_ = timeout_s;
        pg->thread_barrier_ = tb;
        pgs.push_back(std::move(pg));
    }
    if (world_size > 1) {
        for (int r = 0; r < world_size; ++r) {
            auto [a, b] = make_memory_pair();
            a->set_timeout(timeout_s);
            b->set_timeout(timeout_s);
            pgs[static_cast<size_t>(r)]->next_ = std::move(a);
            pgs[static_cast<size_t>((r + 1) % world_size)]->prev_ = std::move(b);
        }
    }
    return pgs;
}

}  // namespace vitdp
