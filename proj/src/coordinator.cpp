#include "vitdp/coordinator.hpp"

#include <poll.h>

#include <algorithm>
#include <chrono>

#include "vitdp/errors.hpp"

namespace vitdp {

namespace {

double mono_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

Coordinator::Coordinator(int expected_world, double timeout_s)
    : expected_world_(expected_world), timeout_s_(timeout_s) {
    if (expected_world < 1) throw UsageError("world size must be at least 1");
    port_ = 0;
    listen_fd_ = net::tcp_listen(port_);
}

Coordinator::~Coordinator() { net::close_fd(listen_fd_); }

std::thread Coordinator::spawn() {
    return std::thread([this] {
        try {
            run();
        } catch (const std::exception& e) {
            set_error(e.what());
        }
    });
}

bool Coordinator::failed() const {
    std::lock_guard<std::mutex> lk(mu_);
    return failed_;
}

std::string Coordinator::error() const {
    std::lock_guard<std::mutex> lk(mu_);
    return error_;
}

std::vector<std::string> Coordinator::event_log() const {
    std::lock_guard<std::mutex> lk(mu_);
    return log_;
}

void Coordinator::log_event(const std::string& line) {
    std::lock_guard<std::mutex> lk(mu_);
    log_.push_back(line);
}

void Coordinator::set_error(const std::string& msg) {
    std::lock_guard<std::mutex> lk(mu_);
    failed_ = true;
    if (error_.empty()) error_ = msg;
}

void Coordinator::assign_ranks() {
    // payload: status, world, then per rank {host_len, host, port}
    std::vector<uint8_t> table;
    auto push_u32 = [&table](uint32_t v) {
        uint8_t b[4];
        store_u32_le(b, v);
        table.insert(table.end(), b, b + 4);
    };
    push_u32(0);
    push_u32(static_cast<uint32_t>(expected_world_));
    for (const Member& m : members_) {
        push_u32(static_cast<uint32_t>(m.host.size()));
        table.insert(table.end(), m.host.begin(), m.host.end());
        push_u32(m.peer_port);
    }
    for (size_t r = 0; r < members_.size(); ++r) {
        Frame f;
        f.opcode = Opcode::rank_assign;
        f.chunk_index = static_cast<uint32_t>(r);
        f.payload = table;
        members_[r].ch->send_frame(f);
        members_[r].ch->flush();
    }
    ranks_assigned_ = true;
}

void Coordinator::fail_rendezvous() {
    Frame f;
    f.opcode = Opcode::rank_assign;
    f.payload.resize(12);
    store_u32_le(f.payload.data(), 1);
    store_u32_le(f.payload.data() + 4, static_cast<uint32_t>(members_.size()));
    store_u32_le(f.payload.data() + 8, static_cast<uint32_t>(expected_world_));
    for (Member& m : members_) {
        try {
            m.ch->send_frame(f);
            m.ch->flush();
        } catch (const TransportError&) {
        }
    }
    set_error("rendezvous timeout: " + std::to_string(members_.size()) + " of " +
              std::to_string(expected_world_) + " workers connected");
}

void Coordinator::release_barrier(uint32_t tag, const std::vector<int>& missing) {
    Frame f;
    f.opcode = Opcode::barrier_release;
    f.tag = tag;
    f.payload.resize(8 + 4 * missing.size());
    store_u32_le(f.payload.data(), missing.empty() ? 0u : 1u);
    store_u32_le(f.payload.data() + 4, static_cast<uint32_t>(missing.size()));
    for (size_t i = 0; i < missing.size(); ++i)
        store_u32_le(f.payload.data() + 8 + 4 * i, static_cast<uint32_t>(missing[i]));
    log_event("RELEASE " + std::to_string(tag));
    for (Member& m : members_) {
        if (m.shutdown || !m.ch) continue;
        try {
            m.ch->send_frame(f);
            m.ch->flush();
        } catch (const TransportError&) {
        }
    }
}

void Coordinator::handle_frame(size_t idx, const Frame& f) {
    Member& m = members_[idx];
    switch (f.opcode) {
        case Opcode::hello:
            m.peer_port = static_cast<uint16_t>(f.chunk_index);
            m.hello = true;
            break;
        case Opcode::barrier_arrive: {
            Round* round = nullptr;
            for (auto& [tag, r] : rounds_)
                if (tag == f.tag) round = &r;
            if (!round) {
                rounds_.emplace_back(f.tag, Round{});
                round = &rounds_.back().second;
                round->arrived.assign(static_cast<size_t>(expected_world_), false);
                round->first_arrive = mono_seconds();
            }
            if (!round->arrived[idx]) {
                round->arrived[idx] = true;
                ++round->count;
            }
            log_event("ARRIVE " + std::to_string(idx) + " " + std::to_string(f.tag));
            if (round->count == expected_world_ && !round->released) {
                round->released = true;
                release_barrier(f.tag, {});
            }
            break;
        }
        case Opcode::shutdown:
            m.shutdown = true;
            break;
        default:
            set_error(std::string("unexpected ") + opcode_name(f.opcode) + " from worker " +
                      std::to_string(idx));
    }
}

void Coordinator::run() {
    const double start = mono_seconds();
    while (true) {
        // Rendezvous completion / failure checks.
        if (!ranks_assigned_) {
            bool all_hello = static_cast<int>(members_.size()) == expected_world_;
            for (const Member& m : members_)
                if (!m.hello) all_hello = false;
            if (all_hello) {
                assign_ranks();
            } else if (mono_seconds() - start > timeout_s_) {
                fail_rendezvous();
                return;
            }
        } else {
            bool all_done = true;
            for (const Member& m : members_)
                if (!m.shutdown) all_done = false;
            if (all_done) return;

            // Barrier rounds that cannot complete in time name the absentees.
            for (auto& [tag, round] : rounds_) {
                if (!round.released && round.count < expected_world_ &&
                    mono_seconds() - round.first_arrive > timeout_s_) {
                    std::vector<int> missing;
                    for (int r = 0; r < expected_world_; ++r)
                        if (!round.arrived[static_cast<size_t>(r)]) missing.push_back(r);
                    round.released = true;
                    release_barrier(tag, missing);
                    std::string names;
                    for (int r : missing) names += (names.empty() ? "" : ", ") + std::to_string(r);
                    set_error("barrier " + std::to_string(tag) + " timeout; missing ranks: " + names);
                    return;
                }
            }
        }

        std::vector<pollfd> pfds;
        pfds.push_back({listen_fd_, POLLIN, 0});
        std::vector<size_t> idx_of;
        for (size_t i = 0; i < members_.size(); ++i) {
            if (members_[i].ch && !members_[i].shutdown) {
                pfds.push_back({members_[i].ch->fd(), POLLIN, 0});
                idx_of.push_back(i);
            }
        }
        int rc = ::poll(pfds.data(), pfds.size(), 100);
        if (rc < 0) continue;

        if (pfds[0].revents & POLLIN) {
            std::string host;
            int fd = net::tcp_accept(listen_fd_, timeout_s_, &host);
            if (!ranks_assigned_ && static_cast<int>(members_.size()) < expected_world_) {
                Member m;
                m.ch = std::make_unique<SocketChannel>(fd);
                m.ch->set_timeout(timeout_s_);
                m.host = host;
                members_.push_back(std::move(m));
            } else {
                // Late or duplicate connection: reject and drop.
                SocketChannel reject(fd);
                Frame f;
                f.opcode = Opcode::rank_assign;
                f.payload.resize(12);
                store_u32_le(f.payload.data(), 2);
                store_u32_le(f.payload.data() + 4, static_cast<uint32_t>(expected_world_));
                store_u32_le(f.payload.data() + 8, static_cast<uint32_t>(expected_world_));
                try {
                    reject.send_frame(f);
                    reject.flush();
                } catch (const TransportError&) {
                }
            }
        }

        for (size_t p = 1; p < pfds.size(); ++p) {
            if (!(pfds[p].revents & (POLLIN | POLLERR | POLLHUP))) continue;
            const size_t i = idx_of[p - 1];
            try {
                Frame f;
                while (members_[i].ch->poll_frame(f)) handle_frame(i, f);
            } catch (const TransportError&) {
                // Worker vanished; barrier timeouts surface the consequences.
                members_[i].ch->close();
                if (!members_[i].shutdown && ranks_assigned_)
                    set_error("worker " + std::to_string(i) + " disconnected");
                members_[i].shutdown = true;
            }
        }
    }
}

}  // namespace vitdp
