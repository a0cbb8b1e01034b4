#include "vitdp/channel.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "vitdp/errors.hpp"

namespace vitdp {

namespace {

using Clock = std::chrono::steady_clock;

std::string errno_str() { return std::string(std::strerror(errno)); }

void set_nonblocking(int fd) {
    int flags = fcntl(fd, F_GETFL, 0);
    if (flags < 0 || fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0)
        throw TransportError("fcntl O_NONBLOCK: " + errno_str());
}

void set_nodelay(int fd) {
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

int remaining_ms(Clock::time_point deadline) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    return left.count() <= 0 ? 0 : static_cast<int>(left.count());
}

}  // namespace

namespace net {

int tcp_listen(uint16_t& port, int backlog) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("socket: " + errno_str());
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(port);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        std::string err = errno_str();
        ::close(fd);
        throw TransportError("bind port " + std::to_string(port) + ": " + err);
    }
    if (port == 0) {
        socklen_t len = sizeof(addr);
        if (getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) < 0) {
            ::close(fd);
            throw TransportError("getsockname: " + errno_str());
        }
        port = ntohs(addr.sin_port);
    }
    if (::listen(fd, backlog) < 0) {
        std::string err = errno_str();
        ::close(fd);
        throw TransportError("listen: " + err);
    }
    return fd;
}

int tcp_connect(const std::string& host, uint16_t port, double timeout_s) {
    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                             std::chrono::duration<double>(timeout_s));
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
        throw TransportError("cannot resolve " + host);

    std::string last_err = "unreachable";
    while (true) {
        int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
        if (fd < 0) {
            freeaddrinfo(res);
            throw TransportError("socket: " + errno_str());
        }
        set_nonblocking(fd);
        int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
        if (rc == 0 || errno == EINPROGRESS) {
            pollfd pfd{fd, POLLOUT, 0};
            rc = ::poll(&pfd, 1, remaining_ms(deadline));
            if (rc > 0) {
                int err = 0;
                socklen_t len = sizeof(err);
                getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
                if (err == 0) {
                    freeaddrinfo(res);
                    set_nodelay(fd);
                    return fd;
                }
                last_err = std::strerror(err);
            } else {
                last_err = "connect timeout";
            }
        } else {
            last_err = errno_str();
        }
        ::close(fd);
        if (Clock::now() >= deadline) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    freeaddrinfo(res);
    throw TransportError("connect " + host + ":" + std::to_string(port) + ": " + last_err);
}

int tcp_accept(int listen_fd, double timeout_s, std::string* peer_host) {
    pollfd pfd{listen_fd, POLLIN, 0};
    int rc = ::poll(&pfd, 1, static_cast<int>(timeout_s * 1000.0));
    if (rc == 0) throw TransportError("accept timeout");
    if (rc < 0) throw TransportError("poll: " + errno_str());
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    int fd = ::accept(listen_fd, reinterpret_cast<sockaddr*>(&addr), &len);
    if (fd < 0) throw TransportError("accept: " + errno_str());
    if (peer_host) {
        char buf[INET_ADDRSTRLEN] = {0};
        inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof(buf));
        *peer_host = buf;
    }
    set_nodelay(fd);
    return fd;
}

void close_fd(int fd) {
    if (fd >= 0) ::close(fd);
}

}  // namespace net

SocketChannel::SocketChannel(int fd) : fd_(fd) { set_nonblocking(fd_); }

SocketChannel::~SocketChannel() { close(); }

void SocketChannel::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void SocketChannel::send_frame(const Frame& f) {
    if (fd_ < 0) throw TransportError("send on closed channel");
    uint8_t header[kFrameHeaderSize];
    encode_frame_header(f, header);
    outbox_.insert(outbox_.end(), header, header + kFrameHeaderSize);
    outbox_.insert(outbox_.end(), f.payload.begin(), f.payload.end());
    bytes_sent_ += f.wire_size();
    try_flush_outbox();
}

void SocketChannel::try_flush_outbox() {
    while (outbox_off_ < outbox_.size()) {
        ssize_t n = ::send(fd_, outbox_.data() + outbox_off_, outbox_.size() - outbox_off_,
                           MSG_NOSIGNAL);
        if (n > 0) {
            outbox_off_ += static_cast<size_t>(n);
        } else if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
            return;
        } else {
            throw TransportError("send: " + (n == 0 ? std::string("zero write") : errno_str()));
        }
    }
    outbox_.clear();
    outbox_off_ = 0;
}

void SocketChannel::read_available() {
    uint8_t buf[65536];
    while (true) {
        ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
        if (n > 0) {
            inbox_.insert(inbox_.end(), buf, buf + n);
            if (static_cast<size_t>(n) < sizeof(buf)) return;
        } else if (n == 0) {
            peer_closed_ = true;
            return;
        } else if (errno == EAGAIN || errno == EWOULDBLOCK) {
            return;
        } else {
            throw TransportError("recv: " + errno_str());
        }
    }
}

bool SocketChannel::try_parse(Frame& out) {
    const size_t avail = inbox_.size() - inbox_off_;
    if (avail < kFrameHeaderSize) return false;
    const uint8_t* p = inbox_.data() + inbox_off_;
    Frame f;
    const uint32_t plen = decode_frame_header(p, f);
    if (avail < kFrameHeaderSize + plen) return false;
    f.payload.assign(p + kFrameHeaderSize, p + kFrameHeaderSize + plen);
    inbox_off_ += kFrameHeaderSize + plen;
    if (inbox_off_ == inbox_.size()) {
        inbox_.clear();
        inbox_off_ = 0;
    } else if (inbox_off_ > (1u << 20)) {
        inbox_.erase(inbox_.begin(), inbox_.begin() + static_cast<std::ptrdiff_t>(inbox_off_));
        inbox_off_ = 0;
    }
    bytes_received_ += f.wire_size();
    out = std::move(f);
    return true;
}

bool SocketChannel::poll_frame(Frame& out) {
    if (try_parse(out)) return true;
    if (fd_ < 0) throw TransportError("recv on closed channel");
    read_available();
    if (try_parse(out)) return true;
    if (peer_closed_) throw TransportError("peer closed connection");
    return false;
}

Frame SocketChannel::recv_frame() {
    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                             std::chrono::duration<double>(timeout_s_));
    Frame out;
    while (true) {
        if (try_parse(out)) return out;
        if (fd_ < 0) throw TransportError("recv on closed channel");
        if (peer_closed_) throw TransportError("peer closed connection");
        pollfd pfd{fd_, POLLIN, 0};
        if (outbox_off_ < outbox_.size()) pfd.events |= POLLOUT;
        int ms = remaining_ms(deadline);
        if (ms == 0) throw TransportError("timeout waiting for frame");
        int rc = ::poll(&pfd, 1, ms);
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw TransportError("poll: " + errno_str());
        }
        if (rc == 0) throw TransportError("timeout waiting for frame");
        if (pfd.revents & POLLOUT) try_flush_outbox();
        if (pfd.revents & (POLLIN | POLLERR | POLLHUP)) read_available();
    }
}

void SocketChannel::flush() {
    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                             std::chrono::duration<double>(timeout_s_));
    while (outbox_off_ < outbox_.size()) {
        try_flush_outbox();
        if (outbox_off_ >= outbox_.size()) break;
        pollfd pfd{fd_, POLLOUT, 0};
        int ms = remaining_ms(deadline);
        if (ms == 0) throw TransportError("timeout draining send queue");
        int rc = ::poll(&pfd, 1, ms);
        if (rc == 0) throw TransportError("timeout draining send queue");
        if (rc < 0 && errno != EINTR) throw TransportError("poll: " + errno_str());
    }
}

void MemoryChannel::send_frame(const Frame& f) {
    std::lock_guard<std::mutex> lk(tx_->m);
    if (tx_->closed) throw TransportError("send on closed channel");
    tx_->q.push_back(f);
    bytes_sent_ += f.wire_size();
    tx_->cv.notify_all();
}

Frame MemoryChannel::recv_frame() {
    std::unique_lock<std::mutex> lk(rx_->m);
    const bool ok = rx_->cv.wait_for(lk, std::chrono::duration<double>(timeout_s_),
                                     [&] { return !rx_->q.empty() || rx_->closed; });
    if (!ok) throw TransportError("timeout waiting for frame");
    if (rx_->q.empty()) throw TransportError("peer closed connection");
    Frame f = std::move(rx_->q.front());
    rx_->q.pop_front();
    bytes_received_ += f.wire_size();
    return f;
}

void MemoryChannel::close() {
    for (auto& q : {tx_, rx_}) {
        if (!q) continue;
        std::lock_guard<std::mutex> lk(q->m);
        q->closed = true;
        q->cv.notify_all();
    }
}

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_memory_pair() {
    auto a2b = std::make_shared<MemoryChannel::Queue>();
    auto b2a = std::make_shared<MemoryChannel::Queue>();
    auto a = std::make_unique<MemoryChannel>();
    auto b = std::make_unique<MemoryChannel>();
    a->tx_ = a2b;
    a->rx_ = b2a;
    b->tx_ = b2a;
    b->rx_ = a2b;
    std::unique_ptr<Channel> ca(std::move(a));
    std::unique_ptr<Channel> cb(std::move(b));
    return {std::move(ca), std::move(cb)};
}

}  // namespace vitdp
