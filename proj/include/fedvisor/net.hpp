#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "fedvisor/transport.hpp"

namespace fedvisor {
namespace net {

struct Address {
    std::string host;
    std::uint16_t port = 0;
};

inline Address parse_address(const std::string& url) {
    auto colon = url.rfind(':');
    if (colon == std::string::npos || colon + 1 >= url.size())
        throw ConfigError("address must be host:port, got '" + url + "'");
    Address a;
    a.host = url.substr(0, colon);
    int port = std::stoi(url.substr(colon + 1));
    if (port <= 0 || port > 65535) throw ConfigError("bad port in '" + url + "'");
    a.port = static_cast<std::uint16_t>(port);
    return a;
}

inline bool read_exact(int fd, std::uint8_t* buf, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
        ssize_t r = ::recv(fd, buf + got, n - got, 0);
        if (r <= 0) return false;
        got += static_cast<std::size_t>(r);
    }
    return true;
}

inline bool write_all(int fd, const std::uint8_t* buf, std::size_t n) {
    std::size_t sent = 0;
    while (sent < n) {
        ssize_t r = ::send(fd, buf + sent, n - sent, MSG_NOSIGNAL);
        if (r <= 0) return false;
        sent += static_cast<std::size_t>(r);
    }
    return true;
}

// Blocking read of one full frame (header validated first).
inline std::optional<std::vector<std::uint8_t>> read_frame(int fd,
                                                           std::size_t max_frame = kDefaultMaxFrame) {
    std::uint8_t header[kFrameHeaderSize];
    if (!read_exact(fd, header, sizeof(header))) return std::nullopt;
    if (std::memcmp(header, kFrameMagic, 4) != 0) return std::nullopt;
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(header[4 + i]) << (8 * i);
    if (len > max_frame) return std::nullopt;
    std::vector<std::uint8_t> frame(kFrameHeaderSize + len);
    std::memcpy(frame.data(), header, kFrameHeaderSize);
    if (len > 0 && !read_exact(fd, frame.data() + kFrameHeaderSize, len)) return std::nullopt;
    return frame;
}

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close(); }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = o.fd_;
            o.fd_ = -1;
        }
        return *this;
    }

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void close() {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
};

inline int dial(const Address& addr) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return -1;
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(addr.port);
    if (::inet_pton(AF_INET, addr.host.c_str(), &sa.sin_addr) != 1) {
        ::close(fd);
        return -1;
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0) {
        ::close(fd);
        return -1;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return fd;
}

}  // namespace net

// Accepts connections on a TCP address, one reader thread per connection,
// and funnels decoded frames into the queue the task loop polls. A client id
// is bound to its connection by the first JoinTask seen on it.
class NetServerTransport : public ServerTransport {
public:
    explicit NetServerTransport(const std::string& listen_url,
                                const ParamCodec& codec = identity_codec())
        : codec_(codec) {
        auto addr = net::parse_address(listen_url);
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw TransportError("cannot create listen socket");
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in sa{};
        sa.sin_family = AF_INET;
        sa.sin_port = htons(addr.port);
        if (::inet_pton(AF_INET, addr.host.c_str(), &sa.sin_addr) != 1)
            throw TransportError("bad listen host " + addr.host);
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0) {
            ::close(listen_fd_);
            throw TransportError("cannot bind " + listen_url);
        }
        if (::listen(listen_fd_, 64) != 0) {
            ::close(listen_fd_);
            throw TransportError("cannot listen on " + listen_url);
        }
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    ~NetServerTransport() override { stop(); }

    void stop() {
        bool expected = false;
        if (!stopping_.compare_exchange_strong(expected, true)) return;
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        {
            std::lock_guard lock(conns_mutex_);
            for (auto& [id, conn] : conns_) conn->sock.close();
        }
        if (accept_thread_.joinable()) accept_thread_.join();
        for (auto& t : reader_threads_)
            if (t.joinable()) t.join();
        queue_cv_.notify_all();
    }

    void send_to(const std::string& client_id, const Message& msg) override {
        std::shared_ptr<Conn> conn;
        {
            std::lock_guard lock(conns_mutex_);
            auto it = by_client_.find(client_id);
            if (it == by_client_.end()) return;  // client gone; deadline handles it
            conn = it->second;
        }
        auto frame = encode_message(msg, codec_);
        std::lock_guard lock(conn->write_mutex);
        net::write_all(conn->sock.fd(), frame.data(), frame.size());
    }

    std::optional<Envelope> poll(double timeout_s) override {
        std::unique_lock lock(queue_mutex_);
        if (queue_.empty()) {
            if (timeout_s <= 0.0) return std::nullopt;
            queue_cv_.wait_for(lock, std::chrono::duration<double>(timeout_s),
                               [this] { return !queue_.empty() || stopping_; });
        }
        if (queue_.empty()) return std::nullopt;
        Envelope env = std::move(queue_.front());
        queue_.pop_front();
        return env;
    }

private:
    struct Conn {
        net::Socket sock;
        std::mutex write_mutex;
        std::string client_id;  // set after JoinTask
    };

    void accept_loop() {
        while (!stopping_) {
            int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) break;
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            auto conn = std::make_shared<Conn>();
            conn->sock = net::Socket(fd);
            std::lock_guard lock(conns_mutex_);
            conns_[fd] = conn;
            reader_threads_.emplace_back([this, conn] { reader_loop(conn); });
        }
    }

    void reader_loop(std::shared_ptr<Conn> conn) {
        while (!stopping_) {
            auto frame = net::read_frame(conn->sock.fd());
            if (!frame) break;
            auto decoded = decode_message(*frame, kDefaultMaxFrame, codec_);
            if (!decoded.ok()) continue;  // hostile or garbled frame: drop it
            Envelope env;
            env.client_id = decoded.message->sender_id;
            env.frame_bytes = frame->size();
            env.msg = std::move(*decoded.message);
            if (std::holds_alternative<JoinTask>(env.msg.body)) {
                std::lock_guard lock(conns_mutex_);
                conn->client_id = env.client_id;
                by_client_[env.client_id] = conn;
            }
            push(std::move(env));
        }
        // connection went away
        std::string id;
        {
            std::lock_guard lock(conns_mutex_);
            id = conn->client_id;
            if (!id.empty()) {
                auto it = by_client_.find(id);
                if (it != by_client_.end() && it->second == conn) by_client_.erase(it);
            }
        }
        if (!id.empty() && !stopping_) {
            Envelope env;
            env.client_id = id;
            env.disconnected = true;
            push(std::move(env));
        }
    }

    void push(Envelope env) {
        {
            std::lock_guard lock(queue_mutex_);
            queue_.push_back(std::move(env));
        }
        queue_cv_.notify_one();
    }

    const ParamCodec& codec_;
    int listen_fd_ = -1;
    std::atomic<bool> stopping_{false};
    std::thread accept_thread_;
    std::vector<std::thread> reader_threads_;
    std::mutex conns_mutex_;
    std::map<int, std::shared_ptr<Conn>> conns_;
    std::map<std::string, std::shared_ptr<Conn>> by_client_;
    std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::deque<Envelope> queue_;
};

// Client side of the TCP transport. Reconnects re-dial and replay the join
// message so the server can re-bind the client id to the fresh connection.
class NetClientTransport : public ClientTransport {
public:
    NetClientTransport(const std::string& server_url, Message join_msg,
                       std::uint32_t connect_retries = 30,
                       const ParamCodec& codec = identity_codec())
        : addr_(net::parse_address(server_url)), join_msg_(std::move(join_msg)), codec_(codec) {
        // initial connect may race a server that is still starting up;
        // doubling backoff like the upload path
        double backoff_s = 0.5;
        for (std::uint32_t attempt = 0;; ++attempt) {
            int fd = net::dial(addr_);
            if (fd >= 0) {
                sock_ = net::Socket(fd);
                break;
            }
            if (attempt >= connect_retries)
                throw TransportError("cannot connect to " + server_url);
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff_s));
            backoff_s *= 2.0;
        }
    }

    bool send(const Message& msg) override {
        std::lock_guard lock(write_mutex_);
        if (!sock_.valid()) return false;
        auto frame = encode_message(msg, codec_);
        return net::write_all(sock_.fd(), frame.data(), frame.size());
    }

    std::optional<Message> recv(double timeout_s) override {
        pollfd pfd{sock_.fd(), POLLIN, 0};
        int ms = timeout_s <= 0.0 ? -1 : static_cast<int>(timeout_s * 1000.0);
        int ready = ::poll(&pfd, 1, ms);
        if (ready <= 0) return std::nullopt;
        auto frame = net::read_frame(sock_.fd());
        if (!frame) {
            sock_.close();
            return std::nullopt;
        }
        auto decoded = decode_message(*frame, kDefaultMaxFrame, codec_);
        if (!decoded.ok()) return std::nullopt;
        return std::move(*decoded.message);
    }

    bool reconnect() override {
        std::lock_guard lock(write_mutex_);
        sock_.close();
        int fd = net::dial(addr_);
        if (fd < 0) return false;
        sock_ = net::Socket(fd);
        auto frame = encode_message(join_msg_, codec_);
        return net::write_all(sock_.fd(), frame.data(), frame.size());
    }

    bool connected() const { return sock_.valid(); }

private:
    net::Address addr_;
    Message join_msg_;
    const ParamCodec& codec_;
    net::Socket sock_;
    std::mutex write_mutex_;
};

class RealSleeper : public Sleeper {
public:
    void sleep_s(double seconds) override {
        std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    }
};

}  // namespace fedvisor
