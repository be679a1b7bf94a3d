#include "orvicon/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace orvicon::net {

namespace {
[[noreturn]] void fail_errno(const std::string& what) {
    fail(ErrorCode::Transport, what + ": " + std::strerror(errno));
}
}  // namespace

Connection::~Connection() {
    if (fd_ >= 0) ::close(fd_);
}

Connection Connection::connect_loopback(std::uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) fail_errno("socket");
    Connection conn(fd);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) fail_errno("connect");
    return conn;
}

void Connection::send(std::string_view payload) {
    auto bytes = wire::frame_message(payload);
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail_errno("send");
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::optional<std::string> Connection::receive() {
    std::uint8_t chunk[16384];
    while (true) {
        if (auto message = reader_.next()) return message;
        ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
        if (n == 0) {
            if (reader_.buffered() != 0) fail(ErrorCode::Transport, "connection closed mid-message");
            return std::nullopt;
        }
        if (n < 0) {
            if (errno == EINTR) continue;
            fail_errno("recv");
        }
        reader_.feed(std::span(chunk, static_cast<std::size_t>(n)));
    }
}

void Connection::shutdown() noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

wire::Envelope SocketChannel::call(const wire::Envelope& request) {
    std::lock_guard lock(mutex_);
    conn_.send(wire::serialize_envelope(request));
    auto reply = conn_.receive();
    if (!reply) fail(ErrorCode::Transport, "server closed the connection");
    return wire::parse_envelope(*reply);
}

// ---------------------------------------------------------------------------

Server::Server(Handler handler, std::string server_id, std::uint16_t port)
    : handler_(std::move(handler)), server_id_(std::move(server_id)) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (listen_fd_ < 0) fail_errno("socket");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listen_fd_, 64) != 0) {
        int saved = errno;
        ::close(listen_fd_);
        errno = saved;
        fail_errno("bind/listen");
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
}

Server::~Server() { stop(); }

void Server::stop() {
    if (stopping_.exchange(true)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable()) acceptor_.join();
    std::list<std::thread> workers;
    {
        std::lock_guard lock(mutex_);
        for (auto& conn : connections_) conn->shutdown();
        workers.swap(workers_);
    }
    for (auto& w : workers) w.join();
}

void Server::accept_loop() {
    while (!stopping_) {
        int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) {
            if (errno == EINTR) continue;
            return;
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        auto conn = std::make_shared<Connection>(fd);
        std::lock_guard lock(mutex_);
        if (stopping_) return;
        connections_.push_back(conn);
        workers_.emplace_back([this, conn] { serve(conn); });
    }
}

void Server::serve(std::shared_ptr<Connection> conn) {
    try {
        while (auto message = conn->receive()) {
            wire::Envelope reply;
            try {
                reply = handler_(wire::parse_envelope(*message));
            } catch (const Error& e) {
                reply.sender_id = server_id_;
                reply.msg_type = wire::MsgType::Error;
                reply.body = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
            }
            conn->send(wire::serialize_envelope(reply));
        }
    } catch (const Error&) {
        // peer went away or sent garbage framing; drop the connection
    }
    conn->shutdown();
}

}  // namespace orvicon::net
