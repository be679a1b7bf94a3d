#pragma once

#include "orvicon/wire.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>

namespace orvicon::net {

/// Request/response exchange of envelopes. Both the in-process wiring and the
/// loopback socket client implement this.
class Channel {
public:
    virtual ~Channel() = default;
    virtual wire::Envelope call(const wire::Envelope& request) = 0;
};

using Handler = std::function<wire::Envelope(const wire::Envelope&)>;

class InProcessChannel final : public Channel {
public:
    explicit InProcessChannel(Handler handler) : handler_(std::move(handler)) {}
    wire::Envelope call(const wire::Envelope& request) override { return handler_(request); }

private:
    Handler handler_;
};

/// Owning wrapper around a connected stream socket carrying length-prefixed
/// envelope messages.
class Connection {
public:
    explicit Connection(int fd) noexcept : fd_(fd) {}
    Connection(Connection&& other) noexcept : fd_(std::exchange(other.fd_, -1)), reader_(std::move(other.reader_)) {}
    Connection& operator=(Connection&&) = delete;
    Connection(const Connection&) = delete;
    ~Connection();

    static Connection connect_loopback(std::uint16_t port);

    void send(std::string_view payload);
    /// Blocks for the next message; std::nullopt on orderly close.
    std::optional<std::string> receive();
    void shutdown() noexcept;
    int fd() const noexcept { return fd_; }

private:
    int fd_ = -1;
    wire::MessageReader reader_;
};

/// Client side of a loopback connection; serializes calls so one Channel may
/// be shared between threads.
class SocketChannel final : public Channel {
public:
    explicit SocketChannel(std::uint16_t port) : conn_(Connection::connect_loopback(port)) {}
    wire::Envelope call(const wire::Envelope& request) override;

private:
    std::mutex mutex_;
    Connection conn_;
};

/// Thread-per-connection server on 127.0.0.1. Each received envelope is passed
/// to the handler and the returned envelope written back on the same
/// connection. Messages that fail to parse get an ERROR envelope.
class Server {
public:
    Server(Handler handler, std::string server_id, std::uint16_t port = 0);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    std::uint16_t port() const noexcept { return port_; }
    void stop();

private:
    void accept_loop();
    void serve(std::shared_ptr<Connection> conn);

    Handler handler_;
    std::string server_id_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
    std::mutex mutex_;
    std::list<std::shared_ptr<Connection>> connections_;
    std::list<std::thread> workers_;
};

}  // namespace orvicon::net
