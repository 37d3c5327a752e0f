#pragma once

#include "scap/bytes.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>

namespace scap {

using Millis = std::chrono::milliseconds;

/// A byte stream. Implementations throw Timeout, ConnectionClosed or
/// IoError.
class Connection {
public:
  virtual ~Connection() = default;
  virtual void write_all(ByteView data) = 0;
  /// Returns 0 on orderly end of stream.
  virtual std::size_t read_some(std::span<std::uint8_t> out) = 0;
  virtual void close() noexcept = 0;
  /// Wakes a blocked reader from another thread; the connection is unusable
  /// afterwards.
  virtual void interrupt() noexcept {}
  virtual std::string peer() const = 0;
};

/// Pulls netstring-framed messages off a connection.
class FrameReader {
public:
  explicit FrameReader(Connection& conn, std::size_t max_frame = 1'048'576) : conn_(conn), max_frame_(max_frame) {}

  /// Returns the complete framed bytes (`<len>:<payload>,`), or nullopt when
  /// the peer closed the stream cleanly between frames. End of stream inside
  /// a frame throws TruncatedFrame; an oversized declared length throws
  /// FrameTooLarge before the payload is read.
  std::optional<Bytes> read_frame();

private:
  bool fill();

  Connection& conn_;
  std::size_t max_frame_;
  Bytes buffer_;
  std::size_t pos_ = 0;
};

class TcpConnection final : public Connection {
public:
  TcpConnection(int fd, Millis io_timeout, std::string peer);
  ~TcpConnection() override;
  TcpConnection(const TcpConnection&) = delete;
  TcpConnection& operator=(const TcpConnection&) = delete;

  void write_all(ByteView data) override;
  std::size_t read_some(std::span<std::uint8_t> out) override;
  void close() noexcept override;
  void interrupt() noexcept override;
  std::string peer() const override { return peer_; }

private:
  void wait(short events);

  std::atomic<int> fd_;
  Millis timeout_;
  std::string peer_;
};

/// Connects to host:port (name or literal), trying each address in turn.
/// Throws ConnectFailed or Timeout.
std::unique_ptr<Connection> tcp_connect(const std::string& host, std::uint16_t port, Millis timeout);

class TcpListener {
public:
  /// Port 0 picks an ephemeral port. Throws BindError.
  TcpListener(const std::string& address, std::uint16_t port, int backlog = 128);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const noexcept { return port_; }

  /// Waits up to `poll` for a connection; nullptr when none arrived.
  std::unique_ptr<Connection> accept(Millis poll, Millis io_timeout);

private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

class Dialer {
public:
  virtual ~Dialer() = default;
  virtual std::unique_ptr<Connection> connect(const std::string& host, std::uint16_t port, Millis timeout) = 0;
};

class TcpDialer final : public Dialer {
public:
  std::unique_ptr<Connection> connect(const std::string& host, std::uint16_t port, Millis timeout) override
  {
    return tcp_connect(host, port, timeout);
  }
};

} // namespace scap
