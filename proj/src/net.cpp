#include "scap/net.hpp"

#include "scap/error.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace scap {

namespace {

std::string errno_text() { return std::strerror(errno); }

std::string describe_peer(const sockaddr* sa)
{
  char host[INET6_ADDRSTRLEN] = "?";
  std::uint16_t port = 0;
  if (sa->sa_family == AF_INET) {
    const auto* in = reinterpret_cast<const sockaddr_in*>(sa);
    inet_ntop(AF_INET, &in->sin_addr, host, sizeof host);
    port = ntohs(in->sin_port);
    return std::string(host) + ":" + std::to_string(port);
  }
  if (sa->sa_family == AF_INET6) {
    const auto* in6 = reinterpret_cast<const sockaddr_in6*>(sa);
    inet_ntop(AF_INET6, &in6->sin6_addr, host, sizeof host);
    port = ntohs(in6->sin6_port);
  }
  return "[" + std::string(host) + "]:" + std::to_string(port);
}

int poll_one(int fd, short events, Millis timeout)
{
  pollfd p{fd, events, 0};
  while (true) {
    int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc < 0 && errno == EINTR) {
      continue;
    }
    return rc;
  }
}

} // namespace

// ---------------------------------------------------------------------------

bool FrameReader::fill()
{
  if (pos_ > 0) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
  std::uint8_t chunk[4096];
  auto n = conn_.read_some(chunk);
  if (n == 0) {
    return false;
  }
  buffer_.insert(buffer_.end(), chunk, chunk + n);
  return true;
}

std::optional<Bytes> FrameReader::read_frame()
{
  // Length field.
  std::size_t length = 0;
  std::size_t digits = 0;
  while (true) {
    if (pos_ + digits == buffer_.size() && !fill()) {
      if (digits == 0 && pos_ == buffer_.size()) {
        return std::nullopt;
      }
      fail(Errc::TruncatedFrame, "stream ended inside the length field");
    }
    auto c = buffer_[pos_ + digits];
    if (c == ':') {
      break;
    }
    if (c < '0' || c > '9' || (digits == 1 && buffer_[pos_] == '0')) {
      fail(Errc::MalformedNetstring, "bad frame length field");
    }
    length = length * 10 + (c - '0');
    if (length > max_frame_) {
      fail(Errc::FrameTooLarge, "declared frame length exceeds " + std::to_string(max_frame_));
    }
    ++digits;
  }
  if (digits == 0) {
    fail(Errc::MalformedNetstring, "empty frame length field");
  }
  std::size_t total = digits + 1 + length + 1;
  while (buffer_.size() - pos_ < total) {
    if (!fill()) {
      fail(Errc::TruncatedFrame, "stream ended inside a frame");
    }
  }
  Bytes frame(buffer_.begin() + static_cast<std::ptrdiff_t>(pos_),
              buffer_.begin() + static_cast<std::ptrdiff_t>(pos_ + total));
  pos_ += total;
  if (frame.back() != ',') {
    fail(Errc::MalformedNetstring, "frame is missing its ',' terminator");
  }
  return frame;
}

// ---------------------------------------------------------------------------

TcpConnection::TcpConnection(int fd, Millis io_timeout, std::string peer)
  : fd_(fd), timeout_(io_timeout), peer_(std::move(peer))
{
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpConnection::~TcpConnection() { close(); }

void TcpConnection::close() noexcept
{
  int fd = fd_.exchange(-1);
  if (fd >= 0) {
    ::close(fd);
  }
}

void TcpConnection::interrupt() noexcept
{
  int fd = fd_.load();
  if (fd >= 0) {
    ::shutdown(fd, SHUT_RDWR);
  }
}

void TcpConnection::wait(short events)
{
  if (fd_ < 0) {
    fail(Errc::ConnectionClosed, "connection already closed");
  }
  int rc = poll_one(fd_, events, timeout_);
  if (rc == 0) {
    fail(Errc::Timeout, "no activity from " + peer_ + " within " + std::to_string(timeout_.count()) + " ms");
  }
  if (rc < 0) {
    fail(Errc::IoError, "poll: " + errno_text());
  }
}

void TcpConnection::write_all(ByteView data)
{
  std::size_t sent = 0;
  while (sent < data.size()) {
    wait(POLLOUT);
    auto n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK) {
        continue;
      }
      fail(Errc::ConnectionClosed, "send to " + peer_ + ": " + errno_text());
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::size_t TcpConnection::read_some(std::span<std::uint8_t> out)
{
  while (true) {
    wait(POLLIN);
    auto n = ::recv(fd_, out.data(), out.size(), 0);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK) {
        continue;
      }
      fail(Errc::ConnectionClosed, "recv from " + peer_ + ": " + errno_text());
    }
    return static_cast<std::size_t>(n);
  }
}

std::unique_ptr<Connection> tcp_connect(const std::string& host, std::uint16_t port, Millis timeout)
{
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  auto service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &result); rc != 0) {
    fail(Errc::ConnectFailed, host + ": " + gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(result, &::freeaddrinfo);

  std::string last_error = "no addresses";
  bool timed_out = false;
  for (auto* ai = result; ai != nullptr; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_NONBLOCK | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) {
      last_error = errno_text();
      continue;
    }
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      rc = poll_one(fd, POLLOUT, timeout);
      if (rc == 0) {
        timed_out = true;
        last_error = "connect timed out";
        ::close(fd);
        continue;
      }
      int err = 0;
      socklen_t len = sizeof err;
      ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
      rc = err == 0 ? 0 : -1;
      errno = err;
    }
    if (rc != 0) {
      last_error = errno_text();
      ::close(fd);
      continue;
    }
    return std::make_unique<TcpConnection>(fd, timeout, describe_peer(ai->ai_addr));
  }
  fail(timed_out ? Errc::Timeout : Errc::ConnectFailed, host + ":" + service + ": " + last_error);
}

// ---------------------------------------------------------------------------

TcpListener::TcpListener(const std::string& address, std::uint16_t port, int backlog)
{
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE | AI_NUMERICHOST;
  addrinfo* result = nullptr;
  auto service = std::to_string(port);
  const char* node = address.empty() ? nullptr : address.c_str();
  if (int rc = ::getaddrinfo(node, service.c_str(), &hints, &result); rc != 0) {
    fail(Errc::BindError, address + ": " + gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(result, &::freeaddrinfo);
  fd_ = ::socket(result->ai_family, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0);
  if (fd_ < 0) {
    fail(Errc::BindError, "socket: " + errno_text());
  }
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd_, result->ai_addr, result->ai_addrlen) != 0 || ::listen(fd_, backlog) != 0) {
    auto text = errno_text();
    ::close(fd_);
    fd_ = -1;
    fail(Errc::BindError, address + ":" + service + ": " + text);
  }
  sockaddr_storage bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = bound.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port)
                                      : ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
}

TcpListener::~TcpListener()
{
  if (fd_ >= 0) {
    ::close(fd_);
  }
}

std::unique_ptr<Connection> TcpListener::accept(Millis poll, Millis io_timeout)
{
  if (poll_one(fd_, POLLIN, poll) <= 0) {
    return nullptr;
  }
  sockaddr_storage peer{};
  socklen_t len = sizeof peer;
  int fd = ::accept4(fd_, reinterpret_cast<sockaddr*>(&peer), &len, SOCK_NONBLOCK | SOCK_CLOEXEC);
  if (fd < 0) {
    return nullptr;
  }
  return std::make_unique<TcpConnection>(fd, io_timeout, describe_peer(reinterpret_cast<sockaddr*>(&peer)));
}

} // namespace scap
