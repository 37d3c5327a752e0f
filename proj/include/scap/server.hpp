#pragma once

#include "scap/codec.hpp"
#include "scap/net.hpp"
#include "scap/session.hpp"
#include "scap/store.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

namespace scap {

inline constexpr std::string_view kMissDescription = "no data for this cryptoaddress and service";

struct ServerConfig {
  std::string listen_address = "0.0.0.0";
  std::uint16_t port = 4332;
  std::filesystem::path key_file;
  std::filesystem::path store_file;
  std::vector<std::string> extensions;
  std::size_t max_sessions = 256;
  std::chrono::seconds io_timeout{30};
};

/// Flat `key = value` lines; `#` starts a comment. Relative paths are taken
/// relative to `base_dir`. Throws ConfigError.
ServerConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ServerConfig load_config(const std::filesystem::path& path);

/// Handlers for proprietary `X` messages, keyed by advertised name
/// (including the leading `X`).
class ExtensionRegistry {
public:
  using Handler = std::function<ProtocolMessage(ByteView data)>;

  /// Names listed in the reply to H. Throws InvalidExtensionName.
  void advertise(std::string name);
  void add_handler(std::string name, Handler handler);

  const std::vector<std::string>& advertised() const noexcept { return advertised_; }
  const Handler* find(std::string_view name) const;

private:
  std::vector<std::string> advertised_;
  std::map<std::string, Handler, std::less<>> handlers_;
};

/// Answers one client message. Always returns O, Z or D. A null store maps
/// to a temporary failure.
ProtocolMessage handle_message(const MappingStore* store, const ExtensionRegistry& extensions,
                               const ProtocolMessage& msg);

/// Runs the server side of one connection.
class ServerConnection {
public:
  ServerConnection(Connection& conn, const KeyPair& keys, const SharedStore& store,
                   const ExtensionRegistry& extensions, EntropySource& entropy);
  ServerConnection(Connection& conn, ServerSession session, const SharedStore& store,
                   const ExtensionRegistry& extensions);

  /// Serves one request. Returns false when the peer closed cleanly before
  /// sending anything further. Session errors propagate; the caller closes.
  bool step();

  /// step() until the peer leaves or an error occurs; errors are logged and
  /// the connection is closed.
  void run() noexcept;

  ServerSession& session() noexcept { return session_; }

  /// Called after each successfully opened request with the reply about to
  /// be sealed.
  using ExchangeObserver = std::function<void(const ProtocolMessage& request, const ProtocolMessage& reply)>;
  void set_exchange_observer(ExchangeObserver observer) { observer_ = std::move(observer); }

private:
  Connection& conn_;
  FrameReader reader_;
  const SharedStore& store_;
  const ExtensionRegistry& extensions_;
  ServerSession session_;
  ExchangeObserver observer_;
};

class Server {
public:
  Server(ServerConfig config, KeyPair keys, std::shared_ptr<SharedStore> store, ExtensionRegistry extensions = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Throws BindError.
  void bind();
  /// Bound port, valid after bind().
  std::uint16_t port() const noexcept;

  /// Accept loop; returns after stop(). Joins every session thread.
  void run();
  void stop() noexcept { stopping_ = true; }

  /// Re-reads the store file; on failure the previous store stays active.
  bool reload_store() noexcept;

  std::size_t active_sessions() const noexcept { return active_; }
  std::size_t accepted_connections() const noexcept { return accepted_; }
  const ServerConfig& config() const noexcept { return config_; }

private:
  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
    std::shared_ptr<Connection> conn;
  };
  void prune(bool all);

  ServerConfig config_;
  KeyPair keys_;
  std::shared_ptr<SharedStore> store_;
  ExtensionRegistry extensions_;
  std::unique_ptr<TcpListener> listener_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::size_t> active_{0};
  std::atomic<std::size_t> accepted_{0};
  std::list<Worker> workers_;
};

/// Reads a key file (64 hex digits and a newline). Warns when the file is
/// readable by group or others. Throws IoError or ConfigError.
KeyPair load_key_file(const std::filesystem::path& path);

struct GeneratedKey {
  KeyPair keys;
  std::string public_hex;
  std::string label;
};

/// Writes a fresh secret as 64 hex digits + newline with owner-only
/// permissions and returns the public key and its FQDN label. Refuses to
/// overwrite an existing file. Throws IoError.
GeneratedKey keygen_to_file(const std::filesystem::path& path, EntropySource& entropy);

/// Label and hex for an existing key pair.
GeneratedKey describe_key(const KeyPair& keys);

} // namespace scap
