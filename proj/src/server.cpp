#include "scap/server.hpp"

#include "scap/discovery.hpp"
#include "scap/error.hpp"

#include <spdlog/spdlog.h>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace scap {

namespace {

std::string_view trim(std::string_view s)
{
  auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class Int>
Int parse_number(std::string_view key, std::string_view value, Int min, Int max)
{
  Int out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || out < min || out > max) {
    fail(Errc::ConfigError, std::string(key) + " = '" + std::string(value) + "' is not a number in [" +
                              std::to_string(min) + ", " + std::to_string(max) + "]");
  }
  return out;
}

std::vector<std::string> split_names(std::string_view value)
{
  std::vector<std::string> names;
  std::size_t start = 0;
  while (start < value.size()) {
    auto end = value.find_first_of(" ,\t", start);
    if (end == std::string_view::npos) {
      end = value.size();
    }
    if (end > start) {
      names.emplace_back(value.substr(start, end - start));
    }
    start = end + 1;
  }
  return names;
}

} // namespace

// ---------------------------------------------------------------------------

ServerConfig parse_config(std::string_view text, const std::filesystem::path& base_dir)
{
  ServerConfig config;
  auto resolve = [&](std::string_view value) {
    std::filesystem::path p{std::string(value)};
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    auto line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(Errc::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key == "listen_address" || key == "listen") {
      config.listen_address = std::string(value);
    } else if (key == "port") {
      config.port = parse_number<std::uint16_t>(key, value, 1, 65535);
    } else if (key == "key_file") {
      config.key_file = resolve(value);
    } else if (key == "store_file") {
      config.store_file = resolve(value);
    } else if (key == "extensions") {
      config.extensions = split_names(value);
    } else if (key == "max_sessions") {
      config.max_sessions = parse_number<std::size_t>(key, value, 1, 1'000'000);
    } else if (key == "io_timeout") {
      config.io_timeout = std::chrono::seconds(parse_number<unsigned>(key, value, 1, 86'400));
    } else {
      fail(Errc::ConfigError, "line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    }
  }
  try {
    format_extension_list(config.extensions);
  } catch (const Error& e) {
    fail(Errc::ConfigError, std::string("extensions: ") + e.what());
  }
  return config;
}

ServerConfig load_config(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) {
    fail(Errc::ConfigError, "cannot read config file " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.parent_path());
}

// ---------------------------------------------------------------------------

void ExtensionRegistry::advertise(std::string name)
{
  auto names = advertised_;
  names.push_back(name);
  format_extension_list(names);
  advertised_ = std::move(names);
}

void ExtensionRegistry::add_handler(std::string name, Handler handler)
{
  handlers_.insert_or_assign(std::move(name), std::move(handler));
}

const ExtensionRegistry::Handler* ExtensionRegistry::find(std::string_view name) const
{
  auto it = handlers_.find(name);
  return it == handlers_.end() ? nullptr : &it->second;
}

ProtocolMessage handle_message(const MappingStore* store, const ExtensionRegistry& extensions,
                               const ProtocolMessage& msg)
{
  return std::visit(
    [&](const auto& m) -> ProtocolMessage {
      using T = std::decay_t<decltype(m)>;
      if constexpr (std::is_same_v<T, ClientHello>) {
        return Ok{format_extension_list(extensions.advertised())};
      } else if constexpr (std::is_same_v<T, Query>) {
        if (store == nullptr) {
          return TempFail{"mapping store temporarily unavailable"};
        }
        std::optional<ServiceId> service;
        try {
          service = ServiceId::from_token(m.service_id);
        } catch (const Error&) {
          return PermFail{"invalid service identifier"};
        }
        const MappingRecord* record = nullptr;
        try {
          record = store->find(m.address, *service);
        } catch (const Error&) {
          return PermFail{"invalid cryptoaddress"};
        }
        if (record == nullptr) {
          return PermFail{std::string(kMissDescription)};
        }
        return Ok{record->target_data};
      } else if constexpr (std::is_same_v<T, Reserved>) {
        return PermFail{"extension message not supported"};
      } else if constexpr (std::is_same_v<T, NonStandard>) {
        const auto* handler = extensions.find("X" + m.name);
        if (handler == nullptr) {
          return PermFail{"unknown extension"};
        }
        try {
          auto reply = (*handler)(m.data);
          if (direction_of(reply) != Direction::ServerToClient) {
            return TempFail{"extension produced an invalid reply"};
          }
          return reply;
        } catch (const std::exception&) {
          return TempFail{"extension failed"};
        }
      } else {
        return PermFail{"unexpected server-direction message"};
      }
    },
    msg);
}

// ---------------------------------------------------------------------------

ServerConnection::ServerConnection(Connection& conn, const KeyPair& keys, const SharedStore& store,
                                   const ExtensionRegistry& extensions, EntropySource& entropy)
  : conn_(conn), reader_(conn, kMaxFrameSize), store_(store), extensions_(extensions),
    session_(ServerSession::create(keys, entropy))
{}

ServerConnection::ServerConnection(Connection& conn, ServerSession session, const SharedStore& store,
                                   const ExtensionRegistry& extensions)
  : conn_(conn), reader_(conn, kMaxFrameSize), store_(store), extensions_(extensions), session_(std::move(session))
{}

bool ServerConnection::step()
{
  auto frame = reader_.read_frame();
  if (!frame) {
    return false;
  }
  auto request = session_.open(*frame);
  auto store = store_.snapshot();
  auto reply = handle_message(store.get(), extensions_, request);
  spdlog::debug("{}: {} -> {}", conn_.peer(), describe(request), describe(reply));
  if (observer_) {
    observer_(request, reply);
  }
  conn_.write_all(frame_encode(session_.seal(reply)));
  return true;
}

void ServerConnection::run() noexcept
{
  try {
    while (step()) {
    }
  } catch (const Error& e) {
    spdlog::info("closing connection from {}: {}", conn_.peer(), e.what());
  } catch (const std::exception& e) {
    spdlog::error("connection from {} failed: {}", conn_.peer(), e.what());
  }
  conn_.close();
}

// ---------------------------------------------------------------------------

Server::Server(ServerConfig config, KeyPair keys, std::shared_ptr<SharedStore> store, ExtensionRegistry extensions)
  : config_(std::move(config)), keys_(keys), store_(std::move(store)), extensions_(std::move(extensions))
{
  for (const auto& name : config_.extensions) {
    extensions_.advertise(name);
  }
}

Server::~Server()
{
  stop();
  prune(true);
}

void Server::bind() { listener_ = std::make_unique<TcpListener>(config_.listen_address, config_.port); }

std::uint16_t Server::port() const noexcept { return listener_ ? listener_->port() : 0; }

void Server::prune(bool all)
{
  if (all) {
    for (auto& worker : workers_) {
      worker.conn->interrupt();
    }
  }
  for (auto it = workers_.begin(); it != workers_.end();) {
    if (all || *it->done) {
      if (it->thread.joinable()) {
        it->thread.join();
      }
      it = workers_.erase(it);
    } else {
      ++it;
    }
  }
}

void Server::run()
{
  if (!listener_) {
    bind();
  }
  spdlog::info("serving on {}:{} (public label {})", config_.listen_address, port(),
               fqdn_label_for_key(keys_.public_key));
  auto io_timeout = std::chrono::duration_cast<Millis>(config_.io_timeout);
  while (!stopping_) {
    auto conn = listener_->accept(Millis(100), io_timeout);
    prune(false);
    if (!conn) {
      continue;
    }
    ++accepted_;
    if (active_ >= config_.max_sessions) {
      spdlog::warn("session limit {} reached, dropping {}", config_.max_sessions, conn->peer());
      continue;
    }
    ++active_;
    auto done = std::make_shared<std::atomic<bool>>(false);
    std::shared_ptr<Connection> shared_conn(std::move(conn));
    workers_.push_back({std::thread([this, shared_conn, done] {
                          try {
                            SystemEntropy entropy;
                            ServerConnection handler(*shared_conn, keys_, *store_, extensions_, entropy);
                            handler.run();
                          } catch (const std::exception& e) {
                            spdlog::error("session setup failed: {}", e.what());
                          }
                          --active_;
                          *done = true;
                        }),
                        done, shared_conn});
  }
  prune(true);
}

bool Server::reload_store() noexcept
{
  try {
    store_->replace(store_load(config_.store_file));
    spdlog::info("reloaded store {}", config_.store_file.string());
    return true;
  } catch (const std::exception& e) {
    spdlog::error("store reload failed, keeping the previous store: {}", e.what());
    return false;
  }
}

// ---------------------------------------------------------------------------

KeyPair load_key_file(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) {
    fail(Errc::IoError, "cannot open key file " + path.string());
  }
  std::string line;
  std::getline(in, line);
  auto secret = hex_decode(trim(line));
  if (!secret || secret->size() != kKeySize) {
    fail(Errc::ConfigError, "key file " + path.string() + " does not hold 64 hex digits");
  }
  struct stat st{};
  if (::stat(path.c_str(), &st) == 0 && (st.st_mode & (S_IRWXG | S_IRWXO)) != 0) {
    spdlog::warn("key file {} is accessible by group or others", path.string());
  }
  SecretKey key{};
  std::copy(secret->begin(), secret->end(), key.begin());
  return keypair_from_secret(key);
}

GeneratedKey describe_key(const KeyPair& keys)
{
  return {keys, hex_encode(keys.public_key), fqdn_label_for_key(keys.public_key)};
}

GeneratedKey keygen_to_file(const std::filesystem::path& path, EntropySource& entropy)
{
  auto keys = generate_keypair(entropy);
  auto text = hex_encode(keys.secret) + "\n";
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0600);
  if (fd < 0) {
    fail(Errc::IoError, "cannot create key file " + path.string() + ": " + std::strerror(errno));
  }
  auto n = ::write(fd, text.data(), text.size());
  bool ok = n == static_cast<ssize_t>(text.size()) && ::fsync(fd) == 0;
  ::close(fd);
  if (!ok) {
    fail(Errc::IoError, "cannot write key file " + path.string());
  }
  struct stat st{};
  if (::stat(path.c_str(), &st) == 0 && (st.st_mode & (S_IRWXG | S_IRWXO)) != 0) {
    spdlog::warn("key file {} is accessible by group or others", path.string());
  }
  return describe_key(keys);
}

} // namespace scap
