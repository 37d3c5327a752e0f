#pragma once

// Deterministic test fabric: mock DNS, in-memory connections with fault
// injection, transcripts and golden vectors.

#include "scap/client.hpp"
#include "scap/codec.hpp"
#include "scap/discovery.hpp"
#include "scap/net.hpp"
#include "scap/server.hpp"
#include "scap/session.hpp"
#include "scap/store.hpp"

#include <atomic>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace scap::harness {

inline constexpr std::string_view kJohnDoe = "johndoe@example.com";
inline constexpr std::string_view kJohnDoeBitcoin = "1NS17iag9jJgTHD1VXjvLCEnZuQ3rJDE9L";

/// One record: johndoe@example.com on bitcoin.
MappingStore sample_store();

// ---------------------------------------------------------------------------
// DNS
// ---------------------------------------------------------------------------

/// An in-memory zone. Names are matched case-insensitively, with or without
/// the trailing dot. Every answer is DNSSEC-validated unless marked
/// otherwise.
class MockZone final : public DnsClient {
public:
  void add_srv(std::string_view name, SrvRecord record);
  void add_cname(std::string_view name, std::string_view target);
  void add_address(std::string_view name, std::string address);
  void set_validated(std::string_view name, bool validated);
  void set_default_validated(bool validated) { default_validated_ = validated; }

  DnsAnswer<std::vector<SrvRecord>> query_srv(std::string_view name) override;
  DnsAnswer<std::optional<std::string>> query_cname(std::string_view name) override;
  DnsAnswer<std::vector<std::string>> query_addresses(std::string_view name) override;

  bool validated(std::string_view name) const;

private:
  std::map<std::string, std::vector<SrvRecord>, std::less<>> srv_;
  std::map<std::string, std::string, std::less<>> cname_;
  std::map<std::string, std::vector<std::string>, std::less<>> addresses_;
  std::map<std::string, bool, std::less<>> validated_;
  bool default_validated_ = true;
};

/// The example.org zone with three SRV records (10/65, 10/35, 30/0). The
/// servers resolve to 192.0.2.1, .2 and .3.
MockZone sample_zone();

/// SRV and A records for `domain` pointing at loopback servers.
struct ZoneServer {
  PublicKey public_key{};
  std::uint16_t port = kDefaultPort;
  std::uint16_t priority = 10;
  std::uint16_t weight = 0;
  std::string address = "127.0.0.1";
};
void add_servers(MockZone& zone, std::string_view domain, const std::vector<ZoneServer>& servers);

/// Serves a MockZone over UDP on 127.0.0.1 so the libresolv client can be
/// exercised end to end.
class DnsTestServer {
public:
  explicit DnsTestServer(MockZone& zone);
  ~DnsTestServer();
  DnsTestServer(const DnsTestServer&) = delete;
  DnsTestServer& operator=(const DnsTestServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  /// `127.0.0.1:<port>`, the form SCAP_RESOLVER and --resolver take.
  std::string endpoint() const;
  std::size_t answered() const noexcept { return answered_; }

private:
  void serve();

  MockZone& zone_;
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stop_ = false;
  std::atomic<std::size_t> answered_ = 0;
  std::thread thread_;
};

/// Builds the DNS answer for a query datagram; exposed for tests.
Bytes answer_dns_query(MockZone& zone, ByteView query);

// ---------------------------------------------------------------------------
// In-memory connections
// ---------------------------------------------------------------------------

/// Bytes travelling through a MemoryLink, one frame per write.
enum class LinkDirection { ClientToServer, ServerToClient };

/// Replaces the bytes of one frame on the wire; returns the frames actually
/// delivered (possibly none or several).
using WireInterceptor = std::function<std::vector<Bytes>(LinkDirection, Bytes frame)>;

/// A pair of connected endpoints sharing two byte queues. Single-threaded:
/// when a reader finds its queue empty, the starve hook runs (typically one
/// step of the peer); if that produced nothing, the reader sees end of
/// stream.
class MemoryLink {
public:
  MemoryLink();

  Connection& client() noexcept;
  Connection& server() noexcept;

  void set_interceptor(WireInterceptor interceptor) { interceptor_ = std::move(interceptor); }
  void on_client_starved(std::function<void()> hook) { client_starved_ = std::move(hook); }

  /// Frames accepted for delivery, per direction, after interception.
  std::size_t delivered(LinkDirection d) const noexcept { return delivered_[static_cast<int>(d)]; }

private:
  class Endpoint;
  friend class Endpoint;

  void deliver(LinkDirection d, Bytes frame);

  std::deque<std::uint8_t> queues_[2];
  bool closed_[2] = {false, false};
  std::size_t delivered_[2] = {0, 0};
  WireInterceptor interceptor_;
  std::function<void()> client_starved_;
  std::unique_ptr<Endpoint> client_;
  std::unique_ptr<Endpoint> server_;
};

// ---------------------------------------------------------------------------
// Transcripts
// ---------------------------------------------------------------------------

/// Keys and counters for a deterministic session. Secrets are clamped before
/// use.
struct SessionSetup {
  SecretKey client_secret = filled(0x11);
  SecretKey server_secret = filled(0x22);
  std::uint64_t client_counter = 1;
  std::uint64_t server_counter = 1;

  static SecretKey filled(std::uint8_t b)
  {
    SecretKey k{};
    k.fill(b);
    return k;
  }
};

struct TranscriptEntry {
  Direction direction;
  Bytes plaintext;
  friend bool operator==(const TranscriptEntry&, const TranscriptEntry&) = default;
};

struct Transcript {
  /// Box contents in the order they were opened by the receiving side.
  std::vector<TranscriptEntry> entries;
  /// Every nonce sealed under, both directions, in order.
  std::vector<BoxNonce> nonces;
  /// Framed wire bytes as delivered, in order.
  std::vector<std::pair<LinkDirection, Bytes>> frames;
  std::optional<Errc> client_error;
  std::optional<Errc> server_error;
};

/// Runs the real client and server connection code over a MemoryLink. Stops
/// at the first error, which is recorded rather than thrown.
Transcript run_transcript(const MappingStore& store, const std::vector<ProtocolMessage>& requests,
                          const SessionSetup& setup = {});

// ---------------------------------------------------------------------------
// Fault injection
// ---------------------------------------------------------------------------

struct FlipByte {
  /// Offset into the frame's unframed wire bytes (after the netstring
  /// header).
  std::size_t position = 0;
  std::uint8_t mask = 0x01;
};
struct Truncate {
  /// Framed bytes kept; the sender's stream then ends.
  std::size_t length = 0;
};
struct ReplayPrevious {};
struct ReorderSwap {};
struct Drop {};

using FaultAction = std::variant<FlipByte, Truncate, ReplayPrevious, ReorderSwap, Drop>;

struct Fault {
  /// Index over all frames of the session, both directions: 0 is the
  /// client's first frame, 1 the reply, and so on.
  std::size_t at_frame = 0;
  FaultAction action;
};

struct FaultPlan {
  std::vector<Fault> faults;
};

struct FaultOutcome {
  Transcript transcript;
  std::size_t tampered_frames = 0;
  /// Plaintext was produced from a frame that a fault had altered. Must
  /// never happen.
  bool tampered_plaintext = false;
  /// Some side closed the session because of an error.
  bool torn_down = false;
};

FaultOutcome run_with_faults(const FaultPlan& plan, const MappingStore& store,
                             const std::vector<ProtocolMessage>& requests, const SessionSetup& setup = {});

/// Result of replaying a recorded first client frame to a brand new server
/// session and, separately, within the original session.
struct ReplayReport {
  bool fresh_session_accepted = false;
  std::optional<Errc> same_session_error;
};
ReplayReport replay_first_frame(const SessionSetup& setup = {});

// ---------------------------------------------------------------------------
// Golden vectors
// ---------------------------------------------------------------------------

struct GoldenFrame {
  std::string name;
  LinkDirection direction;
  FrameKind kind;
  Bytes framed;
  Bytes plaintext;
};

/// Hello then the johndoe bitcoin query under the fixed SessionSetup.
std::vector<GoldenFrame> golden_frames(const SessionSetup& setup = {});

/// Writes one .bin file per frame, one .txt file per plaintext and
/// index.txt. Throws IoError.
std::vector<std::filesystem::path> export_golden_vectors(const std::filesystem::path& out_dir,
                                                         const SessionSetup& setup = {});

// ---------------------------------------------------------------------------
// Connection logging
// ---------------------------------------------------------------------------

/// Wraps a dialer and remembers every attempted host:port.
class RecordingDialer final : public Dialer {
public:
  explicit RecordingDialer(Dialer& inner) : inner_(inner) {}
  std::unique_ptr<Connection> connect(const std::string& host, std::uint16_t port, Millis timeout) override;

  std::vector<std::string> attempts() const;
  /// Attempts that produced a connection.
  std::vector<std::string> connected() const;

private:
  Dialer& inner_;
  mutable std::mutex mutex_;
  std::vector<std::string> attempts_;
  std::vector<std::string> connected_;
};

/// Maps host names to loopback ports, for in-process servers.
class LoopbackDialer final : public Dialer {
public:
  void route(std::string host, std::uint16_t port, std::uint16_t loopback_port);
  /// Hosts without a route fail with ConnectFailed.
  std::unique_ptr<Connection> connect(const std::string& host, std::uint16_t port, Millis timeout) override;

private:
  std::map<std::pair<std::string, std::uint16_t>, std::uint16_t> routes_;
};

/// A Server running on its own thread on 127.0.0.1 with an ephemeral port.
class ServerThread {
public:
  ServerThread(KeyPair keys, MappingStore store, ServerConfig config = {});
  ~ServerThread();
  ServerThread(const ServerThread&) = delete;
  ServerThread& operator=(const ServerThread&) = delete;

  std::uint16_t port() const noexcept { return server_->port(); }
  Server& server() noexcept { return *server_; }
  const KeyPair& keys() const noexcept { return keys_; }
  /// The live store; clearing it makes every query a temporary failure.
  SharedStore& store() noexcept { return *store_; }

private:
  KeyPair keys_;
  std::shared_ptr<SharedStore> store_;
  std::unique_ptr<Server> server_;
  std::thread thread_;
};

} // namespace scap::harness
