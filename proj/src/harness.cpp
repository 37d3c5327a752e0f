#include "scap/harness.hpp"

#include "scap/error.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <fstream>

namespace scap::harness {

namespace {

std::string normalize(std::string_view name)
{
  if (!name.empty() && name.back() == '.') {
    name.remove_suffix(1);
  }
  std::string out(name);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](char c) { return c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c; });
  return out;
}

std::string direction_name(LinkDirection d)
{
  return d == LinkDirection::ClientToServer ? "client_to_server" : "server_to_client";
}

std::string kind_name(FrameKind k)
{
  switch (k) {
    case FrameKind::FirstClient: return "first_client";
    case FrameKind::FollowupClient: return "followup_client";
    case FrameKind::Server: return "server";
  }
  return "unknown";
}

std::size_t netstring_header_length(ByteView framed)
{
  auto colon = std::find(framed.begin(), framed.end(), std::uint8_t{':'});
  return static_cast<std::size_t>(colon - framed.begin()) + 1;
}

} // namespace

MappingStore sample_store()
{
  MappingStore store;
  store.insert({std::string(kJohnDoe), builtin_service_id("bitcoin"), to_bytes(kJohnDoeBitcoin)});
  return store;
}

// ---------------------------------------------------------------------------

void MockZone::add_srv(std::string_view name, SrvRecord record) { srv_[normalize(name)].push_back(std::move(record)); }

void MockZone::add_cname(std::string_view name, std::string_view target)
{
  cname_[normalize(name)] = std::string(target);
}

void MockZone::add_address(std::string_view name, std::string address)
{
  addresses_[normalize(name)].push_back(std::move(address));
}

void MockZone::set_validated(std::string_view name, bool validated) { validated_[normalize(name)] = validated; }

bool MockZone::validated(std::string_view name) const
{
  auto it = validated_.find(normalize(name));
  return it == validated_.end() ? default_validated_ : it->second;
}

DnsAnswer<std::vector<SrvRecord>> MockZone::query_srv(std::string_view name)
{
  DnsAnswer<std::vector<SrvRecord>> answer;
  answer.authenticated = validated(name);
  answer.ttl = 86400;
  if (auto it = srv_.find(normalize(name)); it != srv_.end()) {
    answer.records = it->second;
    for (auto& r : answer.records) {
      r.dnssec_validated = answer.authenticated;
      r.ttl = answer.ttl;
    }
  }
  return answer;
}

DnsAnswer<std::optional<std::string>> MockZone::query_cname(std::string_view name)
{
  DnsAnswer<std::optional<std::string>> answer;
  answer.authenticated = validated(name);
  answer.ttl = 86400;
  if (auto it = cname_.find(normalize(name)); it != cname_.end()) {
    answer.records = it->second;
  }
  return answer;
}

DnsAnswer<std::vector<std::string>> MockZone::query_addresses(std::string_view name)
{
  DnsAnswer<std::vector<std::string>> answer;
  answer.authenticated = validated(name);
  answer.ttl = 86400;
  if (auto it = addresses_.find(normalize(name)); it != addresses_.end()) {
    answer.records = it->second;
  }
  return answer;
}

MockZone sample_zone()
{
  static constexpr struct {
    std::uint16_t priority;
    std::uint16_t weight;
    const char* label;
    const char* address;
  } rows[] = {
    {10, 65, "1000vs2nh9b3gz04db4rgpjmzv2cwlnpvh3qzn6xljwyxmnp57j8h0d", "192.0.2.1"},
    {10, 35, "100027q245f6cglhdjyy91vk5btyszk6g5fnhz7mvsc6mtfjh2q0c14", "192.0.2.2"},
    {30, 0, "10009ydzvtccqmbzw6q0zlgumtr227g0kwb2zk8h5rv7yruj7gg6zh3", "192.0.2.3"},
  };
  MockZone zone;
  for (const auto& row : rows) {
    auto target = std::string(row.label) + ".example.org.";
    zone.add_srv("_scap._tcp.example.org.", {row.priority, row.weight, kDefaultPort, target, 86400, true});
    zone.add_address(target, row.address);
  }
  return zone;
}

void add_servers(MockZone& zone, std::string_view domain, const std::vector<ZoneServer>& servers)
{
  auto srv_name = srv_name_for(domain);
  for (const auto& s : servers) {
    auto target = fqdn_label_for_key(s.public_key) + "." + normalize(domain) + ".";
    zone.add_srv(srv_name, {s.priority, s.weight, s.port, target, 300, true});
    zone.add_address(target, s.address);
  }
}

// ---------------------------------------------------------------------------
// DNS over UDP

namespace {

void put16(Bytes& out, std::uint16_t v)
{
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

void put32(Bytes& out, std::uint32_t v)
{
  put16(out, static_cast<std::uint16_t>(v >> 16));
  put16(out, static_cast<std::uint16_t>(v & 0xffff));
}

void put_name(Bytes& out, std::string_view name)
{
  auto n = normalize(name);
  std::size_t start = 0;
  while (start < n.size()) {
    auto dot = n.find('.', start);
    if (dot == std::string::npos) {
      dot = n.size();
    }
    out.push_back(static_cast<std::uint8_t>(dot - start));
    out.insert(out.end(), n.begin() + static_cast<std::ptrdiff_t>(start), n.begin() + static_cast<std::ptrdiff_t>(dot));
    start = dot + 1;
  }
  out.push_back(0);
}

constexpr std::uint16_t kTypeA = 1;
constexpr std::uint16_t kTypeCname = 5;
constexpr std::uint16_t kTypeAaaa = 28;
constexpr std::uint16_t kTypeSrv = 33;

} // namespace

Bytes answer_dns_query(MockZone& zone, ByteView query)
{
  if (query.size() < 12) {
    return {};
  }
  // Question name, uncompressed.
  std::size_t pos = 12;
  std::string name;
  while (pos < query.size() && query[pos] != 0) {
    std::size_t len = query[pos];
    if (len > 63 || pos + 1 + len > query.size()) {
      return {};
    }
    if (!name.empty()) {
      name += '.';
    }
    name.append(reinterpret_cast<const char*>(query.data() + pos + 1), len);
    pos += 1 + len;
  }
  if (pos + 5 > query.size()) {
    return {};
  }
  std::size_t question_end = pos + 5;
  std::uint16_t qtype = static_cast<std::uint16_t>(query[pos + 1] << 8 | query[pos + 2]);

  struct Rr {
    std::uint16_t type;
    Bytes rdata;
  };
  std::vector<Rr> answers;
  bool authenticated = false;
  std::uint32_t ttl = 0;
  if (qtype == kTypeSrv) {
    auto a = zone.query_srv(name);
    authenticated = a.authenticated;
    ttl = a.ttl;
    for (const auto& r : a.records) {
      Bytes rd;
      put16(rd, r.priority);
      put16(rd, r.weight);
      put16(rd, r.port);
      put_name(rd, r.target);
      answers.push_back({kTypeSrv, std::move(rd)});
    }
  } else if (qtype == kTypeCname) {
    auto a = zone.query_cname(name);
    authenticated = a.authenticated;
    ttl = a.ttl;
    if (a.records) {
      Bytes rd;
      put_name(rd, *a.records);
      answers.push_back({kTypeCname, std::move(rd)});
    }
  } else if (qtype == kTypeA || qtype == kTypeAaaa) {
    auto a = zone.query_addresses(name);
    authenticated = a.authenticated;
    ttl = a.ttl;
    for (const auto& text : a.records) {
      Bytes rd(qtype == kTypeA ? 4 : 16);
      if (inet_pton(qtype == kTypeA ? AF_INET : AF_INET6, text.c_str(), rd.data()) == 1) {
        answers.push_back({qtype, std::move(rd)});
      }
    }
  } else {
    authenticated = zone.validated(name);
  }

  Bytes out;
  out.push_back(query[0]);
  out.push_back(query[1]);
  out.push_back(static_cast<std::uint8_t>(0x80 | (query[2] & 0x01))); // QR, RD copied
  out.push_back(static_cast<std::uint8_t>(0x80 | (authenticated ? 0x20 : 0)));
  put16(out, 1);
  put16(out, static_cast<std::uint16_t>(answers.size()));
  put16(out, 0);
  put16(out, 0);
  out.insert(out.end(), query.begin() + 12, query.begin() + static_cast<std::ptrdiff_t>(question_end));
  for (const auto& rr : answers) {
    put16(out, 0xc00c);
    put16(out, rr.type);
    put16(out, 1);
    put32(out, ttl);
    put16(out, static_cast<std::uint16_t>(rr.rdata.size()));
    append(out, rr.rdata);
  }
  return out;
}

DnsTestServer::DnsTestServer(MockZone& zone) : zone_(zone)
{
  fd_ = ::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) {
    fail(Errc::BindError, "udp socket");
  }
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd_);
    fail(Errc::BindError, "udp bind");
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  thread_ = std::thread([this] { serve(); });
}

DnsTestServer::~DnsTestServer()
{
  stop_ = true;
  thread_.join();
  ::close(fd_);
}

std::string DnsTestServer::endpoint() const { return "127.0.0.1:" + std::to_string(port_); }

void DnsTestServer::serve()
{
  std::uint8_t buffer[4096];
  while (!stop_) {
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) {
      continue;
    }
    sockaddr_in peer{};
    socklen_t len = sizeof peer;
    auto n = ::recvfrom(fd_, buffer, sizeof buffer, 0, reinterpret_cast<sockaddr*>(&peer), &len);
    if (n <= 0) {
      continue;
    }
    auto reply = answer_dns_query(zone_, ByteView(buffer, static_cast<std::size_t>(n)));
    if (!reply.empty()) {
      ::sendto(fd_, reply.data(), reply.size(), 0, reinterpret_cast<sockaddr*>(&peer), len);
      ++answered_;
    }
  }
}

// ---------------------------------------------------------------------------
// MemoryLink

class MemoryLink::Endpoint final : public Connection {
public:
  Endpoint(MemoryLink& link, LinkDirection out) : link_(link), out_(out) {}

  void write_all(ByteView data) override
  {
    if (link_.closed_[static_cast<int>(out_)]) {
      fail(Errc::ConnectionClosed, "memory link closed");
    }
    link_.deliver(out_, Bytes(data.begin(), data.end()));
  }

  std::size_t read_some(std::span<std::uint8_t> out) override
  {
    int in = out_ == LinkDirection::ClientToServer ? 1 : 0;
    auto& queue = link_.queues_[in];
    if (queue.empty() && out_ == LinkDirection::ClientToServer && link_.client_starved_) {
      link_.client_starved_();
    }
    auto n = std::min(out.size(), queue.size());
    std::copy_n(queue.begin(), n, out.begin());
    queue.erase(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(n));
    return n;
  }

  void close() noexcept override { link_.closed_[static_cast<int>(out_)] = true; }

  std::string peer() const override
  {
    return out_ == LinkDirection::ClientToServer ? "memory-server" : "memory-client";
  }

private:
  MemoryLink& link_;
  LinkDirection out_;
};

MemoryLink::MemoryLink()
  : client_(std::make_unique<Endpoint>(*this, LinkDirection::ClientToServer)),
    server_(std::make_unique<Endpoint>(*this, LinkDirection::ServerToClient))
{}

Connection& MemoryLink::client() noexcept { return *client_; }
Connection& MemoryLink::server() noexcept { return *server_; }

void MemoryLink::deliver(LinkDirection d, Bytes frame)
{
  std::vector<Bytes> frames;
  if (interceptor_) {
    frames = interceptor_(d, std::move(frame));
  } else {
    frames.push_back(std::move(frame));
  }
  auto& queue = queues_[static_cast<int>(d)];
  for (const auto& f : frames) {
    queue.insert(queue.end(), f.begin(), f.end());
    ++delivered_[static_cast<int>(d)];
  }
}

// ---------------------------------------------------------------------------
// Transcripts and faults

namespace {

/// Shared driver for run_transcript and run_with_faults.
FaultOutcome drive(const FaultPlan* plan, const MappingStore& store, const std::vector<ProtocolMessage>& requests,
                   const SessionSetup& setup)
{
  FaultOutcome outcome;
  auto& transcript = outcome.transcript;

  auto server_keys = keypair_from_secret(clamp_scalar(setup.server_secret));
  auto client_keys = keypair_from_secret(clamp_scalar(setup.client_secret));
  SharedStore shared(store);
  ExtensionRegistry extensions;
  MemoryLink link;

  // Per direction: whether each delivered frame was altered, in order.
  std::deque<bool> altered[2];
  std::vector<Bytes> history[2];
  std::size_t frame_index = 0;

  link.set_interceptor([&](LinkDirection d, Bytes frame) {
    auto di = static_cast<int>(d);
    std::vector<std::pair<Bytes, bool>> out{{frame, false}};
    if (plan != nullptr) {
      for (const auto& fault : plan->faults) {
        if (fault.at_frame != frame_index) {
          continue;
        }
        std::visit(
          [&](const auto& action) {
            using T = std::decay_t<decltype(action)>;
            if constexpr (std::is_same_v<T, FlipByte>) {
              for (auto& [bytes, changed] : out) {
                auto at = netstring_header_length(bytes) + action.position;
                if (at < bytes.size()) {
                  bytes[at] ^= action.mask;
                  changed = changed || action.mask != 0;
                }
              }
            } else if constexpr (std::is_same_v<T, Truncate>) {
              for (auto& [bytes, changed] : out) {
                if (action.length < bytes.size()) {
                  bytes.resize(action.length);
                  changed = true;
                }
              }
            } else if constexpr (std::is_same_v<T, ReplayPrevious>) {
              if (!history[di].empty()) {
                out = {{history[di].back(), true}};
              }
            } else if constexpr (std::is_same_v<T, ReorderSwap>) {
              if (!history[di].empty()) {
                out.insert(out.begin(), {history[di].back(), true});
              }
            } else if constexpr (std::is_same_v<T, Drop>) {
              out.clear();
            }
          },
          fault.action);
      }
    }
    history[di].push_back(std::move(frame));
    ++frame_index;
    std::vector<Bytes> delivered;
    for (auto& [bytes, changed] : out) {
      altered[di].push_back(changed);
      if (changed) {
        ++outcome.tampered_frames;
      }
      transcript.frames.emplace_back(d, bytes);
      delivered.push_back(std::move(bytes));
    }
    return delivered;
  });

  auto take_altered = [&](LinkDirection d) {
    auto& q = altered[static_cast<int>(d)];
    if (q.empty()) {
      return false;
    }
    bool v = q.front();
    q.pop_front();
    return v;
  };

  ServerConnection server(link.server(), ServerSession(server_keys, setup.server_counter), shared, extensions);
  ClientConnection client(link.client(), ClientSession(client_keys, server_keys.public_key, setup.client_counter));
  client.session().set_seal_observer([&](const BoxNonce& n) { transcript.nonces.push_back(n); });
  server.session().set_seal_observer([&](const BoxNonce& n) { transcript.nonces.push_back(n); });
  server.set_exchange_observer([&](const ProtocolMessage& request, const ProtocolMessage&) {
    transcript.entries.push_back({Direction::ClientToServer, message_encode(request)});
    if (take_altered(LinkDirection::ClientToServer)) {
      outcome.tampered_plaintext = true;
    }
  });

  bool server_down = false;
  link.on_client_starved([&] {
    if (server_down) {
      return;
    }
    try {
      if (!server.step()) {
        server_down = true;
        link.server().close();
      }
    } catch (const Error& e) {
      transcript.server_error = e.code();
      server_down = true;
      link.server().close();
    }
  });

  for (const auto& request : requests) {
    try {
      auto reply = client.request(request);
      transcript.entries.push_back({Direction::ServerToClient, message_encode(reply)});
      if (take_altered(LinkDirection::ServerToClient)) {
        outcome.tampered_plaintext = true;
      }
    } catch (const Error& e) {
      transcript.client_error = e.code();
      link.client().close();
      break;
    }
  }
  outcome.torn_down = transcript.client_error.has_value() || transcript.server_error.has_value();
  return outcome;
}

} // namespace

Transcript run_transcript(const MappingStore& store, const std::vector<ProtocolMessage>& requests,
                          const SessionSetup& setup)
{
  return drive(nullptr, store, requests, setup).transcript;
}

FaultOutcome run_with_faults(const FaultPlan& plan, const MappingStore& store,
                             const std::vector<ProtocolMessage>& requests, const SessionSetup& setup)
{
  return drive(&plan, store, requests, setup);
}

ReplayReport replay_first_frame(const SessionSetup& setup)
{
  auto transcript =
    run_transcript(sample_store(), {ClientHello{}, Query{std::string(kJohnDoe), builtin_service_id("bitcoin").token()}},
                   setup);
  const auto& first = transcript.frames.at(0).second;
  auto server_keys = keypair_from_secret(clamp_scalar(setup.server_secret));

  ReplayReport report;
  ServerSession fresh(server_keys, setup.server_counter + 1000);
  try {
    fresh.open(first);
    report.fresh_session_accepted = true;
  } catch (const Error&) {
    report.fresh_session_accepted = false;
  }

  ServerSession same(server_keys, setup.server_counter);
  same.open(first);
  same.seal(Ok{});
  try {
    same.open(first);
  } catch (const Error& e) {
    report.same_session_error = e.code();
  }
  return report;
}

// ---------------------------------------------------------------------------
// Golden vectors

std::vector<GoldenFrame> golden_frames(const SessionSetup& setup)
{
  auto transcript =
    run_transcript(sample_store(), {ClientHello{}, Query{std::string(kJohnDoe), builtin_service_id("bitcoin").token()}},
                   setup);
  if (transcript.frames.size() != 4 || transcript.entries.size() != 4) {
    fail(Errc::ProtocolViolation, "golden session did not complete");
  }
  static constexpr const char* names[] = {"first_client", "server_hello_reply", "followup_query",
                                          "server_query_reply"};
  static constexpr FrameKind kinds[] = {FrameKind::FirstClient, FrameKind::Server, FrameKind::FollowupClient,
                                        FrameKind::Server};
  std::vector<GoldenFrame> out;
  for (std::size_t i = 0; i < 4; ++i) {
    out.push_back({names[i], transcript.frames[i].first, kinds[i], transcript.frames[i].second,
                   transcript.entries[i].plaintext});
  }
  return out;
}

std::vector<std::filesystem::path> export_golden_vectors(const std::filesystem::path& out_dir,
                                                         const SessionSetup& setup)
{
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    fail(Errc::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  }
  std::vector<std::filesystem::path> written;
  auto write = [&](const std::string& name, ByteView bytes) {
    auto path = out_dir / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    f.close();
    if (!f) {
      fail(Errc::IoError, "cannot write " + path.string());
    }
    written.push_back(path);
  };

  auto client = keypair_from_secret(clamp_scalar(setup.client_secret));
  auto server = keypair_from_secret(clamp_scalar(setup.server_secret));
  auto transcript =
    run_transcript(sample_store(), {ClientHello{}, Query{std::string(kJohnDoe), builtin_service_id("bitcoin").token()}},
                   setup);
  auto frames = golden_frames(setup);

  std::string index;
  index += "client.secret=" + hex_encode(client.secret) + "\n";
  index += "client.public=" + hex_encode(client.public_key) + "\n";
  index += "client.counter_start=" + std::to_string(setup.client_counter) + "\n";
  index += "server.secret=" + hex_encode(server.secret) + "\n";
  index += "server.public=" + hex_encode(server.public_key) + "\n";
  index += "server.counter_start=" + std::to_string(setup.server_counter) + "\n";
  index += "shared_key=" + hex_encode(derive_shared(client.secret, server.public_key).bytes) + "\n";
  index += "kdf=hchacha20(x25519_shared, zero16)\n";
  index += "aead=chacha20poly1305-ietf, empty associated data\n";
  index += "nonce=client_half(6, little-endian) || server_half(6, little-endian)\n";
  index += "frame.count=" + std::to_string(frames.size()) + "\n";
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    char prefix[4];
    std::snprintf(prefix, sizeof prefix, "%02zu", i);
    auto bin = std::string(prefix) + "-" + f.name + ".bin";
    auto txt = std::string(prefix) + "-" + f.name + ".plaintext";
    write(bin, f.framed);
    write(txt, f.plaintext);
    auto key = "frame." + std::to_string(i) + ".";
    index += key + "name=" + f.name + "\n";
    index += key + "direction=" + direction_name(f.direction) + "\n";
    index += key + "kind=" + kind_name(f.kind) + "\n";
    index += key + "file=" + bin + "\n";
    index += key + "plaintext_file=" + txt + "\n";
    index += key + "nonce=" + hex_encode(transcript.nonces.at(i)) + "\n";
  }
  write("index.txt", as_bytes(index));
  return written;
}

// ---------------------------------------------------------------------------
// Dialers and servers

std::unique_ptr<Connection> RecordingDialer::connect(const std::string& host, std::uint16_t port, Millis timeout)
{
  auto name = host + ":" + std::to_string(port);
  {
    std::lock_guard lock(mutex_);
    attempts_.push_back(name);
  }
  auto conn = inner_.connect(host, port, timeout);
  std::lock_guard lock(mutex_);
  connected_.push_back(name);
  return conn;
}

std::vector<std::string> RecordingDialer::attempts() const
{
  std::lock_guard lock(mutex_);
  return attempts_;
}

std::vector<std::string> RecordingDialer::connected() const
{
  std::lock_guard lock(mutex_);
  return connected_;
}

void LoopbackDialer::route(std::string host, std::uint16_t port, std::uint16_t loopback_port)
{
  routes_[{std::move(host), port}] = loopback_port;
}

std::unique_ptr<Connection> LoopbackDialer::connect(const std::string& host, std::uint16_t port, Millis timeout)
{
  auto it = routes_.find({host, port});
  if (it == routes_.end()) {
    fail(Errc::ConnectFailed, host + ":" + std::to_string(port) + ": no route");
  }
  return tcp_connect("127.0.0.1", it->second, timeout);
}

ServerThread::ServerThread(KeyPair keys, MappingStore store, ServerConfig config) : keys_(keys)
{
  config.listen_address = "127.0.0.1";
  config.port = 0;
  store_ = std::make_shared<SharedStore>(std::move(store));
  server_ = std::make_unique<Server>(config, keys, store_);
  server_->bind();
  thread_ = std::thread([this] { server_->run(); });
}

ServerThread::~ServerThread()
{
  server_->stop();
  thread_.join();
}

} // namespace scap::harness
