#include "scap/client.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <random>

namespace scap {

ClientConnection::ClientConnection(Connection& conn, ClientSession session)
  : conn_(conn), reader_(conn, kMaxFrameSize), session_(std::move(session))
{}

ProtocolMessage ClientConnection::request(const ProtocolMessage& msg)
{
  conn_.write_all(frame_encode(session_.seal(msg)));
  auto frame = reader_.read_frame();
  if (!frame) {
    fail(Errc::ConnectionClosed, "server closed the connection without replying");
  }
  return session_.open(*frame);
}

ProtocolMessage ClientConnection::hello()
{
  auto reply = request(ClientHello{});
  if (const auto* ok = std::get_if<Ok>(&reply)) {
    try {
      extensions_ = parse_extension_list(ok->payload);
    } catch (const Error& e) {
      spdlog::warn("ignoring malformed extension list from {}: {}", conn_.peer(), e.what());
      extensions_.clear();
    }
  }
  return reply;
}

ServerOverride parse_server_override(std::string_view text)
{
  auto bad = [&](const std::string& why) {
    fail(Errc::ConfigError, "server override '" + std::string(text) + "': " + why);
  };
  auto key_sep = text.rfind(':');
  if (key_sep == std::string_view::npos) {
    bad("expected host:port:pubkeyhex");
  }
  auto port_sep = text.rfind(':', key_sep == 0 ? 0 : key_sep - 1);
  if (port_sep == std::string_view::npos || key_sep == 0) {
    bad("expected host:port:pubkeyhex");
  }
  ServerOverride out;
  auto host = text.substr(0, port_sep);
  bool bracketed = host.size() >= 2 && host.front() == '[' && host.back() == ']';
  if (bracketed) {
    host = host.substr(1, host.size() - 2);
  }
  if (host.empty()) {
    bad("empty host");
  }
  if (host.find_first_of("[]") != std::string_view::npos || (!bracketed && host.find(':') != std::string_view::npos)) {
    bad("IPv6 hosts must be written in brackets");
  }
  out.host = std::string(host);
  auto port_text = text.substr(port_sep + 1, key_sep - port_sep - 1);
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port == 0 || port > 65535) {
    bad("port must be 1-65535");
  }
  out.port = static_cast<std::uint16_t>(port);
  auto key = hex_decode(text.substr(key_sep + 1));
  if (!key || key->size() != kKeySize) {
    bad("public key must be 64 hex digits");
  }
  std::copy(key->begin(), key->end(), out.public_key.begin());
  return out;
}

std::string_view stage_name(ResolveStage stage) noexcept
{
  switch (stage) {
    case ResolveStage::Address: return "address";
    case ResolveStage::Discovery: return "discovery";
    case ResolveStage::Connect: return "connect";
    case ResolveStage::Session: return "session";
    case ResolveStage::Query: return "query";
  }
  return "unknown";
}

namespace {

[[noreturn]] void rethrow_as(ResolveStage stage, const Error& e) { throw ResolveError(e.code(), stage, e.what()); }

std::unique_ptr<Connection> dial_any(Dialer& dialer, const std::vector<std::string>& hosts, std::uint16_t port,
                                     Millis timeout)
{
  std::optional<Error> last;
  for (const auto& host : hosts) {
    try {
      return dialer.connect(host, port, timeout);
    } catch (const Error& e) {
      last = e;
    }
  }
  throw *last;
}

} // namespace

ResolveResult resolve(const ResolveRequest& request, DnsClient& dns, Dialer& dialer, EntropySource& entropy)
{
  ResolveResult result;
  try {
    result.spoof_report = inspect_spoofing(format_address(request.address, DomainForm::Unicode));
  } catch (const Error& e) {
    rethrow_as(ResolveStage::Address, e);
  }

  std::vector<ServerLocator> candidates;
  if (request.server_override) {
    ServerLocator locator;
    locator.fqdn = request.server_override->host;
    locator.srv_target = locator.fqdn;
    locator.port = request.server_override->port;
    locator.public_key = request.server_override->public_key;
    candidates.push_back(locator);
  } else {
    try {
      candidates = resolve_servers(request.address.domain_ascii, dns, request.policy);
    } catch (const Error& e) {
      rethrow_as(ResolveStage::Discovery, e);
    }
  }

  std::mt19937_64 rng(entropy.next_u64());
  ExcludedTargets excluded;
  std::optional<std::string> temp_failure;
  std::optional<ResolveError> last_error;
  const auto address_text = format_address(request.address, DomainForm::Ascii);

  while (auto index = select_index(std::span<const ServerLocator>(candidates), rng, excluded)) {
    const auto& server = candidates[*index];
    excluded.insert(server.fqdn);
    auto stage = ResolveStage::Connect;
    try {
      std::vector<std::string> hosts{server.fqdn};
      if (!request.server_override) {
        stage = ResolveStage::Discovery;
        hosts = resolve_addresses(server.fqdn, dns, request.policy);
        stage = ResolveStage::Connect;
      }
      auto conn = dial_any(dialer, hosts, server.port, request.timeout);
      stage = ResolveStage::Session;
      ClientConnection client(*conn, ClientSession::create(server.public_key, entropy));
      auto greeting = client.hello();
      stage = ResolveStage::Query;
      auto reply = std::holds_alternative<Ok>(greeting)
                     ? client.request(Query{address_text, request.service.token()})
                     : greeting;
      conn->close();
      if (auto* ok = std::get_if<Ok>(&reply)) {
        result.target_data = std::move(ok->payload);
        result.server_used = server;
        result.dnssec_validated = !request.server_override && server.dnssec_validated;
        return result;
      }
      if (const auto* refused = std::get_if<PermFail>(&reply)) {
        // Authoritative: siblings hold the same data, so do not ask them.
        throw ResolveError(Errc::Refused, ResolveStage::Query, escape_for_display(refused->description));
      }
      const auto& busy = std::get<TempFail>(reply);
      spdlog::info("{} answered temporary failure: {}", server.fqdn, escape_for_display(busy.description));
      temp_failure = busy.description;
    } catch (const ResolveError&) {
      throw;
    } catch (const Error& e) {
      if (e.code() == Errc::SecurityPolicyViolation) {
        rethrow_as(stage, e);
      }
      spdlog::info("server {}:{} failed at {}: {}", server.fqdn, server.port, stage_name(stage), e.what());
      last_error = ResolveError(e.code(), stage, server.fqdn + ": " + e.what());
    }
  }

  if (temp_failure) {
    throw ResolveError(Errc::RetryLater, ResolveStage::Query, escape_for_display(*temp_failure));
  }
  throw ResolveError(Errc::AllServersUnreachable, last_error ? last_error->stage() : ResolveStage::Connect,
                     last_error ? last_error->what() : "no candidate servers");
}

} // namespace scap
