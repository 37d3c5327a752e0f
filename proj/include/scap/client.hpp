#pragma once

#include "scap/codec.hpp"
#include "scap/discovery.hpp"
#include "scap/error.hpp"
#include "scap/identity.hpp"
#include "scap/net.hpp"
#include "scap/session.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace scap {

/// Talks SCAP over an established connection.
class ClientConnection {
public:
  ClientConnection(Connection& conn, ClientSession session);

  /// Sends one message and returns the reply. Session and transport errors
  /// propagate; the caller should drop the connection.
  ProtocolMessage request(const ProtocolMessage& msg);

  /// Sends H. Returns the server's reply, which is O for a usable server.
  ProtocolMessage hello();

  /// Extensions from the last O reply to H (empty if unparseable).
  const std::vector<ExtensionName>& extensions() const noexcept { return extensions_; }

  ClientSession& session() noexcept { return session_; }

private:
  Connection& conn_;
  FrameReader reader_;
  ClientSession session_;
  std::vector<ExtensionName> extensions_;
};

/// Fixed server used instead of DNS discovery.
struct ServerOverride {
  std::string host;
  std::uint16_t port = kDefaultPort;
  PublicKey public_key{};
};

/// `host:port:pubkeyhex`; IPv6 hosts go in brackets. Throws ConfigError.
ServerOverride parse_server_override(std::string_view text);

struct ResolveRequest {
  CryptoAddress address;
  ServiceId service;
  SecurityPolicy policy = SecurityPolicy::RequireDnssec;
  std::optional<ServerOverride> server_override;
  Millis timeout{10'000};
};

struct ResolveResult {
  Bytes target_data;
  ServerLocator server_used;
  SpoofReport spoof_report;
  bool dnssec_validated = false;
};

enum class ResolveStage { Address, Discovery, Connect, Session, Query };

std::string_view stage_name(ResolveStage stage) noexcept;

/// A failed resolution: the error code plus the stage it came from.
class ResolveError : public Error {
public:
  ResolveError(Errc code, ResolveStage stage, const std::string& detail)
    : Error(code, std::string(stage_name(stage)) + ": " + detail), stage_(stage)
  {}
  ResolveStage stage() const noexcept { return stage_; }

private:
  ResolveStage stage_;
};

/// Discovers servers, then tries them in priority/weight order. A server
/// that cannot be reached, fails the session or answers Z is excluded and the
/// next one is tried. A D answer ends the resolution at once (Refused) with
/// no further servers contacted. Throws ResolveError.
ResolveResult resolve(const ResolveRequest& request, DnsClient& dns, Dialer& dialer, EntropySource& entropy);

} // namespace scap
