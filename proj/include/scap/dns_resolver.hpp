#pragma once

#include "scap/discovery.hpp"

#include <chrono>
#include <optional>
#include <string>

namespace scap {

/// DnsClient over the system stub resolver (libresolv). Queries carry the
/// EDNS0 DO bit and the AD bit, and the AD bit of each response is reported
/// as `authenticated`. Validation itself is left to the recursive resolver,
/// which must therefore be trusted and reached over a trusted path.
class ResolvDnsClient final : public DnsClient {
public:
  struct Options {
    /// IPv4 `address[:port]`; the system configuration is used when unset.
    std::optional<std::string> nameserver;
    std::chrono::seconds timeout{3};
    int attempts = 2;
  };

  /// Reads SCAP_RESOLVER for the nameserver.
  static Options options_from_env();

  explicit ResolvDnsClient(Options options = options_from_env());

  DnsAnswer<std::vector<SrvRecord>> query_srv(std::string_view name) override;
  DnsAnswer<std::optional<std::string>> query_cname(std::string_view name) override;
  DnsAnswer<std::vector<std::string>> query_addresses(std::string_view name) override;

private:
  Options options_;
};

} // namespace scap
