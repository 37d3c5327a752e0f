#pragma once

#include "scap/error.hpp"
#include "scap/session.hpp"

#include <algorithm>
#include <chrono>
#include <concepts>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scap {

inline constexpr std::string_view kSrvPrefix = "_scap._tcp.";
inline constexpr std::uint16_t kDefaultPort = 4332;
inline constexpr std::uint16_t kLabelVersion = 1;
inline constexpr std::size_t kVersionPrefixLength = 4;
/// 51 characters carry the low 255 bits of a Curve25519 public key.
inline constexpr std::size_t kKeyLabelCharacters = 51;
inline constexpr std::size_t kServerLabelLength = kVersionPrefixLength + kKeyLabelCharacters;
inline constexpr int kMaxAliasChain = 8;

struct SrvRecord {
  std::uint16_t priority = 0;
  std::uint16_t weight = 0;
  std::uint16_t port = 0;
  std::string target;
  std::uint32_t ttl = 0;
  bool dnssec_validated = false;
};

struct ServerLocator {
  std::string fqdn; // canonical name the key came from, no trailing dot
  std::uint16_t port = kDefaultPort;
  std::uint16_t version = kLabelVersion;
  PublicKey public_key{};
  std::uint16_t priority = 0;
  std::uint16_t weight = 0;
  std::string srv_target; // name as listed in the SRV record
  bool dnssec_validated = false;
};

inline std::string_view selection_name(const SrvRecord& r) noexcept { return r.target; }
inline std::string_view selection_name(const ServerLocator& s) noexcept { return s.fqdn; }

/// `_scap._tcp.<domain>.`
std::string srv_name_for(std::string_view domain_ascii);

struct LabelKey {
  std::uint16_t version = 0;
  PublicKey public_key{};
};

/// Reads the version prefix and public key from the leftmost label. Throws
/// LabelTooShort, UnsupportedVersion, BadKeyLength or InvalidCharacter.
LabelKey extract_key_from_fqdn(std::string_view fqdn);

/// base32(version as 2-byte LE) + base32(low 255 key bits). Throws
/// KeyTopBitSet when bit 255 of the key is set.
std::string fqdn_label_for_key(const PublicKey& public_key, std::uint16_t version = kLabelVersion);

// ---------------------------------------------------------------------------
// Weighted selection
// ---------------------------------------------------------------------------

template <class T>
concept SrvCandidate = requires(const T& c) {
  { c.priority } -> std::convertible_to<std::uint16_t>;
  { c.weight } -> std::convertible_to<std::uint16_t>;
  { selection_name(c) } -> std::convertible_to<std::string_view>;
};

using ExcludedTargets = std::set<std::string, std::less<>>;

namespace detail {

/// Unbiased draw from [0, bound) using whole 64-bit outputs, so a seeded
/// engine gives the same sequence on every platform.
template <class Rng>
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound)
{
  static_assert(Rng::min() == 0 && Rng::max() == std::numeric_limits<std::uint64_t>::max(),
                "selection needs a full-range 64-bit engine");
  std::uint64_t threshold = (0 - bound) % bound;
  while (true) {
    std::uint64_t x = rng();
    if (x >= threshold) {
      return x % bound;
    }
  }
}

} // namespace detail

/// Picks among the non-excluded candidates of the lowest priority value.
/// Candidates are ordered by weight (descending) then name, a value r is
/// drawn uniformly from [1, total weight], and the first candidate whose
/// running weight reaches r wins. A tier whose weights are all zero is
/// sampled uniformly. Returns nullopt when every candidate is excluded.
template <SrvCandidate T, class Rng>
std::optional<std::size_t> select_index(std::span<const T> candidates, Rng& rng, const ExcludedTargets& excluded = {})
{
  std::optional<std::uint16_t> best;
  for (const auto& c : candidates) {
    if (!excluded.contains(selection_name(c)) && (!best || c.priority < *best)) {
      best = c.priority;
    }
  }
  if (!best) {
    return std::nullopt;
  }
  std::vector<std::size_t> tier;
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.priority == *best && !excluded.contains(selection_name(c))) {
      tier.push_back(i);
      total += c.weight;
    }
  }
  std::sort(tier.begin(), tier.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = candidates[a];
    const auto& y = candidates[b];
    if (x.weight != y.weight) {
      return x.weight > y.weight;
    }
    return selection_name(x) < selection_name(y);
  });
  if (total == 0) {
    return tier[detail::uniform_below(rng, tier.size())];
  }
  std::uint64_t r = 1 + detail::uniform_below(rng, total);
  std::uint64_t running = 0;
  for (auto i : tier) {
    running += candidates[i].weight;
    if (running >= r) {
      return i;
    }
  }
  return tier.back();
}

/// Throws NoServersAvailable when nothing is left after exclusion.
template <class Rng>
ServerLocator select_server(std::span<const ServerLocator> servers, Rng& rng, const ExcludedTargets& excluded = {})
{
  auto index = select_index(servers, rng, excluded);
  if (!index) {
    fail(Errc::NoServersAvailable, "all " + std::to_string(servers.size()) + " candidate servers excluded");
  }
  return servers[*index];
}

// ---------------------------------------------------------------------------
// DNS access
// ---------------------------------------------------------------------------

template <class T>
struct DnsAnswer {
  T records{};
  bool authenticated = false; // resolver's AD indication
  std::uint32_t ttl = 0;
};

/// Answers are empty (not an error) for NXDOMAIN and NODATA. Transport or
/// server failures throw DnsFailure. Implementations must tolerate
/// concurrent calls.
class DnsClient {
public:
  virtual ~DnsClient() = default;
  virtual DnsAnswer<std::vector<SrvRecord>> query_srv(std::string_view name) = 0;
  virtual DnsAnswer<std::optional<std::string>> query_cname(std::string_view name) = 0;
  virtual DnsAnswer<std::vector<std::string>> query_addresses(std::string_view name) = 0;
};

/// Positive answers cached for their TTL. Thread-safe.
class CachingDnsClient final : public DnsClient {
public:
  using Clock = std::chrono::steady_clock;

  explicit CachingDnsClient(DnsClient& upstream) : upstream_(upstream) {}

  DnsAnswer<std::vector<SrvRecord>> query_srv(std::string_view name) override;
  DnsAnswer<std::optional<std::string>> query_cname(std::string_view name) override;
  DnsAnswer<std::vector<std::string>> query_addresses(std::string_view name) override;

private:
  template <class T>
  struct Entry {
    DnsAnswer<T> answer;
    Clock::time_point expires;
  };
  template <class T, class Query>
  DnsAnswer<T> cached(std::map<std::string, Entry<T>, std::less<>>& cache, std::string_view name, Query query);

  DnsClient& upstream_;
  std::mutex mutex_;
  std::map<std::string, Entry<std::vector<SrvRecord>>, std::less<>> srv_;
  std::map<std::string, Entry<std::optional<std::string>>, std::less<>> cname_;
  std::map<std::string, Entry<std::vector<std::string>>, std::less<>> addresses_;
};

enum class SecurityPolicy { RequireDnssec, Insecure };

/// Looks up the SRV records for the domain, follows CNAME aliases of each
/// target (at most 8 hops) and reads the key from the final name. Records
/// whose names do not carry a usable key are skipped with a warning; if none
/// survive, the first such error is rethrown. Under RequireDnssec every
/// answer must be authenticated, otherwise SecurityPolicyViolation.
std::vector<ServerLocator> resolve_servers(std::string_view domain_ascii, DnsClient& dns, SecurityPolicy policy);

/// Addresses for a server name, with the same policy check.
std::vector<std::string> resolve_addresses(std::string_view fqdn, DnsClient& dns, SecurityPolicy policy);

} // namespace scap
