#include "scap/discovery.hpp"

#include "scap/codec.hpp"
#include "scap/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

namespace scap {

namespace {

std::string_view strip_trailing_dot(std::string_view name)
{
  if (!name.empty() && name.back() == '.') {
    name.remove_suffix(1);
  }
  return name;
}

std::string lowercase(std::string_view s)
{
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](char c) { return c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c; });
  return out;
}

void enforce(SecurityPolicy policy, bool authenticated, std::string_view what, std::string_view name)
{
  if (policy == SecurityPolicy::RequireDnssec && !authenticated) {
    fail(Errc::SecurityPolicyViolation,
         std::string(what) + " answer for " + std::string(name) + " is not DNSSEC-validated");
  }
}

} // namespace

std::string srv_name_for(std::string_view domain_ascii)
{
  return std::string(kSrvPrefix) + std::string(strip_trailing_dot(domain_ascii)) + ".";
}

LabelKey extract_key_from_fqdn(std::string_view fqdn)
{
  fqdn = strip_trailing_dot(fqdn);
  auto label = lowercase(fqdn.substr(0, fqdn.find('.')));
  if (label.size() < kVersionPrefixLength) {
    fail(Errc::LabelTooShort, "leftmost label '" + label + "' has no version prefix");
  }
  auto version_bytes = base32_decode(std::string_view(label).substr(0, kVersionPrefixLength));
  auto version = static_cast<std::uint16_t>(version_bytes[0] | version_bytes[1] << 8);
  if (version != kLabelVersion) {
    fail(Errc::UnsupportedVersion, "label version " + std::to_string(version));
  }
  auto key_text = std::string_view(label).substr(kVersionPrefixLength);
  if (key_text.size() != kKeyLabelCharacters) {
    // Still report bad characters as such.
    base32_decode_fixed(key_text, (key_text.size() * 5 + 7) / 8);
    fail(Errc::BadKeyLength, std::to_string(key_text.size()) + " key characters, expected 51");
  }
  auto key = base32_decode_fixed(key_text, kKeySize);
  LabelKey out;
  out.version = version;
  std::copy(key.begin(), key.end(), out.public_key.begin());
  return out;
}

std::string fqdn_label_for_key(const PublicKey& public_key, std::uint16_t version)
{
  if (public_key[31] & 0x80) {
    fail(Errc::KeyTopBitSet, "bit 255 of the public key is set");
  }
  const std::uint8_t version_le[2] = {static_cast<std::uint8_t>(version & 0xff),
                                      static_cast<std::uint8_t>(version >> 8)};
  auto key = base32_encode(public_key);
  // The 52nd character holds only bit 255, which is zero here.
  key.pop_back();
  return base32_encode(version_le) + key;
}

// ---------------------------------------------------------------------------

template <class T, class Query>
DnsAnswer<T> CachingDnsClient::cached(std::map<std::string, Entry<T>, std::less<>>& cache, std::string_view name,
                                      Query query)
{
  auto key = lowercase(name);
  {
    std::lock_guard lock(mutex_);
    auto it = cache.find(key);
    if (it != cache.end()) {
      if (Clock::now() < it->second.expires) {
        return it->second.answer;
      }
      cache.erase(it);
    }
  }
  auto answer = query();
  bool positive;
  if constexpr (std::is_same_v<T, std::optional<std::string>>) {
    positive = answer.records.has_value();
  } else {
    positive = !answer.records.empty();
  }
  if (positive && answer.ttl > 0) {
    std::lock_guard lock(mutex_);
    cache[key] = Entry<T>{answer, Clock::now() + std::chrono::seconds(answer.ttl)};
  }
  return answer;
}

DnsAnswer<std::vector<SrvRecord>> CachingDnsClient::query_srv(std::string_view name)
{
  return cached(srv_, name, [&] { return upstream_.query_srv(name); });
}

DnsAnswer<std::optional<std::string>> CachingDnsClient::query_cname(std::string_view name)
{
  return cached(cname_, name, [&] { return upstream_.query_cname(name); });
}

DnsAnswer<std::vector<std::string>> CachingDnsClient::query_addresses(std::string_view name)
{
  return cached(addresses_, name, [&] { return upstream_.query_addresses(name); });
}

// ---------------------------------------------------------------------------

std::vector<ServerLocator> resolve_servers(std::string_view domain_ascii, DnsClient& dns, SecurityPolicy policy)
{
  auto srv_name = srv_name_for(domain_ascii);
  auto srv = dns.query_srv(srv_name);
  enforce(policy, srv.authenticated, "SRV", srv_name);

  std::vector<SrvRecord> records;
  for (const auto& r : srv.records) {
    // A lone "." target means the service is explicitly unavailable.
    if (!strip_trailing_dot(r.target).empty()) {
      records.push_back(r);
    }
  }
  if (records.empty()) {
    fail(Errc::NoSrvRecords, "no usable SRV records at " + srv_name);
  }

  std::vector<ServerLocator> servers;
  std::optional<Error> first_error;
  for (const auto& record : records) {
    try {
      std::string name(strip_trailing_dot(record.target));
      bool authenticated = srv.authenticated;
      for (int hops = 0;; ++hops) {
        auto alias = dns.query_cname(name + ".");
        enforce(policy, alias.authenticated, "CNAME", name);
        authenticated = authenticated && alias.authenticated;
        if (!alias.records) {
          break;
        }
        if (hops == kMaxAliasChain) {
          fail(Errc::AliasChainTooLong, "more than 8 CNAME hops from " + record.target);
        }
        name = std::string(strip_trailing_dot(*alias.records));
      }
      auto key = extract_key_from_fqdn(name);
      ServerLocator locator;
      locator.fqdn = lowercase(name);
      locator.port = record.port;
      locator.version = key.version;
      locator.public_key = key.public_key;
      locator.priority = record.priority;
      locator.weight = record.weight;
      locator.srv_target = std::string(strip_trailing_dot(record.target));
      locator.dnssec_validated = authenticated;
      servers.push_back(std::move(locator));
    } catch (const Error& e) {
      if (e.code() == Errc::SecurityPolicyViolation) {
        throw;
      }
      spdlog::warn("skipping SRV target {}: {}", record.target, e.what());
      if (!first_error) {
        first_error = e;
      }
    }
  }
  if (servers.empty()) {
    throw *first_error;
  }
  return servers;
}

std::vector<std::string> resolve_addresses(std::string_view fqdn, DnsClient& dns, SecurityPolicy policy)
{
  auto answer = dns.query_addresses(fqdn);
  enforce(policy, answer.authenticated, "address", fqdn);
  if (answer.records.empty()) {
    fail(Errc::DnsFailure, "no A/AAAA records for " + std::string(fqdn));
  }
  return answer.records;
}

} // namespace scap
