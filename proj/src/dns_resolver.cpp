#include "scap/dns_resolver.hpp"

#include "scap/error.hpp"

#include <arpa/inet.h>
#include <arpa/nameser.h>
#include <netinet/in.h>
#include <resolv.h>

#include <algorithm>
#include <array>
#include <cstdlib>
#include <cstring>
#include <random>

namespace scap {

namespace {

constexpr std::size_t kMaxResponse = 65535;
constexpr std::uint16_t kEdnsUdpSize = 1232;
constexpr std::uint32_t kEdnsDoBit = 0x8000;

struct ParsedResponse {
  Bytes raw;
  ns_msg msg{};
  bool authenticated = false;
  int rcode = 0;
};

/// A resolver state that is always closed again.
class ResolverState {
public:
  explicit ResolverState(const ResolvDnsClient::Options& options)
  {
    std::memset(&state_, 0, sizeof state_);
    if (res_ninit(&state_) != 0) {
      fail(Errc::DnsFailure, "res_ninit failed");
    }
    state_.options |= RES_USE_EDNS0 | RES_USE_DNSSEC | RES_TRUSTAD;
    state_.retrans = static_cast<int>(options.timeout.count());
    state_.retry = options.attempts;
    if (options.nameserver) {
      const auto& spec = *options.nameserver;
      auto colon = spec.rfind(':');
      std::string host = colon == std::string::npos ? spec : spec.substr(0, colon);
      int port = colon == std::string::npos ? NS_DEFAULTPORT : std::atoi(spec.c_str() + colon + 1);
      sockaddr_in addr{};
      addr.sin_family = AF_INET;
      addr.sin_port = htons(static_cast<std::uint16_t>(port));
      if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1 || port <= 0 || port > 65535) {
        res_nclose(&state_);
        fail(Errc::DnsFailure, "resolver address '" + spec + "' is not IPv4 address[:port]");
      }
      state_.nsaddr_list[0] = addr;
      state_.nscount = 1;
    }
  }
  ~ResolverState() { res_nclose(&state_); }
  ResolverState(const ResolverState&) = delete;
  ResolverState& operator=(const ResolverState&) = delete;

  res_state get() { return &state_; }

private:
  struct ::__res_state state_;
};

void put16(Bytes& out, std::uint16_t v)
{
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

Bytes build_query(std::string_view name, std::uint16_t type)
{
  static thread_local std::mt19937 id_engine{std::random_device{}()};
  Bytes q;
  put16(q, static_cast<std::uint16_t>(id_engine()));
  put16(q, 0x0120); // RD | AD
  put16(q, 1);      // QDCOUNT
  put16(q, 0);
  put16(q, 0);
  put16(q, 1); // ARCOUNT: OPT
  std::size_t start = 0;
  while (start < name.size()) {
    auto dot = name.find('.', start);
    auto label = name.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start);
    if (label.empty() || label.size() > 63) {
      fail(Errc::DnsFailure, "cannot encode query name '" + std::string(name) + "'");
    }
    q.push_back(static_cast<std::uint8_t>(label.size()));
    append(q, label);
    if (dot == std::string_view::npos) {
      break;
    }
    start = dot + 1;
  }
  q.push_back(0);
  put16(q, type);
  put16(q, ns_c_in);
  // OPT pseudo-record with the DO bit.
  q.push_back(0);
  put16(q, ns_t_opt);
  put16(q, kEdnsUdpSize);
  put16(q, 0);
  put16(q, static_cast<std::uint16_t>(kEdnsDoBit));
  put16(q, 0);
  return q;
}

ParsedResponse send_query(const ResolvDnsClient::Options& options, std::string_view name, std::uint16_t type)
{
  ResolverState state(options);
  auto query = build_query(name, type);
  ParsedResponse response;
  response.raw.resize(kMaxResponse);
  int n = res_nsend(state.get(), query.data(), static_cast<int>(query.size()), response.raw.data(),
                    static_cast<int>(response.raw.size()));
  if (n < 0) {
    fail(Errc::DnsFailure, "no response for " + std::string(name));
  }
  response.raw.resize(static_cast<std::size_t>(n));
  if (ns_initparse(response.raw.data(), n, &response.msg) != 0) {
    fail(Errc::DnsFailure, "unparseable response for " + std::string(name));
  }
  response.rcode = ns_msg_getflag(response.msg, ns_f_rcode);
  response.authenticated = ns_msg_getflag(response.msg, ns_f_ad) != 0;
  if (response.rcode != ns_r_noerror && response.rcode != ns_r_nxdomain) {
    fail(Errc::DnsFailure, "rcode " + std::to_string(response.rcode) + " for " + std::string(name));
  }
  return response;
}

/// Calls f(rr) for each answer record of the given type.
template <class F>
std::uint32_t for_each_answer(ParsedResponse& response, std::uint16_t type, F f)
{
  std::uint32_t ttl = 0;
  bool first = true;
  int count = ns_msg_count(response.msg, ns_s_an);
  for (int i = 0; i < count; ++i) {
    ns_rr rr;
    if (ns_parserr(&response.msg, ns_s_an, i, &rr) != 0) {
      fail(Errc::DnsFailure, "malformed answer record");
    }
    if (ns_rr_type(rr) != type) {
      continue;
    }
    ttl = first ? ns_rr_ttl(rr) : std::min<std::uint32_t>(ttl, ns_rr_ttl(rr));
    first = false;
    f(rr);
  }
  return ttl;
}

std::string expand_name(ParsedResponse& response, const unsigned char* at)
{
  char name[NS_MAXDNAME];
  if (dn_expand(ns_msg_base(response.msg), ns_msg_end(response.msg), at, name, sizeof name) < 0) {
    fail(Errc::DnsFailure, "bad compressed name in answer");
  }
  return name;
}

} // namespace

ResolvDnsClient::Options ResolvDnsClient::options_from_env()
{
  Options options;
  if (const char* env = std::getenv("SCAP_RESOLVER"); env != nullptr && *env != '\0') {
    options.nameserver = env;
  }
  return options;
}

ResolvDnsClient::ResolvDnsClient(Options options) : options_(std::move(options)) {}

DnsAnswer<std::vector<SrvRecord>> ResolvDnsClient::query_srv(std::string_view name)
{
  auto response = send_query(options_, name, ns_t_srv);
  DnsAnswer<std::vector<SrvRecord>> answer;
  answer.authenticated = response.authenticated;
  answer.ttl = for_each_answer(response, ns_t_srv, [&](const ns_rr& rr) {
    if (ns_rr_rdlen(rr) < 7) {
      fail(Errc::DnsFailure, "short SRV rdata");
    }
    const unsigned char* rdata = ns_rr_rdata(rr);
    SrvRecord record;
    record.priority = ns_get16(rdata);
    record.weight = ns_get16(rdata + 2);
    record.port = ns_get16(rdata + 4);
    record.target = expand_name(response, rdata + 6);
    record.ttl = ns_rr_ttl(rr);
    record.dnssec_validated = response.authenticated;
    answer.records.push_back(std::move(record));
  });
  return answer;
}

DnsAnswer<std::optional<std::string>> ResolvDnsClient::query_cname(std::string_view name)
{
  auto response = send_query(options_, name, ns_t_cname);
  DnsAnswer<std::optional<std::string>> answer;
  answer.authenticated = response.authenticated;
  answer.ttl = for_each_answer(response, ns_t_cname, [&](const ns_rr& rr) {
    if (!answer.records) {
      answer.records = expand_name(response, ns_rr_rdata(rr));
    }
  });
  return answer;
}

DnsAnswer<std::vector<std::string>> ResolvDnsClient::query_addresses(std::string_view name)
{
  DnsAnswer<std::vector<std::string>> answer;
  answer.authenticated = true;
  bool have_ttl = false;
  for (auto type : {ns_t_a, ns_t_aaaa}) {
    auto response = send_query(options_, name, type);
    answer.authenticated = answer.authenticated && response.authenticated;
    auto ttl = for_each_answer(response, type, [&](const ns_rr& rr) {
      char text[INET6_ADDRSTRLEN];
      int family = type == ns_t_a ? AF_INET : AF_INET6;
      std::size_t expected = type == ns_t_a ? 4 : 16;
      if (ns_rr_rdlen(rr) != expected || inet_ntop(family, ns_rr_rdata(rr), text, sizeof text) == nullptr) {
        fail(Errc::DnsFailure, "malformed address record");
      }
      answer.records.emplace_back(text);
    });
    if (ttl > 0) {
      answer.ttl = have_ttl ? std::min(answer.ttl, ttl) : ttl;
      have_ttl = true;
    }
  }
  return answer;
}

} // namespace scap
