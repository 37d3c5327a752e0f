#include "scap/discovery.hpp"
#include "scap/harness.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace scap;
using scap::harness::MockZone;

namespace {

constexpr std::string_view kLabel1 = "1000vs2nh9b3gz04db4rgpjmzv2cwlnpvh3qzn6xljwyxmnp57j8h0d";
constexpr std::string_view kLabel2 = "100027q245f6cglhdjyy91vk5btyszk6g5fnhz7mvsc6mtfjh2q0c14";
constexpr std::string_view kLabel3 = "10009ydzvtccqmbzw6q0zlgumtr227g0kwb2zk8h5rv7yruj7gg6zh3";

std::string key_hex(std::string_view fqdn) { return hex_encode(extract_key_from_fqdn(fqdn).public_key); }

} // namespace

TEST(Label, SampleLabelsDecodeToKeys)
{
  EXPECT_EQ(key_hex(std::string(kLabel1) + ".example.org"),
            "1b0bfa921aee03c214b9aec2f9b7585cd2badfb09f9a2e21f77dd25a0e440f30");
  EXPECT_EQ(key_hex(std::string(kLabel2) + ".example.org"),
            "e258414a33cbc9c7a0f729ec5854f6f847e34aa3ef9fb9f1323337f884052b10");
  EXPECT_EQ(key_hex(std::string(kLabel3) + ".example.org."),
            "c9b3bff35a76aacf8d055f3a3df315e23810b9123fa257ee3efe6a789c33ff0d");
  EXPECT_EQ(extract_key_from_fqdn(kLabel1).version, 1);
}

TEST(Label, EncodingMatchesSampleLabels)
{
  for (auto label : {kLabel1, kLabel2, kLabel3}) {
    auto key = extract_key_from_fqdn(label).public_key;
    EXPECT_EQ(fqdn_label_for_key(key), label);
    EXPECT_EQ(fqdn_label_for_key(key).size(), kServerLabelLength);
  }
}

TEST(Label, RandomKeysRoundTrip)
{
  SeededEntropy entropy(5);
  for (int i = 0; i < 1000; ++i) {
    auto keys = generate_keypair(entropy);
    auto label = fqdn_label_for_key(keys.public_key);
    ASSERT_EQ(extract_key_from_fqdn(label + ".example.com").public_key, keys.public_key);
  }
}

TEST(Label, Errors)
{
  EXPECT_ERRC(extract_key_from_fqdn("abc.example.org"), Errc::LabelTooShort);
  EXPECT_ERRC(extract_key_from_fqdn("2000" + std::string(kLabel1.substr(4)) + ".example.org"),
              Errc::UnsupportedVersion);
  EXPECT_ERRC(extract_key_from_fqdn(std::string(kLabel1.substr(0, 54)) + ".example.org"), Errc::BadKeyLength);
  EXPECT_ERRC(extract_key_from_fqdn(std::string(kLabel1) + "0.example.org"), Errc::BadKeyLength);
  std::string bad(kLabel1);
  bad[10] = 'a';
  EXPECT_ERRC(extract_key_from_fqdn(bad), Errc::InvalidCharacter);
  PublicKey top{};
  top[31] = 0x80;
  EXPECT_ERRC(fqdn_label_for_key(top), Errc::KeyTopBitSet);
}

TEST(Label, SrvName) { EXPECT_EQ(srv_name_for("example.org"), "_scap._tcp.example.org."); }

TEST(Discovery, SampleZoneYieldsThreeServers)
{
  auto zone = harness::sample_zone();
  auto servers = resolve_servers("example.org", zone, SecurityPolicy::RequireDnssec);
  ASSERT_EQ(servers.size(), 3u);
  EXPECT_EQ(servers[0].fqdn, std::string(kLabel1) + ".example.org");
  EXPECT_EQ(servers[0].priority, 10);
  EXPECT_EQ(servers[0].weight, 65);
  EXPECT_EQ(servers[0].port, kDefaultPort);
  EXPECT_TRUE(servers[0].dnssec_validated);
  EXPECT_EQ(hex_encode(servers[2].public_key), "c9b3bff35a76aacf8d055f3a3df315e23810b9123fa257ee3efe6a789c33ff0d");
  EXPECT_EQ(resolve_addresses(servers[1].fqdn, zone, SecurityPolicy::RequireDnssec),
            std::vector<std::string>{"192.0.2.2"});
}

TEST(Discovery, MissingSrvIsAnError)
{
  MockZone zone;
  EXPECT_ERRC(resolve_servers("nodomain.example", zone, SecurityPolicy::RequireDnssec), Errc::NoSrvRecords);
  zone.add_srv("_scap._tcp.dot.example", {0, 0, 0, ".", 60, true});
  EXPECT_ERRC(resolve_servers("dot.example", zone, SecurityPolicy::RequireDnssec), Errc::NoSrvRecords);
}

TEST(Discovery, UnvalidatedAnswersViolatePolicy)
{
  auto zone = harness::sample_zone();
  zone.set_validated("_scap._tcp.example.org", false);
  EXPECT_ERRC(resolve_servers("example.org", zone, SecurityPolicy::RequireDnssec), Errc::SecurityPolicyViolation);
  auto servers = resolve_servers("example.org", zone, SecurityPolicy::Insecure);
  ASSERT_EQ(servers.size(), 3u);
  EXPECT_FALSE(servers[0].dnssec_validated);

  auto zone2 = harness::sample_zone();
  zone2.set_validated(std::string(kLabel2) + ".example.org", false);
  // Every answer on the path counts, including the empty CNAME lookup.
  EXPECT_ERRC(resolve_servers("example.org", zone2, SecurityPolicy::RequireDnssec), Errc::SecurityPolicyViolation);

  auto zone3 = harness::sample_zone();
  auto servers3 = resolve_servers("example.org", zone3, SecurityPolicy::RequireDnssec);
  zone3.set_validated(servers3[1].fqdn, false);
  EXPECT_ERRC(resolve_addresses(servers3[1].fqdn, zone3, SecurityPolicy::RequireDnssec),
              Errc::SecurityPolicyViolation);
  EXPECT_NO_THROW(resolve_addresses(servers3[1].fqdn, zone3, SecurityPolicy::Insecure));
}

TEST(Discovery, FollowsCnameChainToKeyLabel)
{
  MockZone zone;
  zone.add_srv("_scap._tcp.alias.example", {10, 0, 4000, "srv.alias.example.", 60, true});
  std::string previous = "srv.alias.example";
  for (int i = 0; i < 7; ++i) {
    auto next = "hop" + std::to_string(i) + ".alias.example";
    zone.add_cname(previous, next + ".");
    previous = next;
  }
  zone.add_cname(previous, std::string(kLabel1) + ".hosting.example.");
  auto servers = resolve_servers("alias.example", zone, SecurityPolicy::RequireDnssec);
  ASSERT_EQ(servers.size(), 1u);
  EXPECT_EQ(servers[0].fqdn, std::string(kLabel1) + ".hosting.example");
  EXPECT_EQ(servers[0].srv_target, "srv.alias.example");
  EXPECT_EQ(servers[0].port, 4000);
}

TEST(Discovery, AliasChainLongerThanEightFails)
{
  MockZone zone;
  zone.add_srv("_scap._tcp.loop.example", {10, 0, 4000, "a0.loop.example.", 60, true});
  for (int i = 0; i < 9; ++i) {
    zone.add_cname("a" + std::to_string(i) + ".loop.example", "a" + std::to_string(i + 1) + ".loop.example.");
  }
  EXPECT_ERRC(resolve_servers("loop.example", zone, SecurityPolicy::RequireDnssec), Errc::AliasChainTooLong);
}

TEST(Discovery, BadTargetsAreSkipped)
{
  MockZone zone;
  zone.add_srv("_scap._tcp.mixed.example", {10, 0, 4000, "abc.mixed.example.", 60, true});
  zone.add_srv("_scap._tcp.mixed.example", {10, 0, 4000, std::string(kLabel3) + ".mixed.example.", 60, true});
  auto servers = resolve_servers("mixed.example", zone, SecurityPolicy::RequireDnssec);
  ASSERT_EQ(servers.size(), 1u);

  MockZone only_bad;
  only_bad.add_srv("_scap._tcp.bad.example", {10, 0, 4000, "abc.bad.example.", 60, true});
  EXPECT_ERRC(resolve_servers("bad.example", only_bad, SecurityPolicy::RequireDnssec), Errc::LabelTooShort);
}

TEST(Selection, WeightsSplitWithinTolerance)
{
  auto zone = harness::sample_zone();
  auto servers = resolve_servers("example.org", zone, SecurityPolicy::RequireDnssec);
  std::mt19937_64 rng(2024);
  std::map<std::size_t, int> counts;
  constexpr int kDraws = 100'000;
  for (int i = 0; i < kDraws; ++i) {
    ++counts[*select_index(std::span<const ServerLocator>(servers), rng)];
  }
  EXPECT_NEAR(counts[0] / double(kDraws), 0.65, 0.02);
  EXPECT_NEAR(counts[1] / double(kDraws), 0.35, 0.02);
  EXPECT_EQ(counts[2], 0);
}

TEST(Selection, LowerTierOnlyAfterExclusion)
{
  auto zone = harness::sample_zone();
  auto servers = resolve_servers("example.org", zone, SecurityPolicy::RequireDnssec);
  std::mt19937_64 rng(9);
  ExcludedTargets excluded{servers[0].fqdn, servers[1].fqdn};
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(select_server(std::span<const ServerLocator>(servers), rng, excluded).fqdn, servers[2].fqdn);
  }
  excluded.insert(servers[2].fqdn);
  EXPECT_ERRC(select_server(std::span<const ServerLocator>(servers), rng, excluded), Errc::NoServersAvailable);
}

TEST(Selection, ZeroWeightTierIsUniform)
{
  std::vector<SrvRecord> records{{5, 0, 1, "a", 0, true}, {5, 0, 1, "b", 0, true}, {5, 0, 1, "c", 0, true}};
  std::mt19937_64 rng(1);
  std::map<std::size_t, int> counts;
  for (int i = 0; i < 30'000; ++i) {
    ++counts[*select_index(std::span<const SrvRecord>(records), rng)];
  }
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(counts[i] / 30'000.0, 1 / 3.0, 0.02);
  }
}

TEST(Selection, ZeroWeightAmongWeightedIsNeverPicked)
{
  std::vector<SrvRecord> records{{1, 10, 1, "a", 0, true}, {1, 0, 1, "b", 0, true}};
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5000; ++i) {
    ASSERT_EQ(*select_index(std::span<const SrvRecord>(records), rng), 0u);
  }
}

TEST(Selection, SeededEngineIsDeterministic)
{
  auto zone = harness::sample_zone();
  auto servers = resolve_servers("example.org", zone, SecurityPolicy::RequireDnssec);
  std::mt19937_64 a(77), b(77);
  for (int i = 0; i < 500; ++i) {
    ASSERT_EQ(select_index(std::span<const ServerLocator>(servers), a),
              select_index(std::span<const ServerLocator>(servers), b));
  }
}

namespace {

class CountingZone final : public DnsClient {
public:
  explicit CountingZone(MockZone& zone) : zone_(zone) {}
  DnsAnswer<std::vector<SrvRecord>> query_srv(std::string_view n) override
  {
    ++queries;
    return zone_.query_srv(n);
  }
  DnsAnswer<std::optional<std::string>> query_cname(std::string_view n) override
  {
    ++queries;
    return zone_.query_cname(n);
  }
  DnsAnswer<std::vector<std::string>> query_addresses(std::string_view n) override
  {
    ++queries;
    return zone_.query_addresses(n);
  }
  int queries = 0;

private:
  MockZone& zone_;
};

} // namespace

TEST(CachingDnsClient, ReusesPositiveAnswers)
{
  auto zone = harness::sample_zone();
  CountingZone counting(zone);
  CachingDnsClient cache(counting);
  resolve_servers("example.org", cache, SecurityPolicy::RequireDnssec);
  int first = counting.queries;
  resolve_servers("EXAMPLE.org", cache, SecurityPolicy::RequireDnssec);
  // CNAME misses are negative answers and are asked again.
  EXPECT_EQ(counting.queries, first + 3);
}
