#include "scap/harness.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace scap;
using namespace scap::harness;
using scap::test::TempDir;

namespace {

const std::string kBitcoin = "000000000019d6689c085ae165831e934ff763ae46a2a6c172b3f1b60a8ce26f";

std::vector<ProtocolMessage> hello_and_query() { return {ClientHello{}, Query{std::string(kJohnDoe), kBitcoin}}; }

std::string text(const Bytes& b) { return std::string(b.begin(), b.end()); }

Bytes read_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST(Transcript, FourPlaintextLines)
{
  auto t = run_transcript(sample_store(), hello_and_query());
  ASSERT_EQ(t.entries.size(), 4u);
  EXPECT_EQ(text(t.entries[0].plaintext), "1:H,");
  EXPECT_EQ(text(t.entries[1].plaintext), "1:O,");
  EXPECT_EQ(text(t.entries[2].plaintext), "92:Q19:johndoe@example.com,64:" + kBitcoin + ",,");
  EXPECT_EQ(text(t.entries[3].plaintext), "35:O1NS17iag9jJgTHD1VXjvLCEnZuQ3rJDE9L,");
  EXPECT_EQ(t.entries[0].direction, Direction::ClientToServer);
  EXPECT_EQ(t.entries[3].direction, Direction::ServerToClient);
  EXPECT_EQ(t.frames.size(), 4u);
  EXPECT_EQ(t.nonces.size(), 4u);
}

TEST(Transcript, EmptyRequestListIsEmpty)
{
  auto t = run_transcript(sample_store(), {});
  EXPECT_TRUE(t.entries.empty());
  EXPECT_TRUE(t.frames.empty());
  EXPECT_FALSE(t.client_error);
  EXPECT_FALSE(t.server_error);
}

TEST(Transcript, ThousandQueriesKeepNoncesUnique)
{
  std::vector<ProtocolMessage> requests{ClientHello{}};
  for (int i = 0; i < 1000; ++i) {
    requests.push_back(Query{std::string(kJohnDoe), kBitcoin});
  }
  auto t = run_transcript(sample_store(), requests);
  // One hello and a thousand queries, each answered.
  EXPECT_EQ(t.entries.size(), 2002u);
  std::set<BoxNonce> unique(t.nonces.begin(), t.nonces.end());
  EXPECT_EQ(unique.size(), 2002u);
  EXPECT_FALSE(t.client_error);
}

TEST(Transcript, QueryFirstIsRecordedAsClientError)
{
  auto t = run_transcript(sample_store(), {Query{std::string(kJohnDoe), kBitcoin}});
  EXPECT_EQ(t.client_error, Errc::HandshakeIncomplete);
  EXPECT_TRUE(t.frames.empty());
}

TEST(Transcript, Deterministic)
{
  auto a = run_transcript(sample_store(), hello_and_query());
  auto b = run_transcript(sample_store(), hello_and_query());
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.nonces, b.nonces);
}

TEST(Faults, FlippedServerReplyFailsAuthentication)
{
  // Frame 3 is the reply to the query; byte 20 lies inside its box.
  auto outcome = run_with_faults({{{3, FlipByte{20}}}}, sample_store(), hello_and_query());
  EXPECT_EQ(outcome.transcript.client_error, Errc::AuthenticationFailure);
  EXPECT_FALSE(outcome.tampered_plaintext);
  EXPECT_TRUE(outcome.torn_down);
  EXPECT_EQ(outcome.transcript.entries.size(), 3u);
}

TEST(Faults, EveryByteOfEveryFrameIsProtected)
{
  auto clean = run_transcript(sample_store(), hello_and_query());
  for (std::size_t frame = 0; frame < clean.frames.size(); ++frame) {
    const auto& framed = clean.frames[frame].second;
    auto header = framed.size() - netstring_decode(framed).payload.size() - 1;
    for (std::size_t pos = 0; pos < framed.size() - header - 1; ++pos) {
      auto outcome = run_with_faults({{{frame, FlipByte{pos, 0x80}}}}, sample_store(), hello_and_query());
      ASSERT_FALSE(outcome.tampered_plaintext) << "frame " << frame << " byte " << pos;
      ASSERT_TRUE(outcome.torn_down) << "frame " << frame << " byte " << pos;
      ASSERT_EQ(outcome.tampered_frames, 1u);
    }
  }
}

TEST(Faults, TruncatedFrameIsReported)
{
  auto outcome = run_with_faults({{{1, Truncate{10}}}}, sample_store(), hello_and_query());
  EXPECT_EQ(outcome.transcript.client_error, Errc::TruncatedFrame);
  EXPECT_FALSE(outcome.tampered_plaintext);
  auto client_side = run_with_faults({{{2, Truncate{30}}}}, sample_store(), hello_and_query());
  EXPECT_EQ(client_side.transcript.server_error, Errc::TruncatedFrame);
  EXPECT_TRUE(client_side.torn_down);
}

TEST(Faults, ReplayReorderAndDropTearDown)
{
  std::vector<ProtocolMessage> requests = hello_and_query();
  requests.push_back(Query{std::string(kJohnDoe), kBitcoin});
  for (FaultAction action : {FaultAction{ReplayPrevious{}}, FaultAction{ReorderSwap{}}, FaultAction{Drop{}}}) {
    for (std::size_t frame = 0; frame < 6; ++frame) {
      auto outcome = run_with_faults({{{frame, action}}}, sample_store(), requests);
      SCOPED_TRACE(frame);
      EXPECT_FALSE(outcome.tampered_plaintext);
      if (frame >= 2 || std::holds_alternative<Drop>(action)) {
        EXPECT_TRUE(outcome.torn_down);
      }
    }
  }
}

TEST(Faults, ReplayedQueryIsRejectedAsReplay)
{
  std::vector<ProtocolMessage> requests = hello_and_query();
  requests.push_back(Query{std::string(kJohnDoe), kBitcoin});
  // Frame 4 is the second query; replace it with the first one.
  auto outcome = run_with_faults({{{4, ReplayPrevious{}}}}, sample_store(), requests);
  EXPECT_EQ(outcome.transcript.server_error, Errc::StaleServerHalf);
}

TEST(Faults, RandomPlansNeverLeakTamperedPlaintext)
{
  std::mt19937_64 rng(99);
  std::vector<ProtocolMessage> requests = hello_and_query();
  for (int i = 0; i < 4; ++i) {
    requests.push_back(Query{std::string(kJohnDoe), kBitcoin});
  }
  for (int run = 0; run < 300; ++run) {
    FaultPlan plan;
    auto faults = 1 + rng() % 3;
    for (std::size_t f = 0; f < faults; ++f) {
      std::size_t at = rng() % 12;
      switch (rng() % 5) {
        case 0: plan.faults.push_back({at, FlipByte{static_cast<std::size_t>(rng() % 200), 0x01}}); break;
        case 1: plan.faults.push_back({at, Truncate{static_cast<std::size_t>(rng() % 60)}}); break;
        case 2: plan.faults.push_back({at, ReplayPrevious{}}); break;
        case 3: plan.faults.push_back({at, ReorderSwap{}}); break;
        default: plan.faults.push_back({at, Drop{}}); break;
      }
    }
    auto outcome = run_with_faults(plan, sample_store(), requests);
    ASSERT_FALSE(outcome.tampered_plaintext) << "run " << run;
    if (outcome.tampered_frames > 0) {
      ASSERT_TRUE(outcome.torn_down) << "run " << run;
    }
  }
}

TEST(Replay, FirstFrameAcceptedFreshRejectedInSession)
{
  auto report = replay_first_frame();
  EXPECT_TRUE(report.fresh_session_accepted);
  EXPECT_EQ(report.same_session_error, Errc::StaleServerHalf);
}

TEST(GoldenVectors, CoverEveryFrameKind)
{
  auto frames = golden_frames();
  ASSERT_EQ(frames.size(), 4u);
  std::set<FrameKind> kinds;
  for (const auto& f : frames) {
    kinds.insert(f.kind);
  }
  EXPECT_EQ(kinds.size(), 3u);
  EXPECT_EQ(text(frames[2].plaintext), "92:Q19:johndoe@example.com,64:" + kBitcoin + ",,");
}

TEST(GoldenVectors, ExportIsByteIdenticalAcrossRuns)
{
  TempDir a;
  TempDir b;
  auto first = export_golden_vectors(a.path());
  auto second = export_golden_vectors(b.path());
  ASSERT_EQ(first.size(), 9u);
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(first[i].filename(), second[i].filename());
    EXPECT_EQ(read_file(first[i]), read_file(second[i]));
  }
  EXPECT_EQ(text(read_file(a.path() / "03-server_query_reply.plaintext")), "35:O1NS17iag9jJgTHD1VXjvLCEnZuQ3rJDE9L,");
  auto index = text(read_file(a.path() / "index.txt"));
  EXPECT_NE(index.find("frame.0.kind=first_client"), std::string::npos) << index;
  EXPECT_NE(index.find("client.counter_start=1\n"), std::string::npos);
}

TEST(GoldenVectors, CheckedInCopyMatches)
{
  TempDir dir;
  for (const auto& path : export_golden_vectors(dir.path())) {
    auto committed = std::filesystem::path(SCAP_VECTOR_DIR) / path.filename();
    ASSERT_TRUE(std::filesystem::exists(committed)) << committed;
    EXPECT_EQ(read_file(path), read_file(committed)) << path.filename();
  }
}

TEST(MockZone, NamesAreCaseAndDotInsensitive)
{
  auto zone = sample_zone();
  EXPECT_EQ(zone.query_srv("_SCAP._tcp.Example.Org.").records.size(), 3u);
  EXPECT_EQ(zone.query_srv("_scap._tcp.example.org").records.size(), 3u);
  EXPECT_TRUE(zone.query_srv("_scap._tcp.other.org").records.empty());
}

TEST(Dialers, RecordAndRoute)
{
  ServerThread server(keypair_from_secret(clamp_scalar(SessionSetup::filled(0x22))), sample_store());
  LoopbackDialer loopback;
  loopback.route("a.example", 4332, server.port());
  RecordingDialer dialer(loopback);
  EXPECT_NE(dialer.connect("a.example", 4332, Millis(1000)), nullptr);
  EXPECT_ERRC(dialer.connect("b.example", 4332, Millis(1000)), Errc::ConnectFailed);
  EXPECT_EQ(dialer.attempts(), (std::vector<std::string>{"a.example:4332", "b.example:4332"}));
  EXPECT_EQ(dialer.connected(), (std::vector<std::string>{"a.example:4332"}));
}
