#include "scap/client.hpp"
#include "scap/harness.hpp"
#include "scap/server.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sys/stat.h>

#include <fstream>
#include <thread>

using namespace scap;
using scap::test::TempDir;

namespace {

const std::string kBitcoin = "000000000019d6689c085ae165831e934ff763ae46a2a6c172b3f1b60a8ce26f";

Bytes B(std::string_view s) { return to_bytes(s); }

KeyPair fixed_server_keys() { return keypair_from_secret(clamp_scalar(harness::SessionSetup::filled(0x22))); }

} // namespace

TEST(HandleMessage, HelloListsExtensions)
{
  ExtensionRegistry registry;
  EXPECT_EQ(handle_message(nullptr, registry, ClientHello{}), ProtocolMessage(Ok{}));
  registry.advertise("ABC");
  registry.advertise("XPING");
  EXPECT_EQ(handle_message(nullptr, registry, ClientHello{}), ProtocolMessage(Ok{B("ABC XPING")}));
  EXPECT_ERRC(registry.advertise("X"), Errc::EmptyExtensionName);
}

TEST(HandleMessage, QueryHitMissAndErrors)
{
  auto store = harness::sample_store();
  ExtensionRegistry registry;
  EXPECT_EQ(handle_message(&store, registry, Query{"johndoe@example.com", kBitcoin}),
            ProtocolMessage(Ok{B("1NS17iag9jJgTHD1VXjvLCEnZuQ3rJDE9L")}));
  EXPECT_EQ(handle_message(&store, registry, Query{"janedoe@example.com", kBitcoin}),
            ProtocolMessage(PermFail{std::string(kMissDescription)}));
  EXPECT_TRUE(std::holds_alternative<PermFail>(handle_message(&store, registry, Query{"no-at-sign", kBitcoin})));
  EXPECT_TRUE(std::holds_alternative<PermFail>(handle_message(&store, registry, Query{"a@b.example", ""})));
  EXPECT_TRUE(std::holds_alternative<TempFail>(handle_message(nullptr, registry, Query{"johndoe@example.com", kBitcoin})));
  EXPECT_TRUE(std::holds_alternative<PermFail>(handle_message(&store, registry, Reserved{B("x")})));
}

TEST(HandleMessage, ProprietaryHandlers)
{
  ExtensionRegistry registry;
  registry.add_handler("XPING", [](ByteView data) -> ProtocolMessage { return Ok{Bytes(data.begin(), data.end())}; });
  registry.add_handler("XBAD", [](ByteView) -> ProtocolMessage { return ClientHello{}; });
  registry.add_handler("XTHROW", [](ByteView) -> ProtocolMessage { throw std::runtime_error("boom"); });
  EXPECT_EQ(handle_message(nullptr, registry, NonStandard{"PING", B("hi")}), ProtocolMessage(Ok{B("hi")}));
  EXPECT_TRUE(std::holds_alternative<PermFail>(handle_message(nullptr, registry, NonStandard{"NOPE", {}})));
  EXPECT_TRUE(std::holds_alternative<TempFail>(handle_message(nullptr, registry, NonStandard{"BAD", {}})));
  EXPECT_TRUE(std::holds_alternative<TempFail>(handle_message(nullptr, registry, NonStandard{"THROW", {}})));
}

TEST(Config, ParsesKeysAndRelativePaths)
{
  auto config = parse_config("# comment\nlisten = 127.0.0.1\nport = 5000\nkey_file = server.key # inline\n"
                             "store_file=/abs/map.store\nextensions = ABC XPING\nmax_sessions = 4\nio_timeout = 7\n",
                             "/etc/scap");
  EXPECT_EQ(config.listen_address, "127.0.0.1");
  EXPECT_EQ(config.port, 5000);
  EXPECT_EQ(config.key_file, "/etc/scap/server.key");
  EXPECT_EQ(config.store_file, "/abs/map.store");
  EXPECT_EQ(config.extensions, (std::vector<std::string>{"ABC", "XPING"}));
  EXPECT_EQ(config.max_sessions, 4u);
  EXPECT_EQ(config.io_timeout, std::chrono::seconds(7));
  EXPECT_EQ(parse_config("").port, kDefaultPort);
}

TEST(Config, RejectsBadInput)
{
  for (std::string_view bad : {"port = 0", "port = 70000", "port = x", "bogus = 1", "just words", "extensions = X",
                               "max_sessions = 0"}) {
    SCOPED_TRACE(std::string(bad));
    EXPECT_ERRC(parse_config(bad), Errc::ConfigError);
  }
  EXPECT_ERRC(load_config("/nonexistent/scapd.conf"), Errc::ConfigError);
}

TEST(KeyFile, KeygenWritesOwnerOnlySecret)
{
  TempDir dir;
  auto path = dir.path() / "server.key";
  SeededEntropy entropy(1);
  auto generated = keygen_to_file(path, entropy);
  struct stat st{};
  ASSERT_EQ(::stat(path.c_str(), &st), 0);
  EXPECT_EQ(st.st_mode & 0777, 0600u);
  auto loaded = load_key_file(path);
  EXPECT_EQ(loaded.public_key, generated.keys.public_key);
  EXPECT_EQ(generated.label.size(), kServerLabelLength);
  EXPECT_EQ(extract_key_from_fqdn(generated.label).public_key, loaded.public_key);
  EXPECT_ERRC(keygen_to_file(path, entropy), Errc::IoError);
}

TEST(KeyFile, RejectsBadContents)
{
  TempDir dir;
  std::ofstream(dir.path() / "short") << "abcd\n";
  EXPECT_ERRC(load_key_file(dir.path() / "short"), Errc::ConfigError);
  EXPECT_ERRC(load_key_file(dir.path() / "missing"), Errc::IoError);
}

TEST(Server, LoopbackHelloAndQuery)
{
  harness::ServerThread server(fixed_server_keys(), harness::sample_store());
  auto conn = tcp_connect("127.0.0.1", server.port(), Millis(2000));
  SeededEntropy entropy(3);
  ClientConnection client(*conn, ClientSession::create(server.keys().public_key, entropy));
  EXPECT_EQ(client.hello(), ProtocolMessage(Ok{}));
  EXPECT_EQ(client.request(Query{"johndoe@example.com", kBitcoin}),
            ProtocolMessage(Ok{B("1NS17iag9jJgTHD1VXjvLCEnZuQ3rJDE9L")}));
  EXPECT_EQ(client.request(Query{"nobody@example.com", kBitcoin}),
            ProtocolMessage(PermFail{std::string(kMissDescription)}));
}

TEST(Server, AdvertisesConfiguredExtensions)
{
  ServerConfig config;
  config.extensions = {"ABC", "XDEF"};
  harness::ServerThread server(fixed_server_keys(), {}, config);
  auto conn = tcp_connect("127.0.0.1", server.port(), Millis(2000));
  SeededEntropy entropy(4);
  ClientConnection client(*conn, ClientSession::create(server.keys().public_key, entropy));
  EXPECT_EQ(client.hello(), ProtocolMessage(Ok{B("ABC XDEF")}));
  ASSERT_EQ(client.extensions().size(), 2u);
  EXPECT_TRUE(client.extensions()[1].proprietary);
}

TEST(Server, QueryBeforeHelloClosesConnection)
{
  harness::ServerThread server(fixed_server_keys(), harness::sample_store());
  auto conn = tcp_connect("127.0.0.1", server.port(), Millis(2000));
  auto client_keys = keypair_from_secret(clamp_scalar(harness::SessionSetup::filled(0x11)));
  auto shared = derive_shared(client_keys.secret, server.keys().public_key);
  auto half = NonceHalf::from_counter(1);
  auto box = seal_box(shared, make_box_nonce(half, NonceHalf{}), message_encode(Query{"johndoe@example.com", kBitcoin}));
  conn->write_all(frame_encode(FirstClientFrame{client_keys.public_key, half, box}));
  FrameReader reader(*conn);
  // No reply, just the end of the stream.
  EXPECT_EQ(reader.read_frame(), std::nullopt);
}

TEST(Server, GarbageClosesConnection)
{
  harness::ServerThread server(fixed_server_keys(), harness::sample_store());
  auto conn = tcp_connect("127.0.0.1", server.port(), Millis(2000));
  conn->write_all(B("99999999:"));
  FrameReader reader(*conn);
  EXPECT_EQ(reader.read_frame(), std::nullopt);
}

TEST(Server, HundredConcurrentSessions)
{
  harness::ServerThread server(fixed_server_keys(), harness::sample_store());
  constexpr int kClients = 100;
  std::atomic<int> good = 0;
  std::vector<std::unique_ptr<Connection>> conns;
  std::vector<ClientConnection> clients;
  // Open everything first so the sessions really overlap.
  SeededEntropy entropy(5);
  for (int i = 0; i < kClients; ++i) {
    conns.push_back(tcp_connect("127.0.0.1", server.port(), Millis(5000)));
  }
  for (int i = 0; i < kClients; ++i) {
    clients.emplace_back(*conns[i], ClientSession::create(server.keys().public_key, entropy));
  }
  std::vector<std::thread> threads;
  for (int i = 0; i < kClients; ++i) {
    threads.emplace_back([&, i] {
      try {
        clients[i].hello();
        for (int q = 0; q < 5; ++q) {
          if (clients[i].request(Query{"johndoe@example.com", kBitcoin}) !=
              ProtocolMessage(Ok{B("1NS17iag9jJgTHD1VXjvLCEnZuQ3rJDE9L")})) {
            return;
          }
        }
        ++good;
      } catch (const std::exception&) {
      }
    });
  }
  for (auto& t : threads) {
    t.join();
  }
  EXPECT_EQ(good, kClients);
  EXPECT_EQ(server.server().accepted_connections(), static_cast<std::size_t>(kClients));
}

TEST(Server, ReloadSwapsStoreAndKeepsOldOnError)
{
  TempDir dir;
  auto store_path = dir.path() / "map.store";
  store_save(MappingStore{}, store_path);
  ServerConfig config;
  config.store_file = store_path;
  harness::ServerThread server(fixed_server_keys(), store_load(store_path), config);

  auto ask = [&] {
    auto conn = tcp_connect("127.0.0.1", server.port(), Millis(2000));
    SeededEntropy entropy(6);
    ClientConnection client(*conn, ClientSession::create(server.keys().public_key, entropy));
    client.hello();
    return client.request(Query{"johndoe@example.com", kBitcoin});
  };
  EXPECT_TRUE(std::holds_alternative<PermFail>(ask()));
  store_save(harness::sample_store(), store_path);
  EXPECT_TRUE(server.server().reload_store());
  EXPECT_EQ(ask(), ProtocolMessage(Ok{B("1NS17iag9jJgTHD1VXjvLCEnZuQ3rJDE9L")}));
  std::ofstream(store_path, std::ios::trunc) << "garbage";
  EXPECT_FALSE(server.server().reload_store());
  EXPECT_EQ(ask(), ProtocolMessage(Ok{B("1NS17iag9jJgTHD1VXjvLCEnZuQ3rJDE9L")}));
}

TEST(Server, BindConflictIsReported)
{
  harness::ServerThread first(fixed_server_keys(), {});
  ServerConfig config;
  config.listen_address = "127.0.0.1";
  config.port = first.port();
  Server second(config, fixed_server_keys(), std::make_shared<SharedStore>(MappingStore{}));
  EXPECT_ERRC(second.bind(), Errc::BindError);
}
