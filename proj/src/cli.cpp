#include "scap/cli.hpp"

#include "scap/client.hpp"
#include "scap/dns_resolver.hpp"
#include "scap/server.hpp"
#include "scap/store.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <iostream>
#include <pthread.h>
#include <thread>

namespace scap {

namespace {

void log_to_stderr(spdlog::level::level_enum level)
{
  auto logger = spdlog::get("scap");
  if (!logger) {
    logger = spdlog::stderr_color_mt("scap");
  }
  spdlog::set_default_logger(logger);
  spdlog::set_level(level);
}

int parse_or_report(CLI::App& app, int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
  try {
    app.parse(argc, argv);
    return -1;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << app.get_name() << ": " << e.what() << "\n";
    return static_cast<int>(ExitCode::Usage);
  }
}

ExitCode exit_code_for(const ResolveError& e)
{
  if (e.code() == Errc::Refused) {
    return ExitCode::Refused;
  }
  if (e.code() == Errc::SecurityPolicyViolation) {
    return ExitCode::SecurityPolicy;
  }
  if (e.stage() == ResolveStage::Address) {
    return ExitCode::Usage;
  }
  return ExitCode::TemporaryFailure;
}

void print_warnings(const std::string& address, const SpoofReport& report, std::ostream& err)
{
  if (report.clean()) {
    return;
  }
  err << "warning: address " << escape_for_display(address) << " contains suspicious characters\n";
  for (const auto& w : report.warnings) {
    err << "warning: " << spoof_kind_name(w.kind) << " at byte " << w.position << ": " << escape_for_display(w.detail)
        << "\n";
  }
}

nlohmann::json result_json(const std::string& address, const ServiceId& service, const ResolveResult& result)
{
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& w : result.spoof_report.warnings) {
    warnings.push_back({{"kind", spoof_kind_name(w.kind)}, {"position", w.position}, {"detail", w.detail}});
  }
  return {
    {"address", address},
    {"service", service.token()},
    {"data_base16", hex_encode(result.target_data)},
    {"server", result.server_used.fqdn + ":" + std::to_string(result.server_used.port)},
    {"warnings", warnings},
    {"dnssec", result.dnssec_validated},
  };
}

struct ResolveOptions {
  std::string address;
  std::string service = "bitcoin";
  bool json = false;
  std::string server;
  bool insecure_dns = false;
  double timeout = 10.0;
  std::string resolver;
};

int run_resolve(const ResolveOptions& opts, const CliEnvironment& env, std::ostream& out, std::ostream& err)
{
  std::optional<ResolveRequest> request;
  try {
    std::optional<ServerOverride> server;
    if (!opts.server.empty()) {
      server = parse_server_override(opts.server);
    }
    request = ResolveRequest{parse_address(opts.address), builtin_service_id(opts.service),
                             opts.insecure_dns ? SecurityPolicy::Insecure : SecurityPolicy::RequireDnssec, server,
                             Millis(static_cast<std::int64_t>(opts.timeout * 1000))};
  } catch (const Error& e) {
    err << "scap: " << escape_for_display(e.what()) << "\n";
    return static_cast<int>(ExitCode::Usage);
  }

  std::unique_ptr<DnsClient> own_dns;
  std::unique_ptr<Dialer> own_dialer;
  std::unique_ptr<EntropySource> own_entropy;
  try {
    if (env.dns == nullptr) {
      auto options = ResolvDnsClient::options_from_env();
      if (!opts.resolver.empty()) {
        options.nameserver = opts.resolver;
      }
      own_dns = std::make_unique<ResolvDnsClient>(options);
    }
  } catch (const Error& e) {
    err << "scap: " << escape_for_display(e.what()) << "\n";
    return static_cast<int>(ExitCode::Usage);
  }
  if (env.dialer == nullptr) {
    own_dialer = std::make_unique<TcpDialer>();
  }
  if (env.entropy == nullptr) {
    own_entropy = std::make_unique<SystemEntropy>();
  }
  auto& dns = env.dns ? *env.dns : *own_dns;
  auto& dialer = env.dialer ? *env.dialer : *own_dialer;
  auto& entropy = env.entropy ? *env.entropy : *own_entropy;

  print_warnings(opts.address, inspect_spoofing(opts.address), err);
  try {
    auto result = resolve(*request, dns, dialer, entropy);
    if (opts.json) {
      out << result_json(format_address(request->address, DomainForm::Unicode), request->service, result)
               .dump(-1, ' ', true, nlohmann::json::error_handler_t::replace)
          << "\n";
    } else {
      out.write(reinterpret_cast<const char*>(result.target_data.data()),
                static_cast<std::streamsize>(result.target_data.size()));
      out << "\n";
    }
    out.flush();
    return static_cast<int>(ExitCode::Success);
  } catch (const ResolveError& e) {
    err << "scap: " << escape_for_display(e.what()) << "\n";
    return static_cast<int>(exit_code_for(e));
  }
}

} // namespace

int scap_cli_main(int argc, const char* const* argv, const CliEnvironment& env)
{
  auto& out = env.out ? *env.out : std::cout;
  auto& err = env.err ? *env.err : std::cerr;

  CLI::App app{"Resolve cryptoaddresses over SCAP", "scap"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log server selection and failures");

  ResolveOptions ropts;
  auto* resolve_cmd = app.add_subcommand("resolve", "Look up the data behind a cryptoaddress");
  resolve_cmd->add_option("address", ropts.address, "Cryptoaddress, local@domain")->required();
  resolve_cmd->add_option("-s,--service", ropts.service, "Service alias (bitcoin, litecoin, dogecoin) or 64-hex id")
    ->capture_default_str();
  resolve_cmd->add_flag("--json", ropts.json, "Print a JSON object instead of raw data");
  resolve_cmd->add_option("--server", ropts.server, "Skip DNS and use host:port:pubkeyhex");
  resolve_cmd->add_flag("--insecure-dns", ropts.insecure_dns, "Accept DNS answers without DNSSEC validation");
  resolve_cmd->add_option("--timeout", ropts.timeout, "Seconds per connection attempt")
    ->check(CLI::PositiveNumber)
    ->capture_default_str();
  resolve_cmd->add_option("--resolver", ropts.resolver, "DNS server as IPv4 address[:port]");

  std::string key_hex;
  auto* label_cmd = app.add_subcommand("label", "Print the host label for a server public key");
  label_cmd->add_option("pubkey", key_hex, "Public key, 64 hex digits")->required();

  std::string label_text;
  auto* unlabel_cmd = app.add_subcommand("unlabel", "Decode the version and public key from a host label or name");
  unlabel_cmd->add_option("label", label_text, "Label or fully qualified server name")->required();

  std::string key_path;
  auto* keygen_cmd = app.add_subcommand("keygen", "Create a server key file");
  keygen_cmd->add_option("-o,--out", key_path, "Key file to create (must not exist)")->required();

  if (int code = parse_or_report(app, argc, argv, out, err); code >= 0) {
    return code;
  }
  log_to_stderr(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (*resolve_cmd) {
      return run_resolve(ropts, env, out, err);
    }
    if (*label_cmd) {
      auto key = hex_decode(key_hex);
      if (!key || key->size() != kKeySize) {
        err << "scap: public key must be 64 hex digits\n";
        return static_cast<int>(ExitCode::Usage);
      }
      PublicKey pk{};
      std::copy(key->begin(), key->end(), pk.begin());
      out << fqdn_label_for_key(pk) << "\n";
      return 0;
    }
    if (*unlabel_cmd) {
      auto decoded = extract_key_from_fqdn(label_text);
      out << "version " << decoded.version << "\n" << "key " << hex_encode(decoded.public_key) << "\n";
      return 0;
    }
    if (*keygen_cmd) {
      std::unique_ptr<EntropySource> own;
      if (env.entropy == nullptr) {
        own = std::make_unique<SystemEntropy>();
      }
      auto generated = keygen_to_file(key_path, env.entropy ? *env.entropy : *own);
      out << "public key " << generated.public_hex << "\n" << "label " << generated.label << "\n";
      return 0;
    }
  } catch (const Error& e) {
    err << "scap: " << escape_for_display(e.what()) << "\n";
    return static_cast<int>(ExitCode::Usage);
  }
  return static_cast<int>(ExitCode::Usage);
}

// ---------------------------------------------------------------------------

int scapd_main(int argc, const char* const* argv)
{
  CLI::App app{"SCAP cryptoaddress server", "scapd"};
  std::string config_path;
  std::optional<std::string> listen;
  std::optional<unsigned> port;
  std::optional<std::string> key_file;
  std::optional<std::string> store_file;
  std::string log_level = "info";
  app.add_option("-c,--config", config_path, "key = value configuration file");
  app.add_option("--listen", listen, "Address to bind");
  app.add_option("--port", port, "TCP port; 0 picks a free one")->check(CLI::Range(0, 65535));
  app.add_option("--key-file", key_file, "Secret key file (64 hex digits)");
  app.add_option("--store-file", store_file, "Mapping store file");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();
  if (int code = parse_or_report(app, argc, argv, std::cout, std::cerr); code >= 0) {
    return code;
  }
  log_to_stderr(spdlog::level::from_str(log_level));

  ServerConfig config;
  KeyPair keys;
  std::shared_ptr<SharedStore> store;
  try {
    if (!config_path.empty()) {
      config = load_config(config_path);
    }
    if (listen) {
      config.listen_address = *listen;
    }
    if (port) {
      config.port = static_cast<std::uint16_t>(*port);
    }
    if (key_file) {
      config.key_file = *key_file;
    }
    if (store_file) {
      config.store_file = *store_file;
    }
    if (config.key_file.empty() || config.store_file.empty()) {
      fail(Errc::ConfigError, "both a key file and a store file are required");
    }
    keys = load_key_file(config.key_file);
    store = std::make_shared<SharedStore>(store_load(config.store_file));
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }

  // Block the signals before any thread starts so only the waiter sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGHUP);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Server server(config, keys, store);
  try {
    server.bind();
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  std::cout << "listening " << config.listen_address << " " << server.port() << std::endl;

  std::thread waiter([&] {
    while (true) {
      int sig = 0;
      if (sigwait(&signals, &sig) != 0) {
        continue;
      }
      if (sig == SIGHUP) {
        server.reload_store();
        continue;
      }
      spdlog::info("signal {} received, shutting down", sig);
      server.stop();
      return;
    }
  });
  server.run();
  waiter.join();
  return 0;
}

} // namespace scap
