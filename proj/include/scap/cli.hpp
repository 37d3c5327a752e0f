#pragma once

#include "scap/discovery.hpp"
#include "scap/net.hpp"
#include "scap/session.hpp"

#include <iosfwd>

namespace scap {

/// Exit codes of the `scap` tool.
enum class ExitCode : int {
  Success = 0,
  Usage = 1,
  Refused = 2,
  TemporaryFailure = 3,
  SecurityPolicy = 4,
};

/// Collaborators for `scap_cli_main`. Null pointers select the real
/// implementations (libresolv, TCP, system entropy).
struct CliEnvironment {
  DnsClient* dns = nullptr;
  Dialer* dialer = nullptr;
  EntropySource* entropy = nullptr;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

int scap_cli_main(int argc, const char* const* argv, const CliEnvironment& env = {});

/// Runs the daemon until SIGINT or SIGTERM; SIGHUP reloads the store.
/// Exit codes: 0 clean shutdown, 1 config error, 2 bind error.
int scapd_main(int argc, const char* const* argv);

} // namespace scap
