#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scap {

enum class Errc {
  // codec
  MalformedNetstring,
  InvalidCharacter,
  NonZeroPadding,
  UnknownMessageType,
  DirectionMismatch,
  InvalidExtensionName,
  EmptyExtensionName,
  NameTooLong,
  InvalidUtf8,
  MalformedMessage,
  // identity
  NoAtSymbol,
  LocalTooLong,
  InvalidDomain,
  UnknownAlias,
  InvalidServiceId,
  // session
  EntropyUnavailable,
  WeakPublicKey,
  HandshakeIncomplete,
  CounterExhausted,
  AuthenticationFailure,
  StaleServerHalf,
  ReplayedClientHalf,
  ReplayedServerHalf,
  FirstMessageNotHello,
  TruncatedFrame,
  FrameTooLarge,
  MismatchedClientHalf,
  NoClientMessageYet,
  OutOfSequence,
  SessionClosed,
  // discovery
  LabelTooShort,
  UnsupportedVersion,
  BadKeyLength,
  KeyTopBitSet,
  NoServersAvailable,
  DnsFailure,
  NoSrvRecords,
  SecurityPolicyViolation,
  AliasChainTooLong,
  // server / store
  MalformedStoreFile,
  DuplicateKey,
  IoError,
  ConfigError,
  BindError,
  // transport and client
  ConnectFailed,
  Timeout,
  ConnectionClosed,
  AllServersUnreachable,
  Refused,
  RetryLater,
  ProtocolViolation,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& detail)
    : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code)
  {}
  explicit Error(Errc code) : std::runtime_error(std::string(errc_name(code))), code_(code) {}

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& detail) { throw Error(code, detail); }

} // namespace scap
