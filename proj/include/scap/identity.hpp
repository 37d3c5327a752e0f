#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scap {

inline constexpr std::size_t kMaxLocalPartLength = 1023;
inline constexpr std::size_t kMaxServiceIdLength = 255;

/// `local@domain`. The local part is kept byte-for-byte; the domain is kept
/// both as typed and in its IDNA ASCII form (lowercase, no trailing dot).
struct CryptoAddress {
  std::string local;
  std::string domain_unicode;
  std::string domain_ascii;

  /// Local parts compare exactly, domains compare in ASCII form.
  friend bool operator==(const CryptoAddress& a, const CryptoAddress& b) noexcept
  {
    return a.local == b.local && a.domain_ascii == b.domain_ascii;
  }
};

/// Splits at the last `@`. Throws NoAtSymbol, LocalTooLong, InvalidDomain or
/// InvalidUtf8.
CryptoAddress parse_address(std::string_view text);

enum class DomainForm { Unicode, Ascii };

std::string format_address(const CryptoAddress& address, DomainForm form);

/// IDNA ToASCII (UTS #46, nontransitional, STD3 rules) followed by FQDN
/// length checks. Throws InvalidDomain.
std::string domain_to_ascii(std::string_view domain);

class ServiceId {
public:
  /// Any nonempty UTF-8 token of at most 255 bytes. Throws InvalidServiceId.
  static ServiceId from_token(std::string_view token);

  const std::string& token() const noexcept { return token_; }

  friend bool operator==(const ServiceId&, const ServiceId&) = default;
  friend auto operator<=>(const ServiceId&, const ServiceId&) = default;

private:
  explicit ServiceId(std::string token) : token_(std::move(token)) {}
  std::string token_;
};

struct BuiltinService {
  std::string_view alias;
  std::string_view genesis_hash;
};

/// Cryptocurrencies named by the hash of their genesis block.
std::span<const BuiltinService> builtin_services() noexcept;

/// Looks up bitcoin/litecoin/dogecoin (case-insensitive) or passes a raw
/// 64-digit hex token through, lowercased. Throws UnknownAlias.
ServiceId builtin_service_id(std::string_view alias);

enum class SpoofKind { ControlChar, FormatChar, BidiOverride, NotNfcNormalized };

std::string_view spoof_kind_name(SpoofKind kind) noexcept;

struct SpoofWarning {
  SpoofKind kind;
  std::size_t position = 0; // byte offset into the inspected text
  std::string detail;
};

struct SpoofReport {
  std::vector<SpoofWarning> warnings;

  bool clean() const noexcept { return warnings.empty(); }
  bool has(SpoofKind kind) const noexcept;
};

/// Flags control and format characters and text that is not in NFC. The
/// report is advisory only. Throws InvalidUtf8.
SpoofReport inspect_spoofing(std::string_view text);

/// Replaces control, format and line/paragraph separator characters with
/// `\u{XXXX}` and invalid bytes with `\x{XX}` so the text is safe to print.
std::string escape_for_display(std::string_view text);

} // namespace scap
