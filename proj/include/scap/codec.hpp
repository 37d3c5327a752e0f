#pragma once

#include "scap/bytes.hpp"

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace scap {

// ---------------------------------------------------------------------------
// Netstrings: `[len]:[payload],` with a canonical (minimal) decimal length.
// ---------------------------------------------------------------------------

/// Declared lengths above this are rejected by the decoder.
inline constexpr std::size_t kMaxNetstringLength = 1'048'576;

Bytes netstring_encode(ByteView payload);
inline Bytes netstring_encode(std::string_view payload) { return netstring_encode(as_bytes(payload)); }

struct NetstringView {
  ByteView payload;
  std::size_t consumed = 0;
};

/// Decodes the netstring at the start of `input`. Trailing bytes are left
/// alone, so catenated netstrings are read by advancing `consumed` bytes and
/// calling again. The returned payload aliases `input`.
NetstringView netstring_decode(ByteView input, std::size_t max_length = kMaxNetstringLength);

// ---------------------------------------------------------------------------
// DNSCurve base-32: alphabet 0-9 b-d f-h j-n p-z, 5-bit groups taken
// least-significant bit first.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kBase32Alphabet = "0123456789bcdfghjklmnpqrstuvwxyz";

std::string base32_encode(ByteView data);

/// Decodes floor(5*n/8) bytes. Leftover bits must be zero (NonZeroPadding).
Bytes base32_decode(std::string_view text);

/// Decodes into exactly `size` bytes. The final byte may be partially
/// covered by the input, in which case its missing high bits are zero; this
/// is how a 51-character label carries a 32-byte key. Any input bit beyond
/// `size` bytes must be zero, and the input may not fall a whole byte short.
Bytes base32_decode_fixed(std::string_view text, std::size_t size);

// ---------------------------------------------------------------------------
// Protocol messages carried inside cryptographic boxes.
// ---------------------------------------------------------------------------

struct ClientHello {
  friend bool operator==(const ClientHello&, const ClientHello&) = default;
};
struct Query {
  std::string address;
  std::string service_id;
  friend bool operator==(const Query&, const Query&) = default;
};
/// `E`: reserved for future standard extensions.
struct Reserved {
  Bytes body;
  friend bool operator==(const Reserved&, const Reserved&) = default;
};
/// `X`: proprietary extension message. `name` excludes the leading `X`.
struct NonStandard {
  std::string name;
  Bytes data;
  friend bool operator==(const NonStandard&, const NonStandard&) = default;
};
struct Ok {
  Bytes payload;
  friend bool operator==(const Ok&, const Ok&) = default;
};
struct TempFail {
  std::string description;
  friend bool operator==(const TempFail&, const TempFail&) = default;
};
struct PermFail {
  std::string description;
  friend bool operator==(const PermFail&, const PermFail&) = default;
};

using ProtocolMessage = std::variant<ClientHello, Query, Reserved, NonStandard, Ok, TempFail, PermFail>;

enum class Direction { ClientToServer, ServerToClient };

Direction direction_of(const ProtocolMessage& msg) noexcept;
char type_byte(const ProtocolMessage& msg) noexcept;

inline constexpr std::size_t kMaxExtensionNameLength = 31;

/// Type byte + body, wrapped in one outer netstring (the box plaintext).
Bytes message_encode(const ProtocolMessage& msg);

ProtocolMessage message_decode(ByteView plaintext, Direction direction);

struct ExtensionName {
  std::string name;
  bool proprietary = false;
  friend bool operator==(const ExtensionName&, const ExtensionName&) = default;
};

/// Parses the payload of an `O` reply to `H`. Order is preserved.
std::vector<ExtensionName> parse_extension_list(ByteView payload);

/// Inverse of parse_extension_list; validates every name.
Bytes format_extension_list(const std::vector<std::string>& names);

/// Short single-line rendering for logs, e.g. `Q(johndoe@example.com, 0000...)`.
std::string describe(const ProtocolMessage& msg);

} // namespace scap
