#include "scap/codec.hpp"

#include "scap/error.hpp"

#include <array>
#include <charconv>

namespace scap {

namespace {

constexpr std::size_t kMaxLengthDigits = 7; // 1048576 has 7 digits

constexpr std::array<std::int8_t, 128> make_base32_lookup()
{
  std::array<std::int8_t, 128> table{};
  table.fill(-1);
  for (std::size_t i = 0; i < kBase32Alphabet.size(); ++i) {
    table[static_cast<unsigned char>(kBase32Alphabet[i])] = static_cast<std::int8_t>(i);
  }
  return table;
}

constexpr auto kBase32Lookup = make_base32_lookup();

unsigned base32_value(char c, std::size_t pos)
{
  auto u = static_cast<unsigned char>(c);
  if (u >= 128 || kBase32Lookup[u] < 0) {
    fail(Errc::InvalidCharacter, "byte " + std::to_string(u) + " at offset " + std::to_string(pos));
  }
  return static_cast<unsigned>(kBase32Lookup[u]);
}

void require_utf8(std::string_view text, std::string_view what)
{
  if (!is_valid_utf8(text)) {
    fail(Errc::InvalidUtf8, std::string(what));
  }
}

void validate_extension_name(std::string_view name)
{
  if (name.empty()) {
    fail(Errc::InvalidExtensionName, "empty name");
  }
  if (name.size() > kMaxExtensionNameLength) {
    fail(Errc::InvalidExtensionName, "name longer than 31 bytes");
  }
  if (name.find(' ') != std::string_view::npos) {
    fail(Errc::InvalidExtensionName, "name contains a space");
  }
  if (!is_valid_utf8(name)) {
    fail(Errc::InvalidExtensionName, "name is not valid UTF-8");
  }
}

char type_of(Direction dir, char byte)
{
  constexpr std::string_view client_types = "HQEX";
  constexpr std::string_view server_types = "OZD";
  bool from_client = client_types.find(byte) != std::string_view::npos;
  bool from_server = server_types.find(byte) != std::string_view::npos;
  if (!from_client && !from_server) {
    fail(Errc::UnknownMessageType, "type byte " + std::to_string(static_cast<unsigned char>(byte)));
  }
  if ((dir == Direction::ClientToServer) != from_client) {
    fail(Errc::DirectionMismatch, std::string("type '") + byte + "' in the wrong direction");
  }
  return byte;
}

} // namespace

// ---------------------------------------------------------------------------

std::string hex_encode(ByteView data)
{
  constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0f]);
  }
  return out;
}

std::optional<Bytes> hex_decode(std::string_view text)
{
  if (text.size() % 2 != 0) {
    return std::nullopt;
  }
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Bytes out;
  out.reserve(text.size() / 2);
  for (std::size_t i = 0; i < text.size(); i += 2) {
    int hi = nibble(text[i]);
    int lo = nibble(text[i + 1]);
    if (hi < 0 || lo < 0) {
      return std::nullopt;
    }
    out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
  }
  return out;
}

bool is_valid_utf8(ByteView data) noexcept
{
  std::size_t i = 0;
  while (i < data.size()) {
    std::uint8_t b = data[i];
    if (b < 0x80) {
      ++i;
      continue;
    }
    std::size_t extra;
    std::uint32_t cp;
    if ((b & 0xe0) == 0xc0) {
      extra = 1;
      cp = b & 0x1f;
    } else if ((b & 0xf0) == 0xe0) {
      extra = 2;
      cp = b & 0x0f;
    } else if ((b & 0xf8) == 0xf0) {
      extra = 3;
      cp = b & 0x07;
    } else {
      return false;
    }
    if (i + extra >= data.size()) {
      return false;
    }
    for (std::size_t k = 1; k <= extra; ++k) {
      std::uint8_t c = data[i + k];
      if ((c & 0xc0) != 0x80) {
        return false;
      }
      cp = cp << 6 | (c & 0x3f);
    }
    constexpr std::uint32_t min_for_length[] = {0, 0x80, 0x800, 0x10000};
    if (cp < min_for_length[extra] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) {
      return false;
    }
    i += extra + 1;
  }
  return true;
}

// ---------------------------------------------------------------------------

Bytes netstring_encode(ByteView payload)
{
  auto len = std::to_string(payload.size());
  Bytes out;
  out.reserve(payload.size() + len.size() + 2);
  append(out, len);
  out.push_back(':');
  append(out, payload);
  out.push_back(',');
  return out;
}

NetstringView netstring_decode(ByteView input, std::size_t max_length)
{
  std::size_t digits = 0;
  while (digits < input.size() && input[digits] >= '0' && input[digits] <= '9') {
    if (++digits > kMaxLengthDigits) {
      fail(Errc::MalformedNetstring, "length field too long");
    }
  }
  if (digits == 0) {
    fail(Errc::MalformedNetstring, input.empty() ? "empty input" : "length is not a decimal number");
  }
  if (digits > 1 && input[0] == '0') {
    fail(Errc::MalformedNetstring, "length has a leading zero");
  }
  if (digits == input.size() || input[digits] != ':') {
    fail(Errc::MalformedNetstring, "missing ':' after length");
  }
  std::size_t length = 0;
  auto text = as_text(input.first(digits));
  std::from_chars(text.data(), text.data() + text.size(), length);
  if (length > max_length) {
    fail(Errc::MalformedNetstring, "declared length " + std::to_string(length) + " exceeds cap");
  }
  std::size_t start = digits + 1;
  if (input.size() - start < length + 1) {
    fail(Errc::MalformedNetstring, "payload shorter than declared length");
  }
  if (input[start + length] != ',') {
    fail(Errc::MalformedNetstring, "missing ',' terminator");
  }
  return {input.subspan(start, length), start + length + 1};
}

// ---------------------------------------------------------------------------

std::string base32_encode(ByteView data)
{
  std::string out;
  out.reserve((data.size() * 8 + 4) / 5);
  std::uint32_t acc = 0;
  unsigned bits = 0;
  for (auto b : data) {
    acc |= static_cast<std::uint32_t>(b) << bits;
    bits += 8;
    while (bits >= 5) {
      out.push_back(kBase32Alphabet[acc & 31]);
      acc >>= 5;
      bits -= 5;
    }
  }
  if (bits > 0) {
    out.push_back(kBase32Alphabet[acc & 31]);
  }
  return out;
}

Bytes base32_decode(std::string_view text)
{
  Bytes out;
  out.reserve(text.size() * 5 / 8);
  std::uint32_t acc = 0;
  unsigned bits = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    acc |= base32_value(text[i], i) << bits;
    bits += 5;
    if (bits >= 8) {
      out.push_back(static_cast<std::uint8_t>(acc & 0xff));
      acc >>= 8;
      bits -= 8;
    }
  }
  if (acc != 0) {
    fail(Errc::NonZeroPadding, "trailing bits are not zero");
  }
  return out;
}

Bytes base32_decode_fixed(std::string_view text, std::size_t size)
{
  std::size_t total_bits = text.size() * 5;
  if (size == 0 ? !text.empty() : (total_bits <= (size - 1) * 8 || total_bits >= size * 8 + 5)) {
    fail(Errc::MalformedMessage,
         std::to_string(text.size()) + " characters cannot encode exactly " + std::to_string(size) + " bytes");
  }
  Bytes out;
  out.reserve(size);
  std::uint32_t acc = 0;
  unsigned bits = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    acc |= base32_value(text[i], i) << bits;
    bits += 5;
    if (bits >= 8 && out.size() < size) {
      out.push_back(static_cast<std::uint8_t>(acc & 0xff));
      acc >>= 8;
      bits -= 8;
    }
  }
  if (out.size() < size) {
    out.push_back(static_cast<std::uint8_t>(acc & 0xff));
    acc >>= 8;
  }
  if (acc != 0) {
    fail(Errc::NonZeroPadding, "bits beyond the fixed width are not zero");
  }
  return out;
}

// ---------------------------------------------------------------------------

Direction direction_of(const ProtocolMessage& msg) noexcept
{
  return std::holds_alternative<Ok>(msg) || std::holds_alternative<TempFail>(msg) ||
                 std::holds_alternative<PermFail>(msg)
           ? Direction::ServerToClient
           : Direction::ClientToServer;
}

char type_byte(const ProtocolMessage& msg) noexcept
{
  constexpr char types[] = {'H', 'Q', 'E', 'X', 'O', 'Z', 'D'};
  return types[msg.index()];
}

Bytes message_encode(const ProtocolMessage& msg)
{
  Bytes body;
  body.push_back(static_cast<std::uint8_t>(type_byte(msg)));
  std::visit(
    [&](const auto& m) {
      using T = std::decay_t<decltype(m)>;
      if constexpr (std::is_same_v<T, Query>) {
        append(body, netstring_encode(m.address));
        append(body, netstring_encode(m.service_id));
      } else if constexpr (std::is_same_v<T, Reserved>) {
        append(body, m.body);
      } else if constexpr (std::is_same_v<T, NonStandard>) {
        validate_extension_name(m.name);
        append(body, m.name);
        body.push_back(' ');
        append(body, m.data);
      } else if constexpr (std::is_same_v<T, Ok>) {
        append(body, m.payload);
      } else if constexpr (std::is_same_v<T, TempFail> || std::is_same_v<T, PermFail>) {
        require_utf8(m.description, "failure description");
        append(body, m.description);
      }
    },
    msg);
  return netstring_encode(body);
}

ProtocolMessage message_decode(ByteView plaintext, Direction direction)
{
  auto outer = netstring_decode(plaintext);
  if (outer.consumed != plaintext.size()) {
    fail(Errc::MalformedNetstring, "trailing bytes after message netstring");
  }
  auto body = outer.payload;
  if (body.empty()) {
    fail(Errc::UnknownMessageType, "empty message");
  }
  auto rest = body.subspan(1);
  switch (type_of(direction, static_cast<char>(body[0]))) {
    case 'H':
      if (!rest.empty()) {
        fail(Errc::MalformedMessage, "hello carries extra bytes");
      }
      return ClientHello{};
    case 'Q': {
      auto address = netstring_decode(rest);
      auto service = netstring_decode(rest.subspan(address.consumed));
      if (address.consumed + service.consumed != rest.size()) {
        fail(Errc::MalformedMessage, "query has bytes after the service identifier");
      }
      return Query{to_string(address.payload), to_string(service.payload)};
    }
    case 'E':
      return Reserved{Bytes(rest.begin(), rest.end())};
    case 'X': {
      auto text = as_text(rest);
      auto space = text.find(' ');
      if (space == std::string_view::npos) {
        fail(Errc::MalformedMessage, "extension message without a space separator");
      }
      auto name = text.substr(0, space);
      validate_extension_name(name);
      auto data = rest.subspan(space + 1);
      return NonStandard{std::string(name), Bytes(data.begin(), data.end())};
    }
    case 'O':
      return Ok{Bytes(rest.begin(), rest.end())};
    case 'Z':
      require_utf8(as_text(rest), "temporary failure description");
      return TempFail{to_string(rest)};
    default: // 'D'
      require_utf8(as_text(rest), "permanent failure description");
      return PermFail{to_string(rest)};
  }
}

std::vector<ExtensionName> parse_extension_list(ByteView payload)
{
  std::vector<ExtensionName> names;
  if (payload.empty()) {
    return names;
  }
  auto text = as_text(payload);
  std::size_t start = 0;
  while (true) {
    auto end = text.find(' ', start);
    auto name = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    if (name.empty() || name == "X") {
      fail(Errc::EmptyExtensionName, "at offset " + std::to_string(start));
    }
    if (name.size() > kMaxExtensionNameLength) {
      fail(Errc::NameTooLong, std::string(name.substr(0, 8)) + "...");
    }
    if (!is_valid_utf8(name)) {
      fail(Errc::InvalidUtf8, "extension name at offset " + std::to_string(start));
    }
    names.push_back({std::string(name), name.front() == 'X'});
    if (end == std::string_view::npos) {
      break;
    }
    start = end + 1;
  }
  return names;
}

Bytes format_extension_list(const std::vector<std::string>& names)
{
  Bytes out;
  for (const auto& name : names) {
    if (!out.empty()) {
      out.push_back(' ');
    }
    append(out, name);
  }
  parse_extension_list(out);
  return out;
}

std::string describe(const ProtocolMessage& msg)
{
  auto clip = [](std::string_view s) {
    return s.size() > 24 ? std::string(s.substr(0, 21)) + "..." : std::string(s);
  };
  return std::visit(
    [&](const auto& m) -> std::string {
      using T = std::decay_t<decltype(m)>;
      if constexpr (std::is_same_v<T, ClientHello>) {
        return "H";
      } else if constexpr (std::is_same_v<T, Query>) {
        return "Q(" + clip(m.address) + ", " + clip(m.service_id) + ")";
      } else if constexpr (std::is_same_v<T, Reserved>) {
        return "E(" + std::to_string(m.body.size()) + " bytes)";
      } else if constexpr (std::is_same_v<T, NonStandard>) {
        return "X(" + m.name + ", " + std::to_string(m.data.size()) + " bytes)";
      } else if constexpr (std::is_same_v<T, Ok>) {
        return "O(" + std::to_string(m.payload.size()) + " bytes)";
      } else if constexpr (std::is_same_v<T, TempFail>) {
        return "Z(" + clip(m.description) + ")";
      } else {
        return "D(" + clip(m.description) + ")";
      }
    },
    msg);
}

// ---------------------------------------------------------------------------

std::string_view errc_name(Errc code) noexcept
{
  switch (code) {
    case Errc::MalformedNetstring: return "MalformedNetstring";
    case Errc::InvalidCharacter: return "InvalidCharacter";
    case Errc::NonZeroPadding: return "NonZeroPadding";
    case Errc::UnknownMessageType: return "UnknownMessageType";
    case Errc::DirectionMismatch: return "DirectionMismatch";
    case Errc::InvalidExtensionName: return "InvalidExtensionName";
    case Errc::EmptyExtensionName: return "EmptyExtensionName";
    case Errc::NameTooLong: return "NameTooLong";
    case Errc::InvalidUtf8: return "InvalidUtf8";
    case Errc::MalformedMessage: return "MalformedMessage";
    case Errc::NoAtSymbol: return "NoAtSymbol";
    case Errc::LocalTooLong: return "LocalTooLong";
    case Errc::InvalidDomain: return "InvalidDomain";
    case Errc::UnknownAlias: return "UnknownAlias";
    case Errc::InvalidServiceId: return "InvalidServiceId";
    case Errc::EntropyUnavailable: return "EntropyUnavailable";
    case Errc::WeakPublicKey: return "WeakPublicKey";
    case Errc::HandshakeIncomplete: return "HandshakeIncomplete";
    case Errc::CounterExhausted: return "CounterExhausted";
    case Errc::AuthenticationFailure: return "AuthenticationFailure";
    case Errc::StaleServerHalf: return "StaleServerHalf";
    case Errc::ReplayedClientHalf: return "ReplayedClientHalf";
    case Errc::ReplayedServerHalf: return "ReplayedServerHalf";
    case Errc::FirstMessageNotHello: return "FirstMessageNotHello";
    case Errc::TruncatedFrame: return "TruncatedFrame";
    case Errc::FrameTooLarge: return "FrameTooLarge";
    case Errc::MismatchedClientHalf: return "MismatchedClientHalf";
    case Errc::NoClientMessageYet: return "NoClientMessageYet";
    case Errc::OutOfSequence: return "OutOfSequence";
    case Errc::SessionClosed: return "SessionClosed";
    case Errc::LabelTooShort: return "LabelTooShort";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::BadKeyLength: return "BadKeyLength";
    case Errc::KeyTopBitSet: return "KeyTopBitSet";
    case Errc::NoServersAvailable: return "NoServersAvailable";
    case Errc::DnsFailure: return "DnsFailure";
    case Errc::NoSrvRecords: return "NoSrvRecords";
    case Errc::SecurityPolicyViolation: return "SecurityPolicyViolation";
    case Errc::AliasChainTooLong: return "AliasChainTooLong";
    case Errc::MalformedStoreFile: return "MalformedStoreFile";
    case Errc::DuplicateKey: return "DuplicateKey";
    case Errc::IoError: return "IoError";
    case Errc::ConfigError: return "ConfigError";
    case Errc::BindError: return "BindError";
    case Errc::ConnectFailed: return "ConnectFailed";
    case Errc::Timeout: return "Timeout";
    case Errc::ConnectionClosed: return "ConnectionClosed";
    case Errc::AllServersUnreachable: return "AllServersUnreachable";
    case Errc::Refused: return "Refused";
    case Errc::RetryLater: return "RetryLater";
    case Errc::ProtocolViolation: return "ProtocolViolation";
  }
  return "Unknown";
}

} // namespace scap
