#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scap {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s) noexcept
{
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline Bytes to_bytes(std::string_view s) { return {s.begin(), s.end()}; }

inline std::string_view as_text(ByteView b) noexcept
{
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

inline std::string to_string(ByteView b) { return std::string(as_text(b)); }

inline void append(Bytes& out, ByteView b) { out.insert(out.end(), b.begin(), b.end()); }
inline void append(Bytes& out, std::string_view s) { append(out, as_bytes(s)); }

/// Lowercase base-16.
std::string hex_encode(ByteView data);

/// Accepts upper or lower case; nullopt on odd length or non-hex input.
std::optional<Bytes> hex_decode(std::string_view text);

/// True when the bytes form well-formed UTF-8 (no overlongs, surrogates or
/// code points above U+10FFFF).
bool is_valid_utf8(ByteView data) noexcept;
inline bool is_valid_utf8(std::string_view s) noexcept { return is_valid_utf8(as_bytes(s)); }

} // namespace scap
