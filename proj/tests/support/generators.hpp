#pragma once

// Random inputs for round-trip checks. Deterministic for a given engine.

#include "scap/codec.hpp"
#include "scap/identity.hpp"
#include "scap/store.hpp"

#include <random>
#include <string>

namespace scap::gen {

inline std::size_t below(std::mt19937_64& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

inline Bytes bytes(std::mt19937_64& rng, std::size_t max_len)
{
  Bytes out(below(rng, max_len + 1));
  for (auto& b : out) {
    b = static_cast<std::uint8_t>(rng());
  }
  return out;
}

/// Valid UTF-8 mixing ASCII, Latin, CJK and astral characters.
inline std::string utf8(std::mt19937_64& rng, std::size_t max_chars, bool allow_space = true)
{
  std::string out;
  auto n = below(rng, max_chars + 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t cp;
    switch (below(rng, 4)) {
      case 0: cp = 0x21 + static_cast<std::uint32_t>(below(rng, 0x5e)); break;
      case 1: cp = 0xa0 + static_cast<std::uint32_t>(below(rng, 0x700)); break;
      case 2: cp = 0x4e00 + static_cast<std::uint32_t>(below(rng, 0x5000)); break;
      default: cp = 0x1f300 + static_cast<std::uint32_t>(below(rng, 0x300)); break;
    }
    if (allow_space && below(rng, 8) == 0) {
      cp = ' ';
    }
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xc0 | cp >> 6);
      out += static_cast<char>(0x80 | (cp & 0x3f));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xe0 | cp >> 12);
      out += static_cast<char>(0x80 | (cp >> 6 & 0x3f));
      out += static_cast<char>(0x80 | (cp & 0x3f));
    } else {
      out += static_cast<char>(0xf0 | cp >> 18);
      out += static_cast<char>(0x80 | (cp >> 12 & 0x3f));
      out += static_cast<char>(0x80 | (cp >> 6 & 0x3f));
      out += static_cast<char>(0x80 | (cp & 0x3f));
    }
  }
  return out;
}

inline std::string extension_name(std::mt19937_64& rng)
{
  while (true) {
    auto name = utf8(rng, 10, false);
    if (!name.empty() && name.size() <= kMaxExtensionNameLength) {
      return name;
    }
  }
}

inline ProtocolMessage client_message(std::mt19937_64& rng)
{
  switch (below(rng, 4)) {
    case 0: return ClientHello{};
    case 1: return Query{utf8(rng, 40), utf8(rng, 70)};
    case 2: return Reserved{bytes(rng, 64)};
    default: return NonStandard{extension_name(rng), bytes(rng, 64)};
  }
}

inline ProtocolMessage server_message(std::mt19937_64& rng)
{
  switch (below(rng, 3)) {
    case 0: return Ok{bytes(rng, 128)};
    case 1: return TempFail{utf8(rng, 30)};
    default: return PermFail{utf8(rng, 30)};
  }
}

inline std::string domain(std::mt19937_64& rng)
{
  static constexpr std::string_view alnum = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::string out;
  auto labels = 1 + below(rng, 3);
  for (std::size_t l = 0; l < labels; ++l) {
    if (l > 0) {
      out += '.';
    }
    auto len = 1 + below(rng, 12);
    for (std::size_t i = 0; i < len; ++i) {
      out += alnum[below(rng, alnum.size())];
    }
  }
  return out;
}

inline MappingStore store(std::mt19937_64& rng, std::size_t max_records)
{
  MappingStore s;
  auto n = below(rng, max_records + 1);
  for (std::size_t i = 0; i < n; ++i) {
    // The index keeps keys distinct.
    auto address = utf8(rng, 12) + std::to_string(i) + "@" + domain(rng);
    auto service = builtin_services()[below(rng, builtin_services().size())].genesis_hash;
    s.insert({address, ServiceId::from_token(service), bytes(rng, 80)});
  }
  return s;
}

} // namespace scap::gen
