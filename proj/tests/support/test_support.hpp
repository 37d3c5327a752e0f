#pragma once

#include "scap/bytes.hpp"
#include "scap/error.hpp"

#include <gtest/gtest.h>

#include <stdlib.h>

#include <filesystem>
#include <ostream>
#include <random>

namespace scap {

inline void PrintTo(Errc code, std::ostream* os) { *os << errc_name(code); }

} // namespace scap

#define EXPECT_ERRC(statement, expected)                                                                              \
  do {                                                                                                                \
    try {                                                                                                             \
      statement;                                                                                                      \
      ADD_FAILURE() << "expected " << ::scap::errc_name(expected) << ", nothing was thrown";                         \
    } catch (const ::scap::Error& scap_error_) {                                                                      \
      EXPECT_EQ(scap_error_.code(), expected) << scap_error_.what();                                                  \
    }                                                                                                                 \
  } while (0)

namespace scap::test {

inline Bytes unhex(std::string_view text)
{
  auto bytes = hex_decode(text);
  if (!bytes) {
    throw std::invalid_argument("bad hex in test");
  }
  return *bytes;
}

template <std::size_t N>
std::array<std::uint8_t, N> unhex_array(std::string_view text)
{
  auto bytes = unhex(text);
  std::array<std::uint8_t, N> out{};
  std::copy_n(bytes.begin(), N, out.begin());
  return out;
}

inline Bytes random_bytes(std::mt19937_64& rng, std::size_t max_len)
{
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  Bytes out(len(rng));
  for (auto& b : out) {
    b = static_cast<std::uint8_t>(rng());
  }
  return out;
}

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  TempDir()
  {
    auto pattern = (std::filesystem::temp_directory_path() / "scap-test-XXXXXX").string();
    if (::mkdtemp(pattern.data()) == nullptr) {
      throw std::runtime_error("mkdtemp failed");
    }
    path_ = pattern;
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }

private:
  std::filesystem::path path_;
};

} // namespace scap::test
