#include "scap/identity.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace scap;

TEST(Address, SplitsAtLastAt)
{
  auto a = parse_address("a@b@example.com");
  EXPECT_EQ(a.local, "a@b");
  EXPECT_EQ(a.domain_ascii, "example.com");
}

TEST(Address, EmptyLocalPartIsAllowed)
{
  auto a = parse_address("@example.com");
  EXPECT_EQ(a.local, "");
  EXPECT_EQ(format_address(a, DomainForm::Ascii), "@example.com");
}

TEST(Address, LocalPartLimitIs1023Bytes)
{
  EXPECT_NO_THROW(parse_address(std::string(1023, 'x') + "@example.com"));
  EXPECT_ERRC(parse_address(std::string(1024, 'x') + "@example.com"), Errc::LocalTooLong);
  // The limit counts bytes, not characters: 512 two-byte characters is 1024.
  std::string umlauts;
  for (int i = 0; i < 512; ++i) {
    umlauts += "\xc3\xa4";
  }
  EXPECT_ERRC(parse_address(umlauts + "@example.com"), Errc::LocalTooLong);
}

TEST(Address, RejectsMissingAtAndBadDomains)
{
  EXPECT_ERRC(parse_address("johndoe.example.com"), Errc::NoAtSymbol);
  EXPECT_ERRC(parse_address("johndoe@"), Errc::InvalidDomain);
  EXPECT_ERRC(parse_address("johndoe@example.com."), Errc::InvalidDomain);
  EXPECT_ERRC(parse_address("johndoe@exa mple.com"), Errc::InvalidDomain);
  EXPECT_ERRC(parse_address("johndoe@-example.com"), Errc::InvalidDomain);
  EXPECT_ERRC(parse_address("johndoe@example..com"), Errc::InvalidDomain);
  EXPECT_ERRC(parse_address("johndoe@" + std::string(64, 'a') + ".com"), Errc::InvalidDomain);
  EXPECT_ERRC(parse_address("j\xff@example.com"), Errc::InvalidUtf8);
}

TEST(Address, DomainGoesToIdnaAscii)
{
  auto a = parse_address("hans@m\xc3\xbcller.example");
  EXPECT_EQ(a.domain_ascii, "xn--mller-kva.example");
  EXPECT_EQ(a.domain_unicode, "m\xc3\xbcller.example");
  EXPECT_EQ(format_address(a, DomainForm::Ascii), "hans@xn--mller-kva.example");
  EXPECT_EQ(parse_address("x@EXAMPLE.com").domain_ascii, "example.com");
}

TEST(Address, EqualityUsesAsciiDomainAndExactLocal)
{
  EXPECT_EQ(parse_address("a@M\xc3\xbcller.example"), parse_address("a@xn--mller-kva.example"));
  EXPECT_NE(parse_address("A@example.com"), parse_address("a@example.com"));
}

TEST(ServiceIdentifier, AliasesMapToGenesisHashes)
{
  EXPECT_EQ(builtin_service_id("bitcoin").token(), "000000000019d6689c085ae165831e934ff763ae46a2a6c172b3f1b60a8ce26f");
  EXPECT_EQ(builtin_service_id("Litecoin").token(), "12a765e31ffd4059bada1e25190f6e98c99d9714d334efa41a195a7e7e04bfe2");
  EXPECT_EQ(builtin_service_id("DOGECOIN").token(), "1a91e3dace36e2be3bf030a65679fe821aa1d6ef92e7c9902eb318182c355691");
}

TEST(ServiceIdentifier, RawHexPassesThroughLowercased)
{
  EXPECT_EQ(builtin_service_id("000000000019D6689C085AE165831E934FF763AE46A2A6C172B3F1B60A8CE26F").token(),
            "000000000019d6689c085ae165831e934ff763ae46a2a6c172b3f1b60a8ce26f");
  EXPECT_ERRC(builtin_service_id("bitcion"), Errc::UnknownAlias);
  EXPECT_ERRC(builtin_service_id(std::string(63, 'a')), Errc::UnknownAlias);
}

TEST(ServiceIdentifier, TokenLimits)
{
  EXPECT_ERRC(ServiceId::from_token(""), Errc::InvalidServiceId);
  EXPECT_NO_THROW(ServiceId::from_token(std::string(255, 'a')));
  EXPECT_ERRC(ServiceId::from_token(std::string(256, 'a')), Errc::InvalidServiceId);
  EXPECT_ERRC(ServiceId::from_token("\xc3"), Errc::InvalidServiceId);
}

TEST(Spoofing, DecomposedUmlautIsNotNfc)
{
  auto composed = inspect_spoofing("j\xc3\xa4ger@example.com");
  EXPECT_TRUE(composed.clean());
  auto decomposed = inspect_spoofing("ja\xcc\x88ger@example.com");
  ASSERT_TRUE(decomposed.has(SpoofKind::NotNfcNormalized));
  EXPECT_EQ(decomposed.warnings.size(), 1u);
}

TEST(Spoofing, FlagsControlFormatAndBidiCharacters)
{
  auto report = inspect_spoofing("a\x07z\xe2\x80\x8b\xe2\x80\xae@example.com");
  ASSERT_EQ(report.warnings.size(), 3u);
  EXPECT_EQ(report.warnings[0].kind, SpoofKind::ControlChar);
  EXPECT_EQ(report.warnings[0].position, 1u);
  EXPECT_EQ(report.warnings[1].kind, SpoofKind::FormatChar);
  EXPECT_EQ(report.warnings[1].position, 3u);
  EXPECT_EQ(report.warnings[2].kind, SpoofKind::BidiOverride);
  EXPECT_EQ(report.warnings[2].position, 6u);
}

TEST(Spoofing, PlainAsciiIsClean) { EXPECT_TRUE(inspect_spoofing("johndoe@example.com").clean()); }

TEST(Display, EscapesControlAndFormatCharacters)
{
  EXPECT_EQ(escape_for_display("a\nb"), "a\\u{000A}b");
  EXPECT_EQ(escape_for_display("x\xe2\x80\xaey"), "x\\u{202E}y");
  EXPECT_EQ(escape_for_display("\x1b[31m"), "\\u{001B}[31m");
  EXPECT_EQ(escape_for_display("\xff"), "\\x{FF}");
  EXPECT_EQ(escape_for_display("m\xc3\xbcller"), "m\xc3\xbcller");
}
