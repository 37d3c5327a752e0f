#include "scap/identity.hpp"

#include "scap/bytes.hpp"
#include "scap/error.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/uidna.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <memory>

namespace scap {

namespace {

constexpr std::size_t kMaxDomainLength = 253;
constexpr std::size_t kMaxLabelLength = 63;

constexpr std::array<BuiltinService, 3> kBuiltinServices{{
  {"bitcoin", "000000000019d6689c085ae165831e934ff763ae46a2a6c172b3f1b60a8ce26f"},
  {"litecoin", "12a765e31ffd4059bada1e25190f6e98c99d9714d334efa41a195a7e7e04bfe2"},
  {"dogecoin", "1a91e3dace36e2be3bf030a65679fe821aa1d6ef92e7c9902eb318182c355691"},
}};

struct IdnaCloser {
  void operator()(UIDNA* idna) const noexcept { uidna_close(idna); }
};

const UIDNA& idna_instance()
{
  static const std::unique_ptr<UIDNA, IdnaCloser> instance = [] {
    UErrorCode status = U_ZERO_ERROR;
    constexpr std::uint32_t options = UIDNA_USE_STD3_RULES | UIDNA_CHECK_BIDI | UIDNA_CHECK_CONTEXTJ |
                                      UIDNA_NONTRANSITIONAL_TO_ASCII;
    UIDNA* idna = uidna_openUTS46(options, &status);
    if (U_FAILURE(status)) {
      fail(Errc::InvalidDomain, std::string("IDNA initialisation failed: ") + u_errorName(status));
    }
    return std::unique_ptr<UIDNA, IdnaCloser>(idna);
  }();
  return *instance;
}

std::string code_point_label(UChar32 c)
{
  char buf[16];
  std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(c));
  return buf;
}

bool is_bidi_control(UChar32 c)
{
  return (c >= 0x202a && c <= 0x202e) || (c >= 0x2066 && c <= 0x2069) || c == 0x200e || c == 0x200f ||
         c == 0x061c;
}

bool is_ascii_alnum(char c)
{
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

void check_fqdn(std::string_view ascii)
{
  if (ascii.empty() || ascii.size() > kMaxDomainLength) {
    fail(Errc::InvalidDomain, "domain length " + std::to_string(ascii.size()) + " outside 1-253");
  }
  std::size_t start = 0;
  while (start <= ascii.size()) {
    auto end = ascii.find('.', start);
    if (end == std::string_view::npos) {
      end = ascii.size();
    }
    auto label = ascii.substr(start, end - start);
    if (label.empty() || label.size() > kMaxLabelLength) {
      fail(Errc::InvalidDomain, "label length " + std::to_string(label.size()) + " outside 1-63");
    }
    if (!std::all_of(label.begin(), label.end(), [](char c) { return is_ascii_alnum(c) || c == '-'; }) ||
        label.front() == '-' || label.back() == '-') {
      fail(Errc::InvalidDomain, "label '" + std::string(label) + "' is not letters, digits and inner hyphens");
    }
    start = end + 1;
  }
}

} // namespace

std::string domain_to_ascii(std::string_view domain)
{
  if (domain.empty()) {
    fail(Errc::InvalidDomain, "empty domain");
  }
  if (domain.back() == '.') {
    fail(Errc::InvalidDomain, "domain must not end with a dot");
  }
  if (!is_valid_utf8(domain)) {
    fail(Errc::InvalidUtf8, "domain part");
  }
  UErrorCode status = U_ZERO_ERROR;
  UIDNAInfo info = UIDNA_INFO_INITIALIZER;
  std::string out(domain.size() * 4 + 64, '\0');
  auto written = uidna_nameToASCII_UTF8(&idna_instance(), domain.data(), static_cast<int32_t>(domain.size()),
                                        out.data(), static_cast<int32_t>(out.size()), &info, &status);
  if (U_FAILURE(status)) {
    fail(Errc::InvalidDomain, std::string("IDNA conversion failed: ") + u_errorName(status));
  }
  if (info.errors != 0) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%04x", static_cast<unsigned>(info.errors));
    fail(Errc::InvalidDomain, std::string("IDNA rejected the domain (error bits ") + buf + ")");
  }
  out.resize(static_cast<std::size_t>(written));
  check_fqdn(out);
  return out;
}

CryptoAddress parse_address(std::string_view text)
{
  if (!is_valid_utf8(text)) {
    fail(Errc::InvalidUtf8, "cryptoaddress");
  }
  auto at = text.rfind('@');
  if (at == std::string_view::npos) {
    fail(Errc::NoAtSymbol, "no '@' in cryptoaddress");
  }
  auto local = text.substr(0, at);
  if (local.size() > kMaxLocalPartLength) {
    fail(Errc::LocalTooLong, std::to_string(local.size()) + " bytes, limit is 1023");
  }
  auto domain = text.substr(at + 1);
  return {std::string(local), std::string(domain), domain_to_ascii(domain)};
}

std::string format_address(const CryptoAddress& address, DomainForm form)
{
  const auto& domain = form == DomainForm::Ascii ? address.domain_ascii : address.domain_unicode;
  return address.local + "@" + domain;
}

ServiceId ServiceId::from_token(std::string_view token)
{
  if (token.empty() || token.size() > kMaxServiceIdLength) {
    fail(Errc::InvalidServiceId, "service identifier must be 1-255 bytes");
  }
  if (!is_valid_utf8(token)) {
    fail(Errc::InvalidServiceId, "service identifier is not valid UTF-8");
  }
  return ServiceId(std::string(token));
}

std::span<const BuiltinService> builtin_services() noexcept { return kBuiltinServices; }

ServiceId builtin_service_id(std::string_view alias)
{
  std::string lowered(alias);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](char c) { return c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c; });
  for (const auto& service : kBuiltinServices) {
    if (service.alias == lowered) {
      return ServiceId::from_token(service.genesis_hash);
    }
  }
  if (lowered.size() == 64 && hex_decode(lowered)) {
    return ServiceId::from_token(lowered);
  }
  fail(Errc::UnknownAlias, "'" + escape_for_display(alias) + "' is neither a known alias nor 64 hex digits");
}

// ---------------------------------------------------------------------------

std::string_view spoof_kind_name(SpoofKind kind) noexcept
{
  switch (kind) {
    case SpoofKind::ControlChar: return "ControlChar";
    case SpoofKind::FormatChar: return "FormatChar";
    case SpoofKind::BidiOverride: return "BidiOverride";
    case SpoofKind::NotNfcNormalized: return "NotNfcNormalized";
  }
  return "Unknown";
}

bool SpoofReport::has(SpoofKind kind) const noexcept
{
  return std::any_of(warnings.begin(), warnings.end(), [kind](const auto& w) { return w.kind == kind; });
}

SpoofReport inspect_spoofing(std::string_view text)
{
  if (!is_valid_utf8(text)) {
    fail(Errc::InvalidUtf8, "cryptoaddress");
  }
  SpoofReport report;
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(text.data());
  auto length = static_cast<int32_t>(text.size());
  for (int32_t i = 0; i < length;) {
    int32_t offset = i;
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    auto category = u_charType(c);
    if (category == U_CONTROL_CHAR) {
      report.warnings.push_back({SpoofKind::ControlChar, static_cast<std::size_t>(offset),
                                 "control character " + code_point_label(c)});
    } else if (category == U_FORMAT_CHAR) {
      auto kind = is_bidi_control(c) ? SpoofKind::BidiOverride : SpoofKind::FormatChar;
      report.warnings.push_back({kind, static_cast<std::size_t>(offset), "format character " + code_point_label(c)});
    }
  }

  UErrorCode status = U_ZERO_ERROR;
  const auto* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    return report;
  }
  auto utext = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), length));
  if (!nfc->isNormalized(utext, status) && U_SUCCESS(status)) {
    auto prefix = nfc->spanQuickCheckYes(utext, status);
    // Map the UTF-16 index back to a byte offset.
    std::string head;
    utext.tempSubString(0, prefix).toUTF8String(head);
    std::string normalized;
    nfc->normalize(utext, status).toUTF8String(normalized);
    report.warnings.push_back({SpoofKind::NotNfcNormalized, head.size(),
                               "text differs from its composed (NFC) form '" + escape_for_display(normalized) + "'"});
  }
  return report;
}

std::string escape_for_display(std::string_view text)
{
  std::string out;
  out.reserve(text.size());
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(text.data());
  auto length = static_cast<int32_t>(text.size());
  char buf[16];
  for (int32_t i = 0; i < length;) {
    int32_t start = i;
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c < 0) {
      for (int32_t k = start; k < i; ++k) {
        std::snprintf(buf, sizeof buf, "\\x{%02X}", static_cast<unsigned>(bytes[k]));
        out += buf;
      }
      continue;
    }
    auto category = u_charType(c);
    if (category == U_CONTROL_CHAR || category == U_FORMAT_CHAR || category == U_LINE_SEPARATOR ||
        category == U_PARAGRAPH_SEPARATOR) {
      std::snprintf(buf, sizeof buf, "\\u{%04X}", static_cast<unsigned>(c));
      out += buf;
    } else {
      out.append(text.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)));
    }
  }
  return out;
}

} // namespace scap
