#include "qf/text.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <cstdio>
#include <stdexcept>

namespace qf::text {

namespace {

void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  U8_APPEND_UNSAFE(reinterpret_cast<uint8_t*>(buf), len, c);
  out.append(buf, static_cast<std::size_t>(len));
}

template <typename Fn>
void for_each_code_point(std::string_view s, Fn&& fn) {
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  const auto n = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < n) {
    const int32_t start = i;
    UChar32 c = 0;
    U8_NEXT(p, i, n, c);
    fn(c, start, i);
  }
}

}  // namespace

std::string lossy_utf8(std::string_view bytes, std::size_t* replacements) {
  std::string out;
  out.reserve(bytes.size());
  std::size_t bad = 0;
  for_each_code_point(bytes, [&](UChar32 c, int32_t start, int32_t end) {
    if (c < 0) {
      ++bad;
      append_utf8(out, 0xFFFD);
    } else {
      out.append(bytes.substr(static_cast<std::size_t>(start),
                              static_cast<std::size_t>(end - start)));
    }
  });
  if (replacements != nullptr) *replacements = bad;
  return out;
}

bool is_valid_utf8(std::string_view bytes) noexcept {
  bool ok = true;
  for_each_code_point(bytes, [&](UChar32 c, int32_t, int32_t) {
    if (c < 0) ok = false;
  });
  return ok;
}

std::string to_nfc(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalizer unavailable");
  const auto src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  if (nfc->isNormalized(src, status) && U_SUCCESS(status)) return std::string(utf8);
  status = U_ZERO_ERROR;
  const icu::UnicodeString normalized = nfc->normalize(src, status);
  if (U_FAILURE(status)) throw std::runtime_error("NFC normalization failed");
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

std::string to_lower(std::string_view utf8) {
  auto s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  s.toLower(icu::Locale::getRoot());
  std::string out;
  s.toUTF8String(out);
  return out;
}

Utf8Index::Utf8Index(std::string_view utf8) {
  offsets_.reserve(utf8.size() + 1);
  for_each_code_point(utf8, [&](UChar32, int32_t start, int32_t) {
    offsets_.push_back(static_cast<std::size_t>(start));
  });
  offsets_.push_back(utf8.size());
}

std::string_view Utf8Index::slice(std::string_view utf8, std::size_t cp_begin,
                                  std::size_t cp_end) const {
  const std::size_t b = byte_offset(cp_begin);
  return utf8.substr(b, byte_offset(cp_end) - b);
}

std::size_t char_count(std::string_view utf8) {
  std::size_t n = 0;
  for_each_code_point(utf8, [&](UChar32, int32_t, int32_t) { ++n; });
  return n;
}

std::vector<std::string> code_points(std::string_view utf8) {
  std::vector<std::string> out;
  for_each_code_point(utf8, [&](UChar32, int32_t start, int32_t end) {
    out.emplace_back(utf8.substr(static_cast<std::size_t>(start),
                                 static_cast<std::size_t>(end - start)));
  });
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : bytes) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string trim(std::string_view s) {
  constexpr std::string_view ws = " \t\n\r\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> words(std::string_view utf8) {
  std::vector<std::string> out;
  std::string current;
  for_each_code_point(utf8, [&](UChar32 c, int32_t start, int32_t end) {
    if (c >= 0 && u_isalnum(c)) {
      current.append(utf8.substr(static_cast<std::size_t>(start),
                                 static_cast<std::size_t>(end - start)));
    } else if (!current.empty()) {
      out.push_back(to_lower(current));
      current.clear();
    }
  });
  if (!current.empty()) out.push_back(to_lower(current));
  return out;
}

}  // namespace qf::text
