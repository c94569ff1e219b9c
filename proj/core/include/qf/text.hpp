#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qf::text {

// Decodes arbitrary bytes as UTF-8, substituting U+FFFD for malformed
// sequences. `replacements` receives the number of substitutions.
std::string lossy_utf8(std::string_view bytes, std::size_t* replacements = nullptr);

bool is_valid_utf8(std::string_view bytes) noexcept;

std::string to_nfc(std::string_view utf8);
std::string to_lower(std::string_view utf8);

// Code point offsets of a UTF-8 string. offsets()[i] is the byte offset of
// code point i; offsets().back() == bytes.size().
class Utf8Index {
 public:
  explicit Utf8Index(std::string_view utf8);

  std::size_t size() const noexcept { return offsets_.size() - 1; }
  std::size_t byte_offset(std::size_t cp) const { return offsets_.at(cp); }
  std::string_view slice(std::string_view utf8, std::size_t cp_begin,
                         std::size_t cp_end) const;

 private:
  std::vector<std::size_t> offsets_;
};

std::size_t char_count(std::string_view utf8);
std::vector<std::string> code_points(std::string_view utf8);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::string hex64(std::uint64_t value);

std::string trim(std::string_view s);

// Lowercased word tokens; punctuation acts as a separator.
std::vector<std::string> words(std::string_view utf8);

}  // namespace qf::text
