#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sparsedoc {

/// UTF-8 text decoded once, keeping the byte offset of every code point so
/// that character spans can be sliced back out of the original string.
class Utf8Text {
 public:
  explicit Utf8Text(std::string_view bytes);

  std::size_t size() const { return code_points_.size(); }
  char32_t operator[](std::size_t i) const { return code_points_[i]; }

  /// Byte offset of code point `i`; `i == size()` gives the total byte length.
  std::size_t byte_offset(std::size_t i) const { return offsets_[i]; }

  /// Bytes covering code points [begin, end).
  std::string_view slice(std::size_t begin, std::size_t end) const;

  std::string_view bytes() const { return bytes_; }

 private:
  std::string_view bytes_;
  std::vector<char32_t> code_points_;
  std::vector<std::size_t> offsets_;
};

void append_utf8(std::string& out, char32_t cp);
std::size_t utf8_length(std::string_view bytes);

bool is_space(char32_t cp);
/// Letters and digits. Non-ASCII code points are letters unless they fall in
/// the Latin-1 math signs or the general punctuation/symbol blocks.
bool is_word_char(char32_t cp);
bool is_upper(char32_t cp);
bool is_digit(char32_t cp);
char32_t to_lower(char32_t cp);

/// Lowercases ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic; keeps
/// diacritics.
std::string lowercase(std::string_view utf8);

/// True when the string holds no letter or digit.
bool is_punctuation(std::string_view utf8);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a64(std::string_view data);
std::string hex16(std::uint64_t value);

}  // namespace sparsedoc
