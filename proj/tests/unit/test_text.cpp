#include <doctest.h>

#include "sparsedoc/text.hpp"

using namespace sparsedoc;

TEST_CASE("utf8 decoding keeps byte offsets per code point") {
  const std::string s = "a\xC3\xA9\xE2\x80\x99z";  // a, e-acute, right quote, z
  const Utf8Text t(s);
  REQUIRE(t.size() == 4);
  CHECK(t[1] == 0xE9);
  CHECK(t[2] == 0x2019);
  CHECK(t.byte_offset(0) == 0);
  CHECK(t.byte_offset(2) == 3);
  CHECK(t.byte_offset(4) == s.size());
  CHECK(t.slice(1, 3) == "\xC3\xA9\xE2\x80\x99");
  CHECK(utf8_length(s) == 4);
}

TEST_CASE("append_utf8 round-trips through the decoder") {
  for (const char32_t cp : {char32_t(0x41), char32_t(0xE9), char32_t(0x2019), char32_t(0x1F600)}) {
    std::string s;
    append_utf8(s, cp);
    const Utf8Text t(s);
    REQUIRE(t.size() == 1);
    CHECK(t[0] == cp);
  }
}

TEST_CASE("lowercase keeps diacritics") {
  CHECK(lowercase("Former SMOKER") == "former smoker");
  CHECK(lowercase("\xC3\x89TAT") == "\xC3\xA9tat");           // ÉTAT -> état
  CHECK(lowercase("\xCE\x91\xCE\x92") == "\xCE\xB1\xCE\xB2");  // Greek
  CHECK(lowercase("\xD0\x94\xD0\x90") == "\xD0\xB4\xD0\xB0");  // Cyrillic
}

TEST_CASE("character classes") {
  CHECK(is_word_char('a'));
  CHECK(is_word_char('7'));
  CHECK(is_word_char(0xE9));
  CHECK_FALSE(is_word_char('-'));
  CHECK_FALSE(is_word_char(0x2019));
  CHECK(is_space('\t'));
  CHECK(is_space(0xA0));
  CHECK(is_upper('Q'));
  CHECK_FALSE(is_upper('q'));
  CHECK(is_punctuation("."));
  CHECK(is_punctuation("..."));
  CHECK_FALSE(is_punctuation("a."));
}

TEST_CASE("trim and split") {
  CHECK(trim("  a b \n") == "a b");
  CHECK(trim("") == "");
  const auto parts = split("a,,b", ',');
  REQUIRE(parts.size() == 3);
  CHECK(parts[1].empty());
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(hex16(0xabcULL) == "0000000000000abc");
}
