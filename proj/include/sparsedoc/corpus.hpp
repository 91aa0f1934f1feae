#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace sparsedoc {

/// Half-open [begin, end) range.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

struct Token {
  std::string surface;
  std::string norm;
  Span char_span;  // code points into the document text
  Span byte_span;  // bytes into the document text
};

struct Sentence {
  std::string doc_id;
  std::size_t index = 0;
  Span char_span;
  Span byte_span;
  std::vector<Token> tokens;
};

struct Document {
  std::string id;
  std::string text;
  std::optional<std::string> label;
};

using DocumentSet = std::vector<Document>;

/// Reads a JSON-lines corpus: one {"id", "text", "label"?} object per line.
/// Blank lines are skipped. Duplicate ids raise ValidationError.
DocumentSet load_corpus(const std::filesystem::path& path);
void save_corpus(const DocumentSet& docs, const std::filesystem::path& path);

/// Rule-based sentence splitter.
class Segmenter {
 public:
  /// Defaults: dr, mr, mme, m, e.g, i.e, cm, vs.
  Segmenter();
  explicit Segmenter(std::set<std::string> abbreviations);

  /// One lowercase abbreviation per line, without the trailing period.
  static Segmenter from_file(const std::filesystem::path& path);

  std::vector<Sentence> segment(const Document& doc) const;
  std::vector<Sentence> segment(std::string_view doc_id, std::string_view text) const;

  const std::set<std::string>& abbreviations() const { return abbreviations_; }

 private:
  std::set<std::string> abbreviations_;
};

/// Word tokens are runs of letters/digits joined by intra-word hyphens or
/// apostrophes; every other non-space character is a token on its own.
/// Spans are relative to `text`.
std::vector<Token> tokenize(std::string_view text);

/// Normalized tokens of a short string (used for vocabulary terms and
/// baseline preprocessing).
std::vector<std::string> normalized_tokens(std::string_view text);

std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace sparsedoc
