#include "sparsedoc/corpus.hpp"

#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "sparsedoc/errors.hpp"
#include "sparsedoc/text.hpp"

namespace sparsedoc {

using nlohmann::json;

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

DocumentSet load_corpus(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  DocumentSet docs;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    json record;
    try {
      record = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string(), i + 1, e.what());
    }
    if (!record.is_object() || !record.contains("id") || !record["id"].is_string() ||
        !record.contains("text") || !record["text"].is_string()) {
      throw ParseError(path.string(), i + 1, "expected an object with string fields 'id' and 'text'");
    }
    Document doc;
    doc.id = record["id"].get<std::string>();
    doc.text = record["text"].get<std::string>();
    if (record.contains("label") && !record["label"].is_null()) {
      if (!record["label"].is_string()) throw ParseError(path.string(), i + 1, "'label' must be a string");
      doc.label = record["label"].get<std::string>();
    }
    if (doc.id.empty()) throw ValidationError(path.string() + ":" + std::to_string(i + 1) + ": empty document id");
    if (doc.text.empty()) throw ValidationError("document '" + doc.id + "' has empty text");
    if (!seen.insert(doc.id).second) throw ValidationError("duplicate document id '" + doc.id + "'");
    docs.push_back(std::move(doc));
  }
  return docs;
}

void save_corpus(const DocumentSet& docs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& doc : docs) {
    json record = {{"id", doc.id}, {"text", doc.text}};
    if (doc.label) record["label"] = *doc.label;
    out << record.dump() << '\n';
  }
}

namespace {

bool is_terminator(char32_t cp) { return cp == '.' || cp == '?' || cp == '!'; }

bool is_closer(char32_t cp) {
  return cp == ')' || cp == ']' || cp == '"' || cp == '\'' || cp == 0xBB || cp == 0x2019 || cp == 0x201D;
}

bool is_joiner(char32_t cp) { return cp == '-' || cp == '\'' || cp == 0x2019 || cp == 0x2011; }

std::vector<Token> tokenize_range(const Utf8Text& text, std::size_t begin, std::size_t end) {
  std::vector<Token> tokens;
  std::size_t i = begin;
  while (i < end) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (is_word_char(text[i])) {
      while (j < end) {
        if (is_word_char(text[j])) {
          ++j;
        } else if (is_joiner(text[j]) && j + 1 < end && is_word_char(text[j + 1])) {
          j += 2;
        } else {
          break;
        }
      }
    }
    Token tok;
    tok.surface = std::string(text.slice(i, j));
    tok.norm = lowercase(tok.surface);
    tok.char_span = {i, j};
    tok.byte_span = {text.byte_offset(i), text.byte_offset(j)};
    tokens.push_back(std::move(tok));
    i = j;
  }
  return tokens;
}

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  const Utf8Text utf(text);
  return tokenize_range(utf, 0, utf.size());
}

std::vector<std::string> normalized_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (auto& tok : tokenize(text)) out.push_back(std::move(tok.norm));
  return out;
}

Segmenter::Segmenter() : abbreviations_{"dr", "mr", "mme", "m", "e.g", "i.e", "cm", "vs"} {}

Segmenter::Segmenter(std::set<std::string> abbreviations) : abbreviations_(std::move(abbreviations)) {}

Segmenter Segmenter::from_file(const std::filesystem::path& path) {
  std::set<std::string> abbrevs;
  for (const auto& line : read_lines(path)) {
    auto entry = lowercase(trim(line));
    if (!entry.empty() && entry.back() == '.') entry.pop_back();
    if (!entry.empty()) abbrevs.insert(entry);
  }
  return Segmenter(std::move(abbrevs));
}

std::vector<Sentence> Segmenter::segment(const Document& doc) const { return segment(doc.id, doc.text); }

std::vector<Sentence> Segmenter::segment(std::string_view doc_id, std::string_view raw) const {
  const Utf8Text text(raw);
  const std::size_t n = text.size();
  std::vector<std::size_t> cuts;  // sentence ends (exclusive)

  for (std::size_t i = 0; i < n; ++i) {
    const char32_t cp = text[i];
    if (cp == '\n') {
      std::size_t k = i + 1;
      while (k < n && text[k] != '\n' && is_space(text[k])) ++k;
      if (k < n && text[k] == '\n') cuts.push_back(i);
      continue;
    }
    if (!is_terminator(cp)) continue;

    std::size_t end = i;
    while (end < n && is_terminator(text[end])) ++end;
    while (end < n && is_closer(text[end])) ++end;
    if (end < n && !is_space(text[end])) {
      i = end - 1;
      continue;
    }
    std::size_t next = end;
    while (next < n && is_space(text[next])) ++next;
    const bool starts_sentence = next == n || is_upper(text[next]) || is_digit(text[next]);

    bool abbreviation = false;
    if (cp == '.') {
      std::size_t start = i;
      while (start > 0 && !is_space(text[start - 1])) --start;
      while (start < i && !is_word_char(text[start])) ++start;
      abbreviation = start < i && abbreviations_.count(lowercase(text.slice(start, i))) > 0;
    }
    if (starts_sentence && !abbreviation) cuts.push_back(end);
    i = end - 1;
  }
  cuts.push_back(n);

  std::vector<Sentence> sentences;
  std::size_t begin = 0;
  for (const std::size_t cut : cuts) {
    std::size_t b = begin, e = cut;
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    begin = cut;
    if (b == e) continue;
    Sentence s;
    s.doc_id = std::string(doc_id);
    s.index = sentences.size();
    s.char_span = {b, e};
    s.byte_span = {text.byte_offset(b), text.byte_offset(e)};
    s.tokens = tokenize_range(text, b, e);
    sentences.push_back(std::move(s));
  }
  return sentences;
}

}  // namespace sparsedoc
