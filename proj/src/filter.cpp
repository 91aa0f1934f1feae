#include "sparsedoc/filter.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sparsedoc/errors.hpp"
#include "sparsedoc/text.hpp"

namespace sparsedoc {

const char* route_name(Route route) { return route == Route::case_a ? "case_a" : "case_b"; }

Span Entity::highlight() const {
  const std::size_t base = sentence.char_span.begin;
  return {sentence.tokens[first].char_span.begin - base, sentence.tokens[last].char_span.end - base};
}

std::string Entity::sentence_text(const std::string& doc_text) const {
  return doc_text.substr(sentence.byte_span.begin, sentence.byte_span.size());
}

std::string Entity::surface(const std::string& doc_text) const {
  const std::size_t b = sentence.tokens[first].byte_span.begin;
  return doc_text.substr(b, sentence.tokens[last].byte_span.end - b);
}

std::string make_entity_id(const std::string& doc_id, std::size_t sentence_index, std::size_t first,
                           std::size_t last, const std::string& term_text) {
  std::string key = doc_id;
  key += '\x1f';
  key += std::to_string(sentence_index);
  key += '\x1f';
  key += std::to_string(first);
  key += '\x1f';
  key += std::to_string(last);
  key += '\x1f';
  key += term_text;
  return hex16(fnv1a64(key));
}

namespace {

bool token_matches(const std::string& token, const std::string& pattern, bool prefix, bool suffix) {
  if (prefix && suffix) return token.find(pattern) != std::string::npos;
  if (prefix) return token.size() >= pattern.size() && token.compare(0, pattern.size(), pattern) == 0;
  if (suffix) {
    return token.size() >= pattern.size() &&
           token.compare(token.size() - pattern.size(), pattern.size(), pattern) == 0;
  }
  return token == pattern;
}

bool term_matches_at(const std::vector<Token>& tokens, std::size_t pos, const TargetTerm& term) {
  const std::size_t len = term.tokens.size();
  if (pos + len > tokens.size()) return false;
  for (std::size_t j = 0; j < len; ++j) {
    const bool prefix = term.prefix_last && j + 1 == len;
    const bool suffix = term.suffix_first && j == 0;
    if (!token_matches(tokens[pos + j].norm, term.tokens[j], prefix, suffix)) return false;
  }
  return true;
}

}  // namespace

std::vector<Entity> find_entities(const Document& doc, const std::vector<Sentence>& sentences,
                                  const VocabList& vocab) {
  // Longest first; rank breaks ties.
  std::vector<const TargetTerm*> order;
  for (const auto& t : vocab.terms) order.push_back(&t);
  std::stable_sort(order.begin(), order.end(), [](const TargetTerm* a, const TargetTerm* b) {
    return a->tokens.size() > b->tokens.size();
  });

  std::vector<Entity> entities;
  for (const auto& sentence : sentences) {
    std::size_t pos = 0;
    while (pos < sentence.tokens.size()) {
      const TargetTerm* hit = nullptr;
      for (const TargetTerm* term : order) {
        if (term_matches_at(sentence.tokens, pos, *term)) {
          hit = term;
          break;
        }
      }
      if (!hit) {
        ++pos;
        continue;
      }
      Entity e;
      e.doc_id = doc.id;
      e.sentence = sentence;
      e.term = *hit;
      e.first = pos;
      e.last = pos + hit->tokens.size() - 1;
      e.entity_id = make_entity_id(doc.id, sentence.index, e.first, e.last, hit->text());
      entities.push_back(std::move(e));
      pos += hit->tokens.size();
    }
  }
  return entities;
}

FilteredDocument route(const Document& doc, std::vector<Entity> entities, const std::string& default_label) {
  FilteredDocument out;
  out.doc_id = doc.id;
  out.gold_label = doc.label;
  if (entities.empty()) {
    out.route = Route::case_a;
    out.label = default_label;
  } else {
    out.route = Route::case_b;
    out.entities = std::move(entities);
  }
  return out;
}

std::vector<FilteredDocument> filter_corpus(const DocumentSet& corpus, const VocabList& vocab,
                                            const std::string& default_label, const Segmenter& segmenter) {
  std::vector<FilteredDocument> out;
  out.reserve(corpus.size());
  for (const auto& doc : corpus) {
    out.push_back(route(doc, find_entities(doc, segmenter.segment(doc), vocab), default_label));
  }
  return out;
}

void write_filtered(const DocumentSet& corpus, const std::vector<FilteredDocument>& filtered,
                    const std::filesystem::path& path) {
  if (corpus.size() != filtered.size()) throw ValidationError("corpus and filtered output differ in size");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  using nlohmann::json;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& doc = corpus[i];
    const auto& f = filtered[i];
    json d = {{"kind", "document"}, {"doc_id", f.doc_id}, {"route", route_name(f.route)},
              {"n_entities", f.entities.size()}};
    d["label"] = f.label ? json(*f.label) : json(nullptr);
    out << d.dump() << '\n';
    for (const auto& e : f.entities) {
      const Span hl = e.highlight();
      json r = {{"kind", "entity"},
                {"entity_id", e.entity_id},
                {"doc_id", e.doc_id},
                {"sentence_index", e.sentence.index},
                {"sentence", e.sentence_text(doc.text)},
                {"sentence_span", {e.sentence.char_span.begin, e.sentence.char_span.end}},
                {"token_span", {e.first, e.last}},
                {"highlight", {hl.begin, hl.end}},
                {"term", e.term.text()},
                {"surface", e.surface(doc.text)}};
      out << r.dump() << '\n';
    }
  }
}

std::map<std::string, bool> load_relevance(const std::filesystem::path& path) {
  using nlohmann::json;
  std::map<std::string, bool> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    json r;
    try {
      r = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string(), i + 1, e.what());
    }
    if (!r.is_object() || !r.contains("entity_id") || !r["entity_id"].is_string() || !r.contains("relevant") ||
        !r["relevant"].is_boolean()) {
      throw ParseError(path.string(), i + 1, "expected {\"entity_id\": string, \"relevant\": bool}");
    }
    out[r["entity_id"].get<std::string>()] = r["relevant"].get<bool>();
  }
  return out;
}

std::string relevance_line(const RelevanceLabel& label) {
  return nlohmann::json{{"entity_id", label.entity_id}, {"relevant", label.relevant}}.dump();
}

void write_relevance(const std::vector<RelevanceLabel>& labels, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& l : labels) out << relevance_line(l) << '\n';
}

std::size_t apply_relevance(std::vector<FilteredDocument>& docs, const std::map<std::string, bool>& relevance) {
  std::size_t matched = 0;
  for (auto& doc : docs) {
    for (auto& e : doc.entities) {
      const auto it = relevance.find(e.entity_id);
      if (it == relevance.end()) continue;
      e.relevance = it->second;
      ++matched;
    }
  }
  return matched;
}

}  // namespace sparsedoc
