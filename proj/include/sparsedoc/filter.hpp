#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sparsedoc/corpus.hpp"
#include "sparsedoc/vocab.hpp"

namespace sparsedoc {

/// A target-term occurrence inside its sentence.
struct Entity {
  std::string entity_id;
  std::string doc_id;
  Sentence sentence;
  TargetTerm term;
  std::size_t first = 0;  // token indices within the sentence, inclusive
  std::size_t last = 0;
  std::optional<bool> relevance;

  /// Code-point span of the matched tokens relative to the sentence start.
  Span highlight() const;
  /// Text of the sentence and of the matched tokens, sliced from the document.
  std::string sentence_text(const std::string& doc_text) const;
  std::string surface(const std::string& doc_text) const;
};

enum class Route { case_a, case_b };

const char* route_name(Route route);

struct FilteredDocument {
  std::string doc_id;
  Route route = Route::case_a;
  std::vector<Entity> entities;
  std::optional<std::string> label;       // set for case_a only
  std::optional<std::string> gold_label;  // carried over from the corpus
};

/// Stable id: lowercase hex FNV-1a 64 of
/// doc_id \x1f sentence_index \x1f first \x1f last \x1f term_text.
std::string make_entity_id(const std::string& doc_id, std::size_t sentence_index, std::size_t first,
                           std::size_t last, const std::string& term_text);

/// Leftmost-longest, non-overlapping matches of vocabulary terms over
/// normalized tokens, in document order.
std::vector<Entity> find_entities(const Document& doc, const std::vector<Sentence>& sentences,
                                  const VocabList& vocab);

FilteredDocument route(const Document& doc, std::vector<Entity> entities, const std::string& default_label);

std::vector<FilteredDocument> filter_corpus(const DocumentSet& corpus, const VocabList& vocab,
                                            const std::string& default_label,
                                            const Segmenter& segmenter = Segmenter());

/// JSON-lines export: one "document" record per document followed by one
/// "entity" record per entity. Entity records are what the annotation
/// service loads.
void write_filtered(const DocumentSet& corpus, const std::vector<FilteredDocument>& filtered,
                    const std::filesystem::path& path);

/// Resolved relevance annotation for one entity.
struct RelevanceLabel {
  std::string entity_id;
  bool relevant = false;
};

/// Relevance file: one {"entity_id", "relevant"} JSON object per line.
/// Later lines win when an id repeats.
std::map<std::string, bool> load_relevance(const std::filesystem::path& path);
void write_relevance(const std::vector<RelevanceLabel>& labels, const std::filesystem::path& path);
std::string relevance_line(const RelevanceLabel& label);

/// Copies annotations onto matching entities; returns how many matched.
std::size_t apply_relevance(std::vector<FilteredDocument>& docs, const std::map<std::string, bool>& relevance);

}  // namespace sparsedoc
