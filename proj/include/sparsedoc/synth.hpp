#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sparsedoc/corpus.hpp"
#include "sparsedoc/filter.hpp"

namespace sparsedoc {

enum class SentenceKind { noise, distractor, relevant };

struct SynthConfig {
  std::size_t num_documents = 500;
  std::size_t sentences_per_document = 40;
  std::size_t relevant_per_document = 1;
  double distractor_rate = 0.3;  // chance that a non-relevant sentence is a distractor
  std::vector<std::string> classes = {"current", "past", "never"};
  std::vector<double> class_proportions;  // empty = uniform
  std::string default_label = "never";
  /// Chance that a document labelled with the default label mentions no
  /// target term at all (such documents are routed to case A).
  double unmentioned_rate = 0.0;
  std::size_t noise_lexicon_size = 300;
  /// Chance that a noise sentence mentions one of the side terms
  /// (anatomical words that are never label-bearing).
  double side_term_rate = 0.3;
  /// Share of relevant sentences that use the critical term ("smoker").
  double critical_term_share = 0.5;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Label-determining frames per class and the label-independent ingredients.
struct SynthTemplates {
  std::map<std::string, std::vector<std::string>> frames;  // class -> frames
  std::vector<std::string> relevant_subjects;
  std::vector<std::string> distractor_subjects;
  std::vector<std::string> noise_subjects;
  std::vector<std::string> core_terms;  // critical term first
  std::vector<std::string> side_terms;

  /// Built-in smoking-status style templates for classes current/past/never.
  static SynthTemplates standard();
};

struct SynthDocument {
  Document document;
  std::vector<SentenceKind> sentence_kinds;
};

struct SynthCorpus {
  SynthConfig config;
  std::vector<SynthDocument> documents;
  std::vector<std::string> vocabulary;        // core target terms
  std::vector<std::string> distractor_terms;  // side terms, never relevant
  /// Ground truth for every entity matched by core and side terms, ordered by
  /// entity id.
  std::vector<RelevanceLabel> relevance;

  DocumentSet corpus() const;
};

SynthCorpus generate(const SynthConfig& config, const SynthTemplates& templates = SynthTemplates::standard());

/// Reads only the relevant sentences of a document and returns the class
/// whose frame they contain; `fallback` when the document has none.
std::string oracle_label(const SynthDocument& doc, const SynthTemplates& templates, const std::string& fallback,
                         const Segmenter& segmenter = Segmenter());

/// Writes corpus.jsonl, relevance.jsonl, vocab.txt and distractor_terms.txt.
void write_synth(const SynthCorpus& synth, const std::filesystem::path& dir);

}  // namespace sparsedoc
