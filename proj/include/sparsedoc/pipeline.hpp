#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparsedoc/baseline.hpp"
#include "sparsedoc/filter.hpp"
#include "sparsedoc/model.hpp"
#include "sparsedoc/train.hpp"

namespace sparsedoc {

/// Corpus after segmentation, filtering and (optionally) attaching relevance
/// annotations.
struct PreparedCorpus {
  DocumentSet documents;
  std::vector<FilteredDocument> filtered;  // parallel to documents
  std::size_t annotations_supplied = 0;
  std::size_t annotations_matched = 0;

  std::vector<std::string> ids() const;
  /// Filtered documents for the given ids, in the order given.
  std::vector<FilteredDocument> select(const std::vector<std::string>& ids) const;
};

PreparedCorpus prepare_corpus(DocumentSet documents, const VocabList& vocab, const std::string& default_label,
                              const Segmenter& segmenter = Segmenter(),
                              const std::map<std::string, bool>* relevance = nullptr);

struct ModelSpec {
  EncoderMode mode = EncoderMode::builtin;
  EncoderConfig encoder;
  std::size_t min_token_freq = 2;
  std::shared_ptr<const PrecomputedEmbeddings> embeddings;  // precomputed mode
};

/// Token vocabulary over the entity sentences of the given documents.
TokenVocabulary entity_token_vocabulary(const std::vector<FilteredDocument>& docs, std::size_t min_freq);

/// Fresh model whose token vocabulary is built from `train` only.
Model initial_model(const ModelSpec& spec, const std::vector<FilteredDocument>& train,
                    const std::vector<std::string>& classes, std::uint64_t seed);

struct FoldReport {
  std::size_t fold = 0;
  Metrics test;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  std::size_t n_test = 0;
  std::size_t trainable_documents = 0;
  std::size_t annotated_entities = 0;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
};

struct CrossvalReport {
  std::string method;
  std::vector<std::string> classes;
  std::vector<FoldReport> folds;
  double mean_accuracy = 0.0;
  double mean_balanced_accuracy = 0.0;
  Metrics pooled;  // over the concatenated test predictions
};

struct CrossvalOptions {
  std::vector<std::string> classes;
  std::string default_label;
  std::size_t k = 5;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  TrainConfig train;
  ModelSpec model;
};

/// k-fold evaluation of the hierarchical model. Folds are independent and
/// may run on several threads; every fold derives its seeds from `seed` and
/// its index, so results do not depend on the thread count.
CrossvalReport crossval(const PreparedCorpus& corpus, const CrossvalOptions& options);

struct BaselineOptions {
  std::vector<std::string> classes;
  std::size_t k = 5;
  std::uint64_t seed = 42;
  double val_fraction = 0.2;
  Language language = Language::english;
  StopList stoplist;
  LROptions lr;
};

/// TF-IDF + logistic regression over whole documents, on the same folds as
/// crossval() (train and validation ids are both used for fitting).
CrossvalReport baseline_crossval(const DocumentSet& documents, const BaselineOptions& options);

nlohmann::json metrics_json(const Metrics& m, const std::vector<std::string>& classes);
nlohmann::json fold_json(const FoldReport& fold, const std::vector<std::string>& classes);
nlohmann::json summary_json(const CrossvalReport& report);

/// fold_<i>.json for every fold plus summary.json.
void write_crossval(const CrossvalReport& report, const std::filesystem::path& dir);

struct AblationRow {
  std::size_t n = 0;
  std::size_t terms = 0;  // terms actually kept (may be below n)
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
};

/// Cross-validation with the vocabulary truncated to its top-N terms for
/// each N.
std::vector<AblationRow> vocab_ablation(const DocumentSet& documents, const VocabList& vocab,
                                        const std::vector<std::size_t>& sizes, const CrossvalOptions& options,
                                        const Segmenter& segmenter = Segmenter(),
                                        const std::map<std::string, bool>* relevance = nullptr);

std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace sparsedoc
