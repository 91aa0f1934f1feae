#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sparsedoc/corpus.hpp"

namespace sparsedoc {

/// A ranked target term. A leading or trailing '*' in the source line turns
/// the first (resp. last) token into a suffix (resp. prefix) pattern, which is
/// how word families such as "sigmoid*" or "*ectomy" are written.
struct TargetTerm {
  std::vector<std::string> tokens;
  std::size_t rank = 1;
  bool prefix_last = false;   // "sigmoid*"
  bool suffix_first = false;  // "*ectomy"

  /// Canonical text form, e.g. "anal margin" or "sigmoid*".
  std::string text() const;
  bool same_pattern(const TargetTerm& other) const;
};

enum class VocabSource { expert_file, related_import, seeded_expansion };

struct VocabList {
  std::string task;
  std::vector<TargetTerm> terms;
  VocabSource source = VocabSource::expert_file;

  std::size_t size() const { return terms.size(); }
  std::vector<std::string> texts() const;
};

/// Parses one vocabulary line into a term (rank left at 1).
TargetTerm parse_term(std::string_view line);

/// Builds a list from term strings in rank order; throws ValidationError on
/// duplicates or an empty result.
VocabList make_vocab(const std::vector<std::string>& lines, VocabSource source = VocabSource::expert_file,
                     std::string task = {});

/// One term per line, rank = line order. Blank lines and '#' comments skipped.
VocabList load_vocab(const std::filesystem::path& path);
void save_vocab(const VocabList& vocab, const std::filesystem::path& path);

using StopList = std::set<std::string>;
StopList load_stoplist(const std::filesystem::path& path);

/// Drops single-token terms found in the stoplist and re-compacts ranks.
VocabList remove_stopwords(const VocabList& vocab, const StopList& stoplist);

/// Keeps the terms with rank <= n.
VocabList truncate_top_n(const VocabList& vocab, std::size_t n);

/// Seed at rank 1, then the related terms in file order, de-duplicated.
VocabList import_related_terms(const std::filesystem::path& path, std::string_view seed);

/// Hashed bag-of-context-words embedder used for seeded expansion. Each
/// occurrence is the L2-normalized bag of the word tokens within `window`
/// positions of the term (same sentence, term itself excluded), hashed into
/// `dim` buckets with FNV-1a.
struct StaticTermEmbedder {
  std::size_t window = 5;
  std::size_t dim = 1u << 14;
};

/// Sparse vector as sorted (bucket, value) pairs.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

/// Corpus pre-segmented once so that expansion can scan it repeatedly.
struct SegmentedCorpus {
  std::vector<std::vector<Sentence>> documents;

  static SegmentedCorpus build(const DocumentSet& docs, const Segmenter& segmenter = Segmenter());
};

/// Mean of the occurrence representations of `term`. Throws NotFoundError
/// when the term never occurs.
SparseVector static_term_embedding(const std::vector<std::string>& term_tokens, const SegmentedCorpus& corpus,
                                   const StaticTermEmbedder& embedder = {});

struct ExpansionOptions {
  std::size_t min_freq = 3;
  StopList stoplist;
};

/// Greedy class-vector expansion from a seed term: repeatedly adds the
/// eligible corpus word closest (cosine) to the mean embedding of the terms
/// selected so far. Ties go to higher frequency, then lexicographic order.
/// Warnings (fewer eligible words than requested) are appended to `warnings`
/// when given.
VocabList expand_from_seed(const TargetTerm& seed, const SegmentedCorpus& corpus, const StaticTermEmbedder& embedder,
                           std::size_t n, const ExpansionOptions& options = {},
                           std::vector<std::string>* warnings = nullptr);

double cosine(const SparseVector& a, const SparseVector& b);

}  // namespace sparsedoc
