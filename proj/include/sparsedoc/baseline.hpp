#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sparsedoc/encoder.hpp"
#include "sparsedoc/vocab.hpp"

namespace sparsedoc {

enum class Language { english, french };

Language parse_language(const std::string& name);

/// Rule-based suffix stripper standing in for lemmatization.
///
/// English, first matching rule wins:
///   sses -> ss; ies -> y (word length > 4); ss, us, is kept;
///   (sh|ch|x|z)es -> drop "es"; s -> drop (length > 3);
///   then ing / ed are dropped when at least three characters remain and the
///   stem has a vowel; a doubled final consonant (not l, s, z) is undoubled,
///   and a short consonant-vowel-consonant stem of length 3 or 4 gets a
///   trailing 'e' back (smoking -> smoke, stopped -> stop).
/// French: aux -> al (length > 4); x -> drop (length > 3); s -> drop (length > 3).
std::string stem(std::string_view word, Language lang);

/// Lowercase, drop punctuation tokens and stopwords, then stem.
std::vector<std::string> preprocess(std::string_view text, const StopList& stoplist, Language lang);

/// Sparse row: (feature index, value), sorted by index.
using SparseRow = std::vector<std::pair<std::size_t, double>>;

class TfidfModel {
 public:
  /// idf = ln((1 + n) / (1 + df)) + 1 over the training documents.
  void fit(const std::vector<std::vector<std::string>>& docs);
  /// Raw counts times idf, L2-normalized; unknown words ignored.
  SparseRow transform(const std::vector<std::string>& doc) const;

  bool fitted() const { return fitted_; }
  std::size_t size() const { return vocabulary_.size(); }
  const std::map<std::string, std::size_t>& vocabulary() const { return vocabulary_; }
  const std::vector<double>& idf() const { return idf_; }
  const std::vector<std::size_t>& document_frequency() const { return df_; }

 private:
  bool fitted_ = false;
  std::map<std::string, std::size_t> vocabulary_;
  std::vector<double> idf_;
  std::vector<std::size_t> df_;
};

struct LROptions {
  double learning_rate = 0.1;
  std::size_t iterations = 500;
  double l2 = 1e-4;
};

struct LRParams {
  Matrix weights;  // C x V
  Vector bias;     // C
  double l2 = 0.0;
};

/// Full-batch gradient descent on mean multinomial cross-entropy plus
/// (l2 / 2) * ||W||^2, starting from zero.
LRParams lr_train(const std::vector<SparseRow>& rows, const std::vector<std::size_t>& labels,
                  std::size_t num_classes, std::size_t num_features, const LROptions& options = {});
Vector lr_probabilities(const LRParams& params, const SparseRow& row);
std::size_t lr_predict(const LRParams& params, const SparseRow& row);

}  // namespace sparsedoc
