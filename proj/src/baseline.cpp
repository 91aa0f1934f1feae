#include "sparsedoc/baseline.hpp"

#include <cmath>

#include "sparsedoc/corpus.hpp"
#include "sparsedoc/errors.hpp"
#include "sparsedoc/text.hpp"

namespace sparsedoc {

Language parse_language(const std::string& name) {
  if (name == "en" || name == "english") return Language::english;
  if (name == "fr" || name == "french") return Language::french;
  throw ValidationError("unknown language '" + name + "' (expected en or fr)");
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; }

bool is_consonant(char c) { return c >= 'a' && c <= 'z' && !is_vowel(c); }

bool has_vowel(std::string_view s) {
  for (const char c : s) {
    if (is_vowel(c)) return true;
  }
  return false;
}

std::string strip_verbal(std::string w) {
  for (const std::string_view suffix : {std::string_view("ing"), std::string_view("ed")}) {
    if (!ends_with(w, suffix) || w.size() - suffix.size() < 3) continue;
    std::string s = w.substr(0, w.size() - suffix.size());
    if (!has_vowel(s)) continue;
    const std::size_t n = s.size();
    if (s[n - 1] == s[n - 2] && is_consonant(s[n - 1]) && s[n - 1] != 'l' && s[n - 1] != 's' && s[n - 1] != 'z') {
      s.pop_back();
    } else if ((n == 3 || n == 4) && is_consonant(s[n - 3]) && is_vowel(s[n - 2]) && is_consonant(s[n - 1]) &&
               s[n - 1] != 'w' && s[n - 1] != 'x' && s[n - 1] != 'y') {
      s.push_back('e');
    }
    return s;
  }
  return w;
}

}  // namespace

std::string stem(std::string_view word, Language lang) {
  std::string w(word);
  if (lang == Language::french) {
    if (ends_with(w, "aux") && w.size() > 4) return w.substr(0, w.size() - 3) + "al";
    if ((ends_with(w, "x") || ends_with(w, "s")) && w.size() > 3) w.pop_back();
    return w;
  }
  if (ends_with(w, "sses")) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "ies") && w.size() > 4) {
    w = w.substr(0, w.size() - 3) + "y";
  } else if (ends_with(w, "ss") || ends_with(w, "us") || ends_with(w, "is")) {
    // kept
  } else if (ends_with(w, "shes") || ends_with(w, "ches") || ends_with(w, "xes") || ends_with(w, "zes")) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "s") && w.size() > 3) {
    w.pop_back();
  }
  return strip_verbal(std::move(w));
}

std::vector<std::string> preprocess(std::string_view text, const StopList& stoplist, Language lang) {
  std::vector<std::string> out;
  for (const auto& tok : normalized_tokens(text)) {
    if (is_punctuation(tok) || stoplist.count(tok)) continue;
    out.push_back(stem(tok, lang));
  }
  return out;
}

void TfidfModel::fit(const std::vector<std::vector<std::string>>& docs) {
  vocabulary_.clear();
  for (const auto& doc : docs) {
    for (const auto& w : doc) vocabulary_.emplace(w, 0);
  }
  std::size_t index = 0;
  for (auto& [_, i] : vocabulary_) i = index++;
  df_.assign(vocabulary_.size(), 0);
  for (const auto& doc : docs) {
    std::vector<bool> seen(vocabulary_.size(), false);
    for (const auto& w : doc) {
      const std::size_t i = vocabulary_.at(w);
      if (!seen[i]) {
        seen[i] = true;
        ++df_[i];
      }
    }
  }
  const auto n = static_cast<double>(docs.size());
  idf_.resize(vocabulary_.size());
  for (std::size_t i = 0; i < idf_.size(); ++i) {
    idf_[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df_[i]))) + 1.0;
  }
  fitted_ = true;
}

SparseRow TfidfModel::transform(const std::vector<std::string>& doc) const {
  if (!fitted_) throw Error("TfidfModel::transform called before fit");
  std::map<std::size_t, double> counts;
  for (const auto& w : doc) {
    const auto it = vocabulary_.find(w);
    if (it != vocabulary_.end()) counts[it->second] += 1.0;
  }
  SparseRow row;
  double norm = 0.0;
  for (const auto& [i, c] : counts) {
    const double v = c * idf_[i];
    row.emplace_back(i, v);
    norm += v * v;
  }
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (auto& [_, v] : row) v /= norm;
  }
  return row;
}

namespace {

Vector logits_of(const LRParams& params, const SparseRow& row) {
  Vector z = params.bias;
  for (const auto& [i, x] : row) {
    if (i < static_cast<std::size_t>(params.weights.cols())) z += x * params.weights.col(static_cast<Eigen::Index>(i));
  }
  return z;
}

Vector softmax(const Vector& z) {
  const Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

LRParams lr_train(const std::vector<SparseRow>& rows, const std::vector<std::size_t>& labels,
                  std::size_t num_classes, std::size_t num_features, const LROptions& options) {
  if (rows.size() != labels.size()) throw ValidationError("lr_train: rows and labels differ in length");
  if (rows.empty()) throw ValidationError("lr_train: empty training set");
  std::vector<bool> present(num_classes, false);
  for (const auto y : labels) {
    if (y >= num_classes) throw ValidationError("lr_train: label out of range");
    present[y] = true;
  }
  std::size_t distinct = 0;
  for (const bool p : present) distinct += p;
  if (distinct < 2) throw ValidationError("lr_train: need at least two classes in the training labels");

  const auto c = static_cast<Eigen::Index>(num_classes);
  LRParams params;
  params.weights = Matrix::Zero(c, static_cast<Eigen::Index>(num_features));
  params.bias = Vector::Zero(c);
  params.l2 = options.l2;
  const double inv_n = 1.0 / static_cast<double>(rows.size());

  Matrix grad_w(c, static_cast<Eigen::Index>(num_features));
  Vector grad_b(c);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    grad_w = options.l2 * params.weights;
    grad_b.setZero();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Vector delta = softmax(logits_of(params, rows[r]));
      delta(static_cast<Eigen::Index>(labels[r])) -= 1.0;
      delta *= inv_n;
      grad_b += delta;
      for (const auto& [i, x] : rows[r]) grad_w.col(static_cast<Eigen::Index>(i)) += x * delta;
    }
    params.weights -= options.learning_rate * grad_w;
    params.bias -= options.learning_rate * grad_b;
  }
  return params;
}

Vector lr_probabilities(const LRParams& params, const SparseRow& row) { return softmax(logits_of(params, row)); }

std::size_t lr_predict(const LRParams& params, const SparseRow& row) {
  const Vector z = logits_of(params, row);
  std::size_t best = 0;
  for (Eigen::Index k = 1; k < z.size(); ++k) {
    if (z(k) > z(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(k);
  }
  return best;
}

}  // namespace sparsedoc
