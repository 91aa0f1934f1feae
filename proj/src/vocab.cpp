#include "sparsedoc/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>

#include "sparsedoc/errors.hpp"
#include "sparsedoc/text.hpp"

namespace sparsedoc {

std::string TargetTerm::text() const {
  std::string out;
  if (suffix_first) out += '*';
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  if (prefix_last) out += '*';
  return out;
}

bool TargetTerm::same_pattern(const TargetTerm& other) const {
  return tokens == other.tokens && prefix_last == other.prefix_last && suffix_first == other.suffix_first;
}

std::vector<std::string> VocabList::texts() const {
  std::vector<std::string> out;
  out.reserve(terms.size());
  for (const auto& t : terms) out.push_back(t.text());
  return out;
}

TargetTerm parse_term(std::string_view line) {
  std::string body = trim(line);
  TargetTerm term;
  if (!body.empty() && body.front() == '*') {
    term.suffix_first = true;
    body.erase(body.begin());
  }
  if (!body.empty() && body.back() == '*') {
    term.prefix_last = true;
    body.pop_back();
  }
  for (auto& tok : normalized_tokens(body)) {
    if (!is_punctuation(tok)) term.tokens.push_back(std::move(tok));
  }
  if (term.tokens.empty()) throw ValidationError("term '" + std::string(line) + "' has no word tokens");
  return term;
}

VocabList make_vocab(const std::vector<std::string>& lines, VocabSource source, std::string task) {
  VocabList vocab;
  vocab.task = std::move(task);
  vocab.source = source;
  for (const auto& line : lines) {
    TargetTerm term = parse_term(line);
    for (const auto& existing : vocab.terms) {
      if (existing.same_pattern(term)) throw ValidationError("duplicate term '" + term.text() + "'");
    }
    term.rank = vocab.terms.size() + 1;
    vocab.terms.push_back(std::move(term));
  }
  if (vocab.terms.empty()) throw ValidationError("vocabulary is empty");
  return vocab;
}

namespace {

std::vector<std::string> content_lines(const std::filesystem::path& path) {
  std::vector<std::string> out;
  for (const auto& line : read_lines(path)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.push_back(t);
  }
  return out;
}

}  // namespace

VocabList load_vocab(const std::filesystem::path& path) {
  try {
    return make_vocab(content_lines(path), VocabSource::expert_file, path.stem().string());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void save_vocab(const VocabList& vocab, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& term : vocab.terms) out << term.text() << '\n';
}

StopList load_stoplist(const std::filesystem::path& path) {
  StopList words;
  for (const auto& line : content_lines(path)) words.insert(lowercase(line));
  return words;
}

VocabList remove_stopwords(const VocabList& vocab, const StopList& stoplist) {
  VocabList out{vocab.task, {}, vocab.source};
  for (const auto& term : vocab.terms) {
    const bool plain_single = term.tokens.size() == 1 && !term.prefix_last && !term.suffix_first;
    if (plain_single && stoplist.count(term.tokens.front())) continue;
    out.terms.push_back(term);
    out.terms.back().rank = out.terms.size();
  }
  return out;
}

VocabList truncate_top_n(const VocabList& vocab, std::size_t n) {
  if (n == 0) throw ValidationError("truncate_top_n requires n >= 1");
  VocabList out{vocab.task, {}, vocab.source};
  for (const auto& term : vocab.terms) {
    if (term.rank <= n) out.terms.push_back(term);
  }
  return out;
}

VocabList import_related_terms(const std::filesystem::path& path, std::string_view seed) {
  if (!std::filesystem::exists(path)) throw NotFoundError("related-terms file not found: " + path.string());
  VocabList out;
  out.source = VocabSource::related_import;
  out.task = std::string(seed);
  auto add = [&](std::string_view line) {
    TargetTerm term = parse_term(line);
    for (const auto& existing : out.terms) {
      if (existing.same_pattern(term)) return;
    }
    term.rank = out.terms.size() + 1;
    out.terms.push_back(std::move(term));
  };
  add(seed);
  for (const auto& line : content_lines(path)) add(line);
  return out;
}

SegmentedCorpus SegmentedCorpus::build(const DocumentSet& docs, const Segmenter& segmenter) {
  SegmentedCorpus out;
  out.documents.reserve(docs.size());
  for (const auto& doc : docs) out.documents.push_back(segmenter.segment(doc));
  return out;
}

namespace {

using DenseAccumulator = std::map<std::uint32_t, double>;

// Context bag for the occurrence spanning tokens [first, last].
SparseVector occurrence_vector(const std::vector<Token>& tokens, std::size_t first, std::size_t last,
                               const StaticTermEmbedder& embedder) {
  DenseAccumulator bag;
  const std::size_t lo = first >= embedder.window ? first - embedder.window : 0;
  const std::size_t hi = std::min(tokens.size() - 1, last + embedder.window);
  for (std::size_t k = lo; k <= hi; ++k) {
    if (k >= first && k <= last) continue;
    if (is_punctuation(tokens[k].norm)) continue;
    bag[static_cast<std::uint32_t>(fnv1a64(tokens[k].norm) % embedder.dim)] += 1.0;
  }
  double norm = 0.0;
  for (const auto& [_, v] : bag) norm += v * v;
  norm = std::sqrt(norm);
  SparseVector out;
  if (norm == 0.0) return out;
  out.reserve(bag.size());
  for (const auto& [k, v] : bag) out.emplace_back(k, v / norm);
  return out;
}

void accumulate(DenseAccumulator& acc, const SparseVector& v) {
  for (const auto& [k, x] : v) acc[k] += x;
}

SparseVector finish_mean(const DenseAccumulator& acc, std::size_t count) {
  SparseVector out;
  out.reserve(acc.size());
  for (const auto& [k, v] : acc) out.emplace_back(k, v / static_cast<double>(count));
  return out;
}

bool matches_at(const std::vector<Token>& tokens, std::size_t pos, const std::vector<std::string>& term) {
  if (pos + term.size() > tokens.size()) return false;
  for (std::size_t j = 0; j < term.size(); ++j) {
    if (tokens[pos + j].norm != term[j]) return false;
  }
  return true;
}

}  // namespace

SparseVector static_term_embedding(const std::vector<std::string>& term_tokens, const SegmentedCorpus& corpus,
                                   const StaticTermEmbedder& embedder) {
  if (term_tokens.empty()) throw ValidationError("empty term");
  DenseAccumulator acc;
  std::size_t count = 0;
  for (const auto& sentences : corpus.documents) {
    for (const auto& sentence : sentences) {
      for (std::size_t pos = 0; pos < sentence.tokens.size(); ++pos) {
        if (!matches_at(sentence.tokens, pos, term_tokens)) continue;
        accumulate(acc, occurrence_vector(sentence.tokens, pos, pos + term_tokens.size() - 1, embedder));
        ++count;
      }
    }
  }
  if (count == 0) {
    std::string text;
    for (const auto& t : term_tokens) text += (text.empty() ? "" : " ") + t;
    throw NotFoundError("term '" + text + "' does not occur in the corpus");
  }
  return finish_mean(acc, count);
}

double cosine(const SparseVector& a, const SparseVector& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [_, v] : a) na += v * v;
  for (const auto& [_, v] : b) nb += v * v;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first == b[j].first) {
      dot += a[i].second * b[j].second;
      ++i;
      ++j;
    } else if (a[i].first < b[j].first) {
      ++i;
    } else {
      ++j;
    }
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

VocabList expand_from_seed(const TargetTerm& seed, const SegmentedCorpus& corpus, const StaticTermEmbedder& embedder,
                           std::size_t n, const ExpansionOptions& options, std::vector<std::string>* warnings) {
  if (n == 0) throw ValidationError("expand_from_seed requires n >= 1");
  VocabList out;
  out.source = VocabSource::seeded_expansion;
  out.task = seed.text();
  TargetTerm first = seed;
  first.rank = 1;
  out.terms.push_back(first);

  std::vector<SparseVector> selected{static_term_embedding(seed.tokens, corpus, embedder)};
  if (n == 1) return out;

  // Per-word embeddings and frequencies, one pass in corpus order.
  struct WordStats {
    DenseAccumulator acc;
    std::size_t count = 0;
  };
  std::map<std::string, WordStats> stats;
  for (const auto& sentences : corpus.documents) {
    for (const auto& sentence : sentences) {
      for (std::size_t pos = 0; pos < sentence.tokens.size(); ++pos) {
        const auto& norm = sentence.tokens[pos].norm;
        if (is_punctuation(norm)) continue;
        auto& s = stats[norm];
        accumulate(s.acc, occurrence_vector(sentence.tokens, pos, pos, embedder));
        ++s.count;
      }
    }
  }

  struct Candidate {
    std::string word;
    std::size_t freq;
    SparseVector embedding;
  };
  std::vector<Candidate> candidates;
  const bool seed_is_word = seed.tokens.size() == 1;
  for (const auto& [word, s] : stats) {
    if (s.count < options.min_freq || options.stoplist.count(word)) continue;
    if (seed_is_word && word == seed.tokens.front()) continue;
    candidates.push_back({word, s.count, finish_mean(s.acc, s.count)});
  }

  std::vector<bool> taken(candidates.size(), false);
  while (out.terms.size() < n) {
    DenseAccumulator class_acc;
    for (const auto& v : selected) accumulate(class_acc, v);
    const SparseVector class_vector = finish_mean(class_acc, selected.size());

    std::size_t best = candidates.size();
    double best_sim = 0.0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (taken[c]) continue;
      const double sim = cosine(class_vector, candidates[c].embedding);
      if (best == candidates.size() || sim > best_sim ||
          (sim == best_sim && (candidates[c].freq > candidates[best].freq ||
                               (candidates[c].freq == candidates[best].freq &&
                                candidates[c].word < candidates[best].word)))) {
        best = c;
        best_sim = sim;
      }
    }
    if (best == candidates.size()) {
      if (warnings) {
        warnings->push_back("only " + std::to_string(out.terms.size() - 1) + " eligible words for seed '" +
                            seed.text() + "', requested " + std::to_string(n - 1));
      }
      break;
    }
    taken[best] = true;
    TargetTerm term;
    term.tokens = {candidates[best].word};
    term.rank = out.terms.size() + 1;
    out.terms.push_back(std::move(term));
    selected.push_back(candidates[best].embedding);
  }
  return out;
}

}  // namespace sparsedoc
