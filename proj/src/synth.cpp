#include "sparsedoc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "sparsedoc/errors.hpp"
#include "sparsedoc/random.hpp"
#include "sparsedoc/text.hpp"
#include "sparsedoc/vocab.hpp"

namespace sparsedoc {

void SynthConfig::validate() const {
  auto in_unit = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (num_documents == 0) throw ValidationError("synth: num_documents must be positive");
  if (sentences_per_document == 0) throw ValidationError("synth: sentences_per_document must be positive");
  if (relevant_per_document > sentences_per_document) {
    throw ValidationError("synth: relevant_per_document exceeds sentences_per_document");
  }
  if (!in_unit(distractor_rate) || !in_unit(side_term_rate) || !in_unit(critical_term_share) ||
      !in_unit(unmentioned_rate)) {
    throw ValidationError("synth: rates must lie in [0, 1]");
  }
  if (classes.size() < 2) throw ValidationError("synth: need at least two classes");
  if (std::set<std::string>(classes.begin(), classes.end()).size() != classes.size()) {
    throw ValidationError("synth: duplicate class names");
  }
  if (std::find(classes.begin(), classes.end(), default_label) == classes.end()) {
    throw ValidationError("synth: default label '" + default_label + "' is not a class");
  }
  if (!class_proportions.empty()) {
    if (class_proportions.size() != classes.size()) {
      throw ValidationError("synth: class_proportions must have one entry per class");
    }
    double total = 0.0;
    for (const double p : class_proportions) {
      if (!(p >= 0.0)) throw ValidationError("synth: class proportions must be non-negative");
      total += p;
    }
    if (total <= 0.0) throw ValidationError("synth: class proportions sum to zero");
  }
  if (noise_lexicon_size < 10) throw ValidationError("synth: noise_lexicon_size must be at least 10");
}

SynthTemplates SynthTemplates::standard() {
  SynthTemplates t;
  t.frames["current"] = {"is an active", "remains a daily", "is a current"};
  t.frames["past"] = {"is a reformed", "quit being a", "stopped being a"};
  t.frames["never"] = {"denies being a", "is not a", "was not ever a"};
  t.relevant_subjects = {"The patient", "She", "He", "Patient"};
  t.distractor_subjects = {"Her father", "His mother", "Her husband", "His wife",
                           "Her brother", "His sister", "The roommate"};
  t.noise_subjects = {"The scan", "The report", "Imaging", "The exam", "Follow-up", "The biopsy", "Review"};
  t.core_terms = {"smoker", "tobacco user", "cigarette user", "nicotine user"};
  t.side_terms = {"left",   "right", "hepatic",    "splenic",   "pelvic",
                  "lumbar", "iliac", "transverse", "ascending", "descending"};
  return t;
}

DocumentSet SynthCorpus::corpus() const {
  DocumentSet out;
  out.reserve(documents.size());
  for (const auto& d : documents) out.push_back(d.document);
  return out;
}

namespace {

std::vector<std::string> words_of(const std::string& s) { return normalized_tokens(s); }

std::vector<std::string> make_lexicon(std::size_t size, const std::set<std::string>& forbidden, Rng& rng) {
  static const std::string consonants = "bdfgklmnprstvz";
  static const std::string vowels = "aeiou";
  std::set<std::string> seen;
  std::vector<std::string> lexicon;
  while (lexicon.size() < size) {
    const std::size_t syllables = 2 + rng.below(2);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += consonants[rng.below(consonants.size())];
      w += vowels[rng.below(vowels.size())];
    }
    if (rng.bernoulli(0.3)) w += consonants[rng.below(consonants.size())];
    if (forbidden.count(w) || !seen.insert(w).second) continue;
    lexicon.push_back(w);
  }
  return lexicon;
}

/// Exact per-class counts: floor of the expected counts, remainders handed
/// out by largest fractional part (lowest class index on ties).
std::vector<std::size_t> class_counts(const SynthConfig& cfg) {
  const std::size_t c = cfg.classes.size();
  std::vector<double> p = cfg.class_proportions.empty() ? std::vector<double>(c, 1.0) : cfg.class_proportions;
  double total = 0.0;
  for (const double v : p) total += v;
  std::vector<std::size_t> counts(c);
  std::vector<std::pair<double, std::size_t>> frac;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < c; ++k) {
    const double expected = p[k] / total * static_cast<double>(cfg.num_documents);
    counts[k] = static_cast<std::size_t>(std::floor(expected));
    assigned += counts[k];
    frac.emplace_back(expected - std::floor(expected), k);
  }
  std::stable_sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < cfg.num_documents; ++i, ++assigned) ++counts[frac[i % c].second];
  return counts;
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string doc_id_for(std::size_t i, std::size_t n) {
  std::string digits = std::to_string(i);
  const std::size_t width = std::max<std::size_t>(4, std::to_string(n > 0 ? n - 1 : 0).size());
  return "doc" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

struct DocBuilder {
  const SynthTemplates& t;
  const SynthConfig& cfg;
  const std::vector<std::string>& lexicon;
  Rng& rng;

  const std::string& core_term() {
    if (t.core_terms.size() == 1 || rng.bernoulli(cfg.critical_term_share)) return t.core_terms.front();
    return t.core_terms[1 + rng.below(t.core_terms.size() - 1)];
  }

  std::string noise_words(std::size_t lo, std::size_t hi) {
    const std::size_t n = lo + rng.below(hi - lo + 1);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
      if (!out.empty()) out += ' ';
      out += rng.pick(lexicon);
    }
    return out;
  }

  std::string random_frame() {
    const auto& cls = cfg.classes[rng.below(cfg.classes.size())];
    return rng.pick(t.frames.at(cls));
  }

  std::string tail() {
    std::string words = noise_words(0, 3);
    return words.empty() ? std::string() : " " + words;
  }

  std::string relevant(const std::string& label) {
    return rng.pick(t.relevant_subjects) + " " + rng.pick(t.frames.at(label)) + " " + core_term() + tail() + ".";
  }

  std::string distractor() {
    return rng.pick(t.distractor_subjects) + " " + random_frame() + " " + core_term() + tail() + ".";
  }

  std::string noise() {
    std::vector<std::string> words;
    const std::size_t n = 4 + rng.below(5);
    for (std::size_t i = 0; i < n; ++i) words.push_back(rng.pick(lexicon));
    if (!t.side_terms.empty() && rng.bernoulli(cfg.side_term_rate)) {
      words[rng.below(words.size())] = rng.pick(t.side_terms);
    }
    std::string out = rng.pick(t.noise_subjects);
    for (const auto& w : words) out += " " + w;
    return out + ".";
  }
};

}  // namespace

SynthCorpus generate(const SynthConfig& config, const SynthTemplates& templates) {
  config.validate();
  for (const auto& cls : config.classes) {
    const auto it = templates.frames.find(cls);
    if (it == templates.frames.end() || it->second.empty()) {
      throw ValidationError("synth: no frames for class '" + cls + "'");
    }
  }
  if (templates.core_terms.empty()) throw ValidationError("synth: no core terms");

  std::set<std::string> forbidden;
  auto forbid = [&](const std::string& s) {
    for (auto& w : words_of(s)) forbidden.insert(w);
  };
  for (const auto& [_, frames] : templates.frames) {
    for (const auto& f : frames) forbid(f);
  }
  for (const auto* list : {&templates.relevant_subjects, &templates.distractor_subjects, &templates.noise_subjects,
                           &templates.core_terms, &templates.side_terms}) {
    for (const auto& s : *list) forbid(s);
  }
  Rng lexicon_rng(derive_seed(config.seed, 0));
  const auto lexicon = make_lexicon(config.noise_lexicon_size, forbidden, lexicon_rng);

  std::vector<std::string> labels;
  const auto counts = class_counts(config);
  for (std::size_t k = 0; k < counts.size(); ++k) labels.insert(labels.end(), counts[k], config.classes[k]);
  Rng label_rng(derive_seed(config.seed, 0x6c6162656c73ULL));
  label_rng.shuffle(labels);

  std::vector<std::string> vocab_lines = templates.core_terms;
  vocab_lines.insert(vocab_lines.end(), templates.side_terms.begin(), templates.side_terms.end());
  const VocabList full_vocab = make_vocab(vocab_lines);
  const Segmenter segmenter;

  SynthCorpus out;
  out.config = config;
  out.vocabulary = templates.core_terms;
  out.distractor_terms = templates.side_terms;
  for (std::size_t i = 0; i < config.num_documents; ++i) {
    Rng rng(derive_seed(config.seed, i + 1));
    DocBuilder b{templates, config, lexicon, rng};
    const std::string& label = labels[i];
    const bool unmentioned = label == config.default_label && rng.bernoulli(config.unmentioned_rate);

    const std::size_t n = config.sentences_per_document;
    std::vector<SentenceKind> kinds(n, SentenceKind::noise);
    if (!unmentioned) {
      std::vector<std::size_t> positions(n);
      for (std::size_t j = 0; j < n; ++j) positions[j] = j;
      rng.shuffle(positions);
      for (std::size_t j = 0; j < config.relevant_per_document; ++j) kinds[positions[j]] = SentenceKind::relevant;
      for (std::size_t j = 0; j < n; ++j) {
        if (kinds[j] == SentenceKind::noise && rng.bernoulli(config.distractor_rate)) {
          kinds[j] = SentenceKind::distractor;
        }
      }
    }

    std::string text;
    for (std::size_t j = 0; j < n; ++j) {
      std::string sentence;
      switch (kinds[j]) {
        case SentenceKind::relevant: sentence = b.relevant(label); break;
        case SentenceKind::distractor: sentence = b.distractor(); break;
        case SentenceKind::noise: sentence = b.noise(); break;
      }
      if (!text.empty()) text += ' ';
      text += capitalize(sentence);
    }

    SynthDocument sd;
    sd.document = {doc_id_for(i, config.num_documents), std::move(text), label};
    sd.sentence_kinds = std::move(kinds);
    const auto sentences = segmenter.segment(sd.document);
    if (sentences.size() != n) {
      throw Error("synth: document " + sd.document.id + " segments into " + std::to_string(sentences.size()) +
                  " sentences instead of " + std::to_string(n));
    }
    for (const auto& e : find_entities(sd.document, sentences, full_vocab)) {
      out.relevance.push_back({e.entity_id, sd.sentence_kinds[e.sentence.index] == SentenceKind::relevant});
    }
    out.documents.push_back(std::move(sd));
  }
  std::sort(out.relevance.begin(), out.relevance.end(),
            [](const RelevanceLabel& a, const RelevanceLabel& b) { return a.entity_id < b.entity_id; });
  return out;
}

std::string oracle_label(const SynthDocument& doc, const SynthTemplates& templates, const std::string& fallback,
                         const Segmenter& segmenter) {
  const auto sentences = segmenter.segment(doc.document);
  for (const auto& s : sentences) {
    if (s.index >= doc.sentence_kinds.size() || doc.sentence_kinds[s.index] != SentenceKind::relevant) continue;
    const std::string text = " " + doc.document.text.substr(s.byte_span.begin, s.byte_span.size()) + " ";
    for (const auto& [cls, frames] : templates.frames) {
      for (const auto& f : frames) {
        if (text.find(" " + f + " ") != std::string::npos) return cls;
      }
    }
  }
  return fallback;
}

void write_synth(const SynthCorpus& synth, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_corpus(synth.corpus(), dir / "corpus.jsonl");
  write_relevance(synth.relevance, dir / "relevance.jsonl");
  for (const auto& [name, lines] :
       {std::pair{"vocab.txt", &synth.vocabulary}, std::pair{"distractor_terms.txt", &synth.distractor_terms}}) {
    std::ofstream f(dir / name);
    if (!f) throw Error("cannot write " + (dir / name).string());
    for (const auto& l : *lines) f << l << '\n';
  }
}

}  // namespace sparsedoc
