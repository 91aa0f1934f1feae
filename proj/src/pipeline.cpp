#include "sparsedoc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "sparsedoc/errors.hpp"
#include "sparsedoc/random.hpp"

namespace sparsedoc {

std::vector<std::string> PreparedCorpus::ids() const {
  std::vector<std::string> out;
  out.reserve(documents.size());
  for (const auto& d : documents) out.push_back(d.id);
  return out;
}

std::vector<FilteredDocument> PreparedCorpus::select(const std::vector<std::string>& wanted) const {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < filtered.size(); ++i) index.emplace(filtered[i].doc_id, i);
  std::vector<FilteredDocument> out;
  out.reserve(wanted.size());
  for (const auto& id : wanted) {
    const auto it = index.find(id);
    if (it == index.end()) throw NotFoundError("unknown document id '" + id + "'");
    out.push_back(filtered[it->second]);
  }
  return out;
}

PreparedCorpus prepare_corpus(DocumentSet documents, const VocabList& vocab, const std::string& default_label,
                              const Segmenter& segmenter, const std::map<std::string, bool>* relevance) {
  PreparedCorpus out;
  out.filtered = filter_corpus(documents, vocab, default_label, segmenter);
  out.documents = std::move(documents);
  if (relevance) {
    out.annotations_supplied = relevance->size();
    out.annotations_matched = apply_relevance(out.filtered, *relevance);
  }
  return out;
}

TokenVocabulary entity_token_vocabulary(const std::vector<FilteredDocument>& docs, std::size_t min_freq) {
  std::vector<std::vector<Sentence>> sentences;
  for (const auto& doc : docs) {
    std::vector<Sentence> unique;
    for (const auto& e : doc.entities) {
      if (unique.empty() || unique.back().index != e.sentence.index) unique.push_back(e.sentence);
    }
    sentences.push_back(std::move(unique));
  }
  return TokenVocabulary::build(sentences, min_freq);
}

Model initial_model(const ModelSpec& spec, const std::vector<FilteredDocument>& train,
                    const std::vector<std::string>& classes, std::uint64_t seed) {
  if (spec.mode == EncoderMode::precomputed) {
    if (!spec.embeddings) throw ValidationError("precomputed encoder mode needs an embeddings table");
    return Model::precomputed(spec.embeddings, classes, seed);
  }
  return Model::builtin(entity_token_vocabulary(train, spec.min_token_freq), spec.encoder, classes, seed);
}

namespace {

double mean_of(const std::vector<FoldReport>& folds, double Metrics::*field) {
  double s = 0.0;
  for (const auto& f : folds) s += f.test.*field;
  return folds.empty() ? 0.0 : s / static_cast<double>(folds.size());
}

Metrics pooled_metrics(const std::vector<FoldReport>& folds, std::size_t num_classes) {
  std::vector<std::size_t> gold, pred;
  for (const auto& f : folds) {
    for (std::size_t g = 0; g < f.test.confusion.size(); ++g) {
      for (std::size_t p = 0; p < f.test.confusion[g].size(); ++p) {
        gold.insert(gold.end(), f.test.confusion[g][p], g);
        pred.insert(pred.end(), f.test.confusion[g][p], p);
      }
    }
  }
  return compute_metrics(gold, pred, num_classes);
}

void finish(CrossvalReport& report) {
  report.mean_accuracy = mean_of(report.folds, &Metrics::accuracy);
  report.mean_balanced_accuracy = mean_of(report.folds, &Metrics::balanced_accuracy);
  report.pooled = pooled_metrics(report.folds, report.classes.size());
}

/// Runs fn(0..n-1) on up to `threads` workers; the first exception is
/// rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

CrossvalReport crossval(const PreparedCorpus& corpus, const CrossvalOptions& options) {
  const FoldSplit split = kfold_split(corpus.ids(), options.k, options.seed, options.train.val_fraction);
  CrossvalReport report;
  report.method = "hierarchical";
  report.classes = options.classes;
  report.folds.resize(split.folds.size());

  parallel_for(split.folds.size(), options.threads, [&](std::size_t f) {
    const Fold& fold = split.folds[f];
    const auto train = corpus.select(fold.train);
    const auto validation = corpus.select(fold.validation);
    const auto test = corpus.select(fold.test);

    TrainConfig cfg = options.train;
    cfg.seed = derive_seed(options.seed, 1000 + f);
    Model model = initial_model(options.model, train, options.classes, derive_seed(options.seed, 2000 + f));
    TrainResult result = train_model(std::move(model), train, validation, options.default_label, cfg);

    FoldReport& r = report.folds[f];
    r.fold = f;
    r.test = evaluate(result.best, test, options.default_label);
    r.n_train = train.size();
    r.n_validation = validation.size();
    r.n_test = test.size();
    r.trainable_documents = result.trainable_documents;
    r.annotated_entities = result.annotated_entities;
    r.best_epoch = result.best_epoch;
    r.history = std::move(result.history);
  });
  finish(report);
  return report;
}

CrossvalReport baseline_crossval(const DocumentSet& documents, const BaselineOptions& options) {
  std::vector<std::string> ids;
  std::unordered_map<std::string, const Document*> by_id;
  for (const auto& d : documents) {
    ids.push_back(d.id);
    by_id.emplace(d.id, &d);
  }
  auto class_of = [&](const Document& d) -> std::optional<std::size_t> {
    if (!d.label) return std::nullopt;
    const auto it = std::find(options.classes.begin(), options.classes.end(), *d.label);
    if (it == options.classes.end()) return std::nullopt;
    return static_cast<std::size_t>(it - options.classes.begin());
  };

  const FoldSplit split = kfold_split(ids, options.k, options.seed, options.val_fraction);
  CrossvalReport report;
  report.method = "tfidf_lr";
  report.classes = options.classes;
  for (std::size_t f = 0; f < split.folds.size(); ++f) {
    const Fold& fold = split.folds[f];
    std::vector<std::string> fit_ids = fold.train;
    fit_ids.insert(fit_ids.end(), fold.validation.begin(), fold.validation.end());

    std::vector<std::vector<std::string>> fit_tokens;
    std::vector<std::size_t> fit_labels;
    for (const auto& id : fit_ids) {
      const Document& d = *by_id.at(id);
      const auto y = class_of(d);
      if (!y) continue;
      fit_tokens.push_back(preprocess(d.text, options.stoplist, options.language));
      fit_labels.push_back(*y);
    }
    TfidfModel tfidf;
    tfidf.fit(fit_tokens);
    std::vector<SparseRow> rows;
    rows.reserve(fit_tokens.size());
    for (const auto& t : fit_tokens) rows.push_back(tfidf.transform(t));
    const LRParams lr = lr_train(rows, fit_labels, options.classes.size(), tfidf.size(), options.lr);

    std::vector<std::size_t> gold, pred;
    for (const auto& id : fold.test) {
      const Document& d = *by_id.at(id);
      const auto y = class_of(d);
      if (!y) continue;
      gold.push_back(*y);
      pred.push_back(lr_predict(lr, tfidf.transform(preprocess(d.text, options.stoplist, options.language))));
    }
    FoldReport r;
    r.fold = f;
    r.test = compute_metrics(gold, pred, options.classes.size());
    r.n_train = fold.train.size();
    r.n_validation = fold.validation.size();
    r.n_test = fold.test.size();
    r.trainable_documents = fit_tokens.size();
    report.folds.push_back(std::move(r));
  }
  finish(report);
  return report;
}

nlohmann::json metrics_json(const Metrics& m, const std::vector<std::string>& classes) {
  using nlohmann::json;
  json recall = json::object();
  for (std::size_t k = 0; k < classes.size() && k < m.recall.size(); ++k) {
    recall[classes[k]] = std::isnan(m.recall[k]) ? json(nullptr) : json(m.recall[k]);
  }
  return {{"count", m.count},
          {"accuracy", m.accuracy},
          {"balanced_accuracy", m.balanced_accuracy},
          {"recall", recall},
          {"confusion", m.confusion}};
}

nlohmann::json fold_json(const FoldReport& fold, const std::vector<std::string>& classes) {
  using nlohmann::json;
  json history = json::array();
  for (const auto& h : fold.history) {
    history.push_back({{"epoch", h.epoch},
                       {"train_loss", h.train_loss},
                       {"val_accuracy", h.val_accuracy},
                       {"val_balanced_accuracy", h.val_balanced_accuracy}});
  }
  return {{"fold", fold.fold},
          {"n_train", fold.n_train},
          {"n_validation", fold.n_validation},
          {"n_test", fold.n_test},
          {"trainable_documents", fold.trainable_documents},
          {"annotated_entities", fold.annotated_entities},
          {"best_epoch", fold.best_epoch},
          {"test", metrics_json(fold.test, classes)},
          {"history", history}};
}

nlohmann::json summary_json(const CrossvalReport& report) {
  using nlohmann::json;
  json folds = json::array();
  double sq = 0.0;
  for (const auto& f : report.folds) {
    const double d = f.test.balanced_accuracy - report.mean_balanced_accuracy;
    sq += d * d;
    folds.push_back({{"fold", f.fold},
                     {"accuracy", f.test.accuracy},
                     {"balanced_accuracy", f.test.balanced_accuracy},
                     {"best_epoch", f.best_epoch}});
  }
  return {{"method", report.method},
          {"classes", report.classes},
          {"k", report.folds.size()},
          {"mean_accuracy", report.mean_accuracy},
          {"mean_balanced_accuracy", report.mean_balanced_accuracy},
          {"std_balanced_accuracy",
           report.folds.size() > 1 ? std::sqrt(sq / static_cast<double>(report.folds.size() - 1)) : 0.0},
          {"pooled", metrics_json(report.pooled, report.classes)},
          {"folds", folds}};
}

void write_crossval(const CrossvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [](const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
  };
  for (const auto& f : report.folds) {
    write(dir / ("fold_" + std::to_string(f.fold) + ".json"), fold_json(f, report.classes));
  }
  write(dir / "summary.json", summary_json(report));
}

std::vector<AblationRow> vocab_ablation(const DocumentSet& documents, const VocabList& vocab,
                                        const std::vector<std::size_t>& sizes, const CrossvalOptions& options,
                                        const Segmenter& segmenter, const std::map<std::string, bool>* relevance) {
  std::vector<AblationRow> rows;
  for (const std::size_t n : sizes) {
    const VocabList truncated = truncate_top_n(vocab, n);
    const PreparedCorpus corpus = prepare_corpus(documents, truncated, options.default_label, segmenter, relevance);
    const CrossvalReport report = crossval(corpus, options);
    rows.push_back({n, truncated.size(), report.mean_accuracy, report.mean_balanced_accuracy});
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "N\tterms\taccuracy\tbalanced_accuracy\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu\t%zu\t%.4f\t%.4f\n", r.n, r.terms, r.accuracy, r.balanced_accuracy);
    out += buf;
  }
  return out;
}

}  // namespace sparsedoc
