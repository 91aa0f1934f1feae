// sparsedoc command-line entry point.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sparsedoc/annotate.hpp"
#include "sparsedoc/config.hpp"
#include "sparsedoc/corpus.hpp"
#include "sparsedoc/errors.hpp"
#include "sparsedoc/filter.hpp"
#include "sparsedoc/pipeline.hpp"
#include "sparsedoc/random.hpp"
#include "sparsedoc/synth.hpp"
#include "sparsedoc/text.hpp"
#include "sparsedoc/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sparsedoc;

namespace {

struct Options {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool print_config = false;

  // Shorthands for config keys.
  std::string classes, default_label, vocab, encoder_mode, embeddings, lambda, k;

  std::string corpus, val_corpus, relevance, out, model, filtered, store;
  std::string seed_term, related;
  std::size_t n = 20;
  std::string sizes = "10,20,30,40,50";
  std::string host;
  int port = -1;
};

RunConfig resolve_config(const Options& o) {
  RunConfig cfg;
  if (!o.config_file.empty()) cfg.load_file(o.config_file);
  for (const auto& s : o.sets) cfg.apply_override(s);
  auto maybe = [&](const std::string& value, const char* key) {
    if (!value.empty()) cfg.set(key, value);
  };
  maybe(o.classes, "task.classes");
  maybe(o.default_label, "task.default_label");
  maybe(o.vocab, "task.vocab");
  maybe(o.encoder_mode, "encoder.mode");
  maybe(o.embeddings, "encoder.embeddings");
  maybe(o.lambda, "train.relevance_weight");
  maybe(o.k, "crossval.k");
  if (!o.host.empty()) cfg.set("annotate.host", o.host);
  if (o.port >= 0) cfg.set("annotate.port", std::to_string(o.port));
  if (o.seed) cfg.set("run.seed", std::to_string(*o.seed));
  if (o.threads) cfg.set("run.threads", std::to_string(*o.threads));
  return cfg;
}

Segmenter make_segmenter(const RunConfig& cfg) {
  const std::string& path = cfg.get("task.abbreviations");
  return path.empty() ? Segmenter() : Segmenter::from_file(path);
}

StopList make_stoplist(const RunConfig& cfg) {
  const std::string& path = cfg.get("task.stopwords");
  return load_stoplist(path.empty() ? data_path("stopwords/" + cfg.get("task.language") + ".txt") : fs::path(path));
}

VocabList require_vocab(const RunConfig& cfg) {
  const std::string& path = cfg.get("task.vocab");
  if (path.empty()) throw ValidationError("no vocabulary given (--vocab or task.vocab)");
  VocabList v = load_vocab(path);
  v.task = cfg.get("task.name");
  return v;
}

const std::string& require(const std::string& value, const char* flag) {
  if (value.empty()) throw ValidationError(std::string("missing required option ") + flag);
  return value;
}

ModelSpec make_model_spec(const RunConfig& cfg) {
  ModelSpec spec;
  spec.mode = parse_encoder_mode(cfg.get("encoder.mode"));
  spec.encoder = cfg.encoder_config();
  spec.min_token_freq = cfg.get_size("encoder.min_token_freq");
  if (spec.mode == EncoderMode::precomputed) {
    const std::string& path = cfg.get("encoder.embeddings");
    if (path.empty()) throw ValidationError("precomputed encoder mode needs encoder.embeddings");
    spec.embeddings = std::make_shared<const PrecomputedEmbeddings>(PrecomputedEmbeddings::load(path));
  }
  return spec;
}

std::optional<std::map<std::string, bool>> maybe_relevance(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_relevance(path);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

CrossvalOptions crossval_options(const RunConfig& cfg, bool have_annotations) {
  CrossvalOptions o;
  o.classes = cfg.classes();
  o.default_label = cfg.default_label();
  o.k = cfg.get_size("crossval.k");
  o.seed = cfg.get_u64("run.seed");
  o.threads = cfg.get_size("run.threads");
  o.train = cfg.train_config(have_annotations);
  o.model = make_model_spec(cfg);
  return o;
}

int cmd_segment(const Options& o, const RunConfig& cfg) {
  const auto docs = load_corpus(require(o.corpus, "--corpus"));
  const Segmenter seg = make_segmenter(cfg);
  std::ofstream out(require(o.out, "--out"));
  if (!out) throw Error("cannot write " + o.out);
  for (const auto& d : docs) {
    for (const auto& s : seg.segment(d)) {
      out << json{{"doc_id", d.id},
                  {"index", s.index},
                  {"char_span", {s.char_span.begin, s.char_span.end}},
                  {"text", d.text.substr(s.byte_span.begin, s.byte_span.size())}}
                 .dump()
          << '\n';
    }
  }
  return 0;
}

int cmd_expand_vocab(const Options& o, const RunConfig& cfg) {
  const TargetTerm seed = parse_term(require(o.seed_term, "--seed-term"));
  const StopList stop = make_stoplist(cfg);
  VocabList vocab;
  if (!o.related.empty()) {
    vocab = remove_stopwords(import_related_terms(o.related, o.seed_term), stop);
    if (o.n > 0 && vocab.size() > o.n) vocab = truncate_top_n(vocab, o.n);
  } else {
    const auto docs = load_corpus(require(o.corpus, "--corpus"));
    ExpansionOptions eo;
    eo.stoplist = stop;
    std::vector<std::string> warnings;
    vocab = expand_from_seed(seed, SegmentedCorpus::build(docs, make_segmenter(cfg)), StaticTermEmbedder{}, o.n, eo,
                             &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  }
  save_vocab(vocab, require(o.out, "--out"));
  return 0;
}

int cmd_filter(const Options& o, const RunConfig& cfg) {
  const auto docs = load_corpus(require(o.corpus, "--corpus"));
  const auto filtered = filter_corpus(docs, require_vocab(cfg), cfg.default_label(), make_segmenter(cfg));
  write_filtered(docs, filtered, require(o.out, "--out"));
  return 0;
}

int cmd_train(const Options& o, const RunConfig& cfg) {
  const fs::path out = require(o.out, "--out");
  const VocabList vocab = require_vocab(cfg);
  const auto relevance = maybe_relevance(o.relevance);
  const Segmenter seg = make_segmenter(cfg);
  const std::string default_label = cfg.default_label();
  const auto classes = cfg.classes();
  const std::uint64_t seed = cfg.get_u64("run.seed");
  TrainConfig tc = cfg.train_config(relevance.has_value());

  PreparedCorpus corpus = prepare_corpus(load_corpus(require(o.corpus, "--corpus")), vocab, default_label, seg,
                                         relevance ? &*relevance : nullptr);
  std::vector<FilteredDocument> train, validation;
  if (!o.val_corpus.empty()) {
    train = corpus.filtered;
    validation = prepare_corpus(load_corpus(o.val_corpus), vocab, default_label, seg).filtered;
  } else {
    std::vector<std::string> ids = corpus.ids();
    if (ids.size() < 2) throw ValidationError("need at least two documents to split off a validation set");
    Rng rng(derive_seed(seed, 77));
    rng.shuffle(ids);
    std::size_t n_val = static_cast<std::size_t>(std::llround(tc.val_fraction * static_cast<double>(ids.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, ids.size() - 1);
    validation = corpus.select({ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val)});
    train = corpus.select({ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end()});
  }

  const ModelSpec spec = make_model_spec(cfg);
  TrainResult result = train_model(initial_model(spec, train, classes, derive_seed(seed, 2000)), train, validation,
                                   default_label, tc);
  fs::create_directories(out);
  CheckpointMeta meta{cfg.get("task.name"), default_label, vocab.texts(), cfg.get("encoder.embeddings"), cfg.hash()};
  save_checkpoint(result.best, meta, out / "model.bin");
  write_history(result.history, out / "history.jsonl");
  write_json(out / "train_summary.json",
             {{"best_epoch", result.best_epoch},
              {"epochs", result.history.size()},
              {"train_documents", train.size()},
              {"validation_documents", validation.size()},
              {"trainable_documents", result.trainable_documents},
              {"relevance_weight", tc.relevance_weight},
              {"annotations_supplied", corpus.annotations_supplied},
              {"annotations_matched", corpus.annotations_matched},
              {"annotated_entities", result.annotated_entities},
              {"config_hash", cfg.hash()}});
  std::ofstream(out / "config.ini") << cfg.print();
  return 0;
}

struct LoadedModel {
  Model model;
  CheckpointMeta meta;
};

LoadedModel load_model(const Options& o) {
  LoadedModel m;
  m.model = load_checkpoint(require(o.model, "--model"), &m.meta);
  return m;
}

int cmd_evaluate(const Options& o, const RunConfig& cfg) {
  const auto m = load_model(o);
  const auto docs = load_corpus(require(o.corpus, "--corpus"));
  const auto filtered = filter_corpus(docs, make_vocab(m.meta.vocab_terms), m.meta.default_label, make_segmenter(cfg));
  const Metrics metrics = evaluate(m.model, filtered, m.meta.default_label);
  write_json(require(o.out, "--out"), metrics_json(metrics, m.model.head().classes));
  return 0;
}

int cmd_predict(const Options& o, const RunConfig& cfg) {
  const auto m = load_model(o);
  const auto docs = load_corpus(require(o.corpus, "--corpus"));
  const auto filtered = filter_corpus(docs, make_vocab(m.meta.vocab_terms), m.meta.default_label, make_segmenter(cfg));
  std::ofstream out(require(o.out, "--out"));
  if (!out) throw Error("cannot write " + o.out);
  const auto& classes = m.model.head().classes;
  for (const auto& f : filtered) {
    const Prediction p = predict(m.model, f, m.meta.default_label);
    json j = {{"doc_id", p.doc_id}, {"route", route_name(p.route)}, {"label", classes[p.predicted]}};
    if (p.probs.size() > 0) {
      json probs = json::object();
      for (std::size_t k = 0; k < classes.size(); ++k) probs[classes[k]] = p.probs(static_cast<Eigen::Index>(k));
      j["probs"] = probs;
      json attention = json::array();
      for (std::size_t i = 0; i < f.entities.size(); ++i) {
        attention.push_back({{"entity_id", f.entities[i].entity_id},
                             {"weight", p.weights(static_cast<Eigen::Index>(i))}});
      }
      j["attention"] = attention;
    }
    out << j.dump() << '\n';
  }
  return 0;
}

int cmd_crossval(const Options& o, const RunConfig& cfg) {
  const auto relevance = maybe_relevance(o.relevance);
  const PreparedCorpus corpus = prepare_corpus(load_corpus(require(o.corpus, "--corpus")), require_vocab(cfg),
                                               cfg.default_label(), make_segmenter(cfg),
                                               relevance ? &*relevance : nullptr);
  const CrossvalReport report = crossval(corpus, crossval_options(cfg, relevance.has_value()));
  write_crossval(report, require(o.out, "--out"));
  std::printf("mean accuracy %.4f  mean balanced accuracy %.4f\n", report.mean_accuracy,
              report.mean_balanced_accuracy);
  return 0;
}

int cmd_baseline(const Options& o, const RunConfig& cfg) {
  BaselineOptions b;
  b.classes = cfg.classes();
  b.k = cfg.get_size("crossval.k");
  b.seed = cfg.get_u64("run.seed");
  b.val_fraction = cfg.get_double("train.val_fraction");
  b.language = parse_language(cfg.get("task.language"));
  b.stoplist = make_stoplist(cfg);
  b.lr = cfg.baseline_options();
  const CrossvalReport report = baseline_crossval(load_corpus(require(o.corpus, "--corpus")), b);
  write_crossval(report, require(o.out, "--out"));
  std::printf("mean accuracy %.4f  mean balanced accuracy %.4f\n", report.mean_accuracy,
              report.mean_balanced_accuracy);
  return 0;
}

int cmd_synth_gen(const Options& o, const RunConfig& cfg) {
  write_synth(generate(cfg.synth_config()), require(o.out, "--out"));
  return 0;
}

int cmd_annotate_serve(const Options& o, const RunConfig& cfg) {
  AnnotationService service(load_tasks(require(o.filtered, "--filtered")), require(o.store, "--store"));
  AnnotationServer server(service);
  const std::string host = cfg.get("annotate.host");
  const int port = static_cast<int>(cfg.get_size("annotate.port"));
  const int bound = server.bind(host, port);
  std::fprintf(stderr, "serving %zu tasks (%zu done) on http://%s:%d\n", service.total(), service.done(),
               host.c_str(), bound);
  std::fflush(stderr);
  server.listen();
  return 0;
}

int cmd_vocab_ablation(const Options& o, const RunConfig& cfg) {
  std::vector<std::size_t> sizes;
  for (const auto& s : split(o.sizes, ',')) {
    const std::string t = trim(s);
    if (t.empty()) continue;
    try {
      sizes.push_back(static_cast<std::size_t>(std::stoul(t)));
    } catch (const std::exception&) {
      throw ValidationError("--sizes expects comma-separated integers");
    }
  }
  const auto relevance = maybe_relevance(o.relevance);
  const auto rows = vocab_ablation(load_corpus(require(o.corpus, "--corpus")), require_vocab(cfg), sizes,
                                   crossval_options(cfg, relevance.has_value()), make_segmenter(cfg),
                                   relevance ? &*relevance : nullptr);
  const std::string table = ablation_table(rows);
  std::ofstream out(require(o.out, "--out"));
  if (!out) throw Error("cannot write " + o.out);
  out << table;
  std::fputs(table.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-document classification from sparse, keyword-filtered evidence"};
  Options o;
  app.add_option("--config", o.config_file, "Config file (INI-style sections)");
  app.add_option("--set", o.sets, "Override a config value: section.key=value (repeatable)")
      ->allow_extra_args(false)
      ->take_all();
  app.add_option("--seed", o.seed, "Global random seed");
  app.add_option("--threads", o.threads, "Worker threads for cross-validation folds");
  app.add_flag("--print-config", o.print_config, "Print the merged configuration and exit");
  app.fallthrough();

  auto task_opts = [&](CLI::App* c) {
    c->add_option("--classes", o.classes, "Comma-separated class names");
    c->add_option("--default-label", o.default_label, "Label assigned to documents without target terms");
    c->add_option("--vocab", o.vocab, "Target-term list, one term per line");
  };
  auto model_opts = [&](CLI::App* c) {
    c->add_option("--encoder", o.encoder_mode, "builtin or precomputed");
    c->add_option("--embeddings", o.embeddings, "Precomputed entity embeddings file");
    c->add_option("--lambda", o.lambda, "Relevance loss weight (number or auto)");
    c->add_option("--relevance", o.relevance, "Relevance annotations (JSON lines)");
  };

  std::vector<std::pair<CLI::App*, int (*)(const Options&, const RunConfig&)>> commands;
  auto add = [&](const char* name, const char* help, int (*fn)(const Options&, const RunConfig&)) {
    CLI::App* c = app.add_subcommand(name, help);
    commands.emplace_back(c, fn);
    return c;
  };

  auto* segment = add("segment", "Split documents into sentences", cmd_segment);
  segment->add_option("--corpus", o.corpus, "Corpus (JSON lines)")->required();
  segment->add_option("--out", o.out, "Output sentences (JSON lines)")->required();

  auto* expand = add("expand-vocab", "Build a ranked target-term list from a seed term", cmd_expand_vocab);
  expand->add_option("--seed-term", o.seed_term, "Source target term")->required();
  expand->add_option("--corpus", o.corpus, "Corpus for seeded expansion");
  expand->add_option("--related", o.related, "Related-terms file to import instead of expanding");
  expand->add_option("--n", o.n, "Number of terms to keep")->check(CLI::PositiveNumber);
  expand->add_option("--out", o.out, "Output vocabulary file")->required();

  auto* filter = add("filter", "Route documents and extract target-term entities", cmd_filter);
  task_opts(filter);
  filter->add_option("--corpus", o.corpus, "Corpus (JSON lines)")->required();
  filter->add_option("--out", o.out, "Filtered output (JSON lines)")->required();

  auto* train = add("train", "Train a model on a corpus", cmd_train);
  task_opts(train);
  model_opts(train);
  train->add_option("--corpus", o.corpus, "Training corpus")->required();
  train->add_option("--val-corpus", o.val_corpus, "Validation corpus (default: seeded split of --corpus)");
  train->add_option("--out", o.out, "Output directory")->required();

  auto* evaluate_cmd = add("evaluate", "Score a trained model on a labelled corpus", cmd_evaluate);
  evaluate_cmd->add_option("--model", o.model, "Checkpoint")->required();
  evaluate_cmd->add_option("--corpus", o.corpus, "Labelled corpus")->required();
  evaluate_cmd->add_option("--out", o.out, "Metrics report (JSON)")->required();

  auto* predict_cmd = add("predict", "Label documents with a trained model", cmd_predict);
  predict_cmd->add_option("--model", o.model, "Checkpoint")->required();
  predict_cmd->add_option("--corpus", o.corpus, "Corpus")->required();
  predict_cmd->add_option("--out", o.out, "Predictions (JSON lines)")->required();

  auto* cv = add("crossval", "k-fold cross-validation of the hierarchical model", cmd_crossval);
  task_opts(cv);
  model_opts(cv);
  cv->add_option("--corpus", o.corpus, "Labelled corpus")->required();
  cv->add_option("--k", o.k, "Number of folds");
  cv->add_option("--out", o.out, "Output directory")->required();

  auto* base = add("baseline", "k-fold cross-validation of TF-IDF + logistic regression", cmd_baseline);
  base->add_option("--classes", o.classes, "Comma-separated class names");
  base->add_option("--corpus", o.corpus, "Labelled corpus")->required();
  base->add_option("--k", o.k, "Number of folds");
  base->add_option("--out", o.out, "Output directory")->required();

  auto* synth = add("synth-gen", "Generate a synthetic corpus with relevance ground truth", cmd_synth_gen);
  synth->add_option("--out", o.out, "Output directory")->required();

  auto* serve = add("annotate-serve", "Serve filtered entities for relevance annotation", cmd_annotate_serve);
  serve->add_option("--filtered", o.filtered, "Filtered file written by `filter`")->required();
  serve->add_option("--store", o.store, "Annotation log (created if missing)")->required();
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--port", o.port, "Port")->check(CLI::Range(0, 65535));

  auto* ablation = add("vocab-ablation", "Cross-validation over top-N truncations of the vocabulary",
                       cmd_vocab_ablation);
  task_opts(ablation);
  model_opts(ablation);
  ablation->add_option("--corpus", o.corpus, "Labelled corpus")->required();
  ablation->add_option("--sizes", o.sizes, "Comma-separated N values");
  ablation->add_option("--out", o.out, "Output table (TSV)")->required();

  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  RunConfig cfg;
  try {
    cfg = resolve_config(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (o.print_config) {
      std::fputs(cfg.print().c_str(), stdout);
      return 0;
    }
    for (const auto& [sub, fn] : commands) {
      if (sub->parsed()) return fn(o, cfg);
    }
    std::cerr << "error: a subcommand is required\n\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
