#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sparsedoc/config.hpp"
#include "sparsedoc/corpus.hpp"
#include "sparsedoc/errors.hpp"
#include "sparsedoc/filter.hpp"
#include "sparsedoc/model.hpp"
#include "sparsedoc/pipeline.hpp"
#include "sparsedoc/synth.hpp"
#include "sparsedoc/train.hpp"
#include "sparsedoc/vocab.hpp"

namespace py = pybind11;
using namespace sparsedoc;

namespace {

py::dict sentence_dict(const Sentence& s, const std::string& text) {
  py::dict d;
  d["index"] = s.index;
  d["char_span"] = py::make_tuple(s.char_span.begin, s.char_span.end);
  d["text"] = text.substr(s.byte_span.begin, s.byte_span.size());
  std::vector<std::string> tokens;
  for (const auto& t : s.tokens) tokens.push_back(t.norm);
  d["tokens"] = tokens;
  return d;
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["balanced_accuracy"] = m.balanced_accuracy;
  d["recall"] = m.recall;
  d["confusion"] = m.confusion;
  d["count"] = m.count;
  return d;
}

RunConfig config_from(const std::map<std::string, std::string>& overrides) {
  RunConfig cfg;
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Keyword-filtered hierarchical classification of long documents";

  // Translators run newest first, so the base class goes in first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NotFoundError>(m, "NotFoundError", PyExc_LookupError);

  m.def(
      "segment",
      [](const std::string& text, const std::string& doc_id) {
        py::list out;
        for (const auto& s : Segmenter().segment(doc_id, text)) out.append(sentence_dict(s, text));
        return out;
      },
      py::arg("text"), py::arg("doc_id") = "doc");

  m.def(
      "tokenize",
      [](const std::string& text) {
        std::vector<std::string> out;
        for (const auto& t : tokenize(text)) out.push_back(t.norm);
        return out;
      },
      py::arg("text"));

  m.def("make_entity_id", &make_entity_id, py::arg("doc_id"), py::arg("sentence_index"), py::arg("first"),
        py::arg("last"), py::arg("term"));

  m.def(
      "filter_text",
      [](const std::string& doc_id, const std::string& text, const std::vector<std::string>& terms,
         const std::string& default_label) {
        const Document doc{doc_id, text, std::nullopt};
        const auto f = route(doc, find_entities(doc, Segmenter().segment(doc), make_vocab(terms)), default_label);
        py::dict d;
        d["route"] = route_name(f.route);
        d["label"] = f.label ? py::cast(*f.label) : py::none();
        py::list entities;
        for (const auto& e : f.entities) {
          py::dict ed;
          ed["entity_id"] = e.entity_id;
          ed["sentence_index"] = e.sentence.index;
          ed["term"] = e.term.text();
          ed["surface"] = e.surface(text);
          ed["token_span"] = py::make_tuple(e.first, e.last);
          const Span h = e.highlight();
          ed["highlight"] = py::make_tuple(h.begin, h.end);
          entities.append(ed);
        }
        d["entities"] = entities;
        return d;
      },
      py::arg("doc_id"), py::arg("text"), py::arg("terms"), py::arg("default_label"));

  m.def(
      "classification_loss",
      [](const std::vector<double>& probs, std::size_t gold, double smoothing) {
        return classification_loss(Eigen::Map<const Vector>(probs.data(), static_cast<Eigen::Index>(probs.size())),
                                   gold, smoothing);
      },
      py::arg("probs"), py::arg("gold"), py::arg("smoothing"));

  m.def(
      "relevance_loss",
      [](const std::vector<double>& scores, const std::vector<std::optional<bool>>& annotations) {
        return relevance_loss(Eigen::Map<const Vector>(scores.data(), static_cast<Eigen::Index>(scores.size())),
                              annotations);
      },
      py::arg("scores"), py::arg("annotations"));

  m.def(
      "compute_metrics",
      [](const std::vector<std::size_t>& gold, const std::vector<std::size_t>& pred, std::size_t num_classes) {
        return metrics_dict(compute_metrics(gold, pred, num_classes));
      },
      py::arg("gold"), py::arg("predicted"), py::arg("num_classes"));

  m.def("default_config", [] { return RunConfig().print(); });

  m.def(
      "generate_synth",
      [](const std::filesystem::path& out, const std::map<std::string, std::string>& overrides) {
        const SynthCorpus synth = generate(config_from(overrides).synth_config());
        write_synth(synth, out);
        return synth.documents.size();
      },
      py::arg("out"), py::arg("config") = std::map<std::string, std::string>{});

  m.def(
      "crossval",
      [](const std::filesystem::path& corpus_path, const std::filesystem::path& vocab_path,
         const std::map<std::string, std::string>& overrides, const std::string& relevance_path) {
        const RunConfig cfg = config_from(overrides);
        std::optional<std::map<std::string, bool>> relevance;
        if (!relevance_path.empty()) relevance = load_relevance(relevance_path);
        CrossvalReport report;
        {
          py::gil_scoped_release release;
          const PreparedCorpus corpus = prepare_corpus(load_corpus(corpus_path), load_vocab(vocab_path),
                                                       cfg.default_label(), Segmenter(),
                                                       relevance ? &*relevance : nullptr);
          CrossvalOptions o;
          o.classes = cfg.classes();
          o.default_label = cfg.default_label();
          o.k = cfg.get_size("crossval.k");
          o.seed = cfg.get_u64("run.seed");
          o.threads = cfg.get_size("run.threads");
          o.train = cfg.train_config(relevance.has_value());
          o.model.encoder = cfg.encoder_config();
          o.model.min_token_freq = cfg.get_size("encoder.min_token_freq");
          report = crossval(corpus, o);
        }
        return summary_json(report).dump();
      },
      py::arg("corpus"), py::arg("vocab"), py::arg("config") = std::map<std::string, std::string>{},
      py::arg("relevance") = "");
}
