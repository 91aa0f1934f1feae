#include "sparsedoc/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "sparsedoc/errors.hpp"
#include "sparsedoc/random.hpp"

namespace sparsedoc {

HeadParams HeadParams::init(std::size_t dim, std::vector<std::string> classes, std::uint64_t seed) {
  if (classes.size() < 2) throw ValidationError("a classifier needs at least two classes");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (classes[i] == classes[j]) throw ValidationError("duplicate class '" + classes[i] + "'");
    }
  }
  Rng rng(seed);
  const auto d = static_cast<Eigen::Index>(dim);
  const auto c = static_cast<Eigen::Index>(classes.size());
  HeadParams h;
  h.score_weight.resize(d);
  const double score_bound = std::sqrt(6.0 / static_cast<double>(d + 1));
  for (Eigen::Index i = 0; i < d; ++i) h.score_weight(i) = rng.uniform(-score_bound, score_bound);
  h.score_bias = Vector::Zero(1);
  h.class_weight.resize(c, d);
  const double class_bound = std::sqrt(6.0 / static_cast<double>(d + c));
  for (Eigen::Index i = 0; i < h.class_weight.size(); ++i) h.class_weight.data()[i] = rng.uniform(-class_bound, class_bound);
  h.class_bias = Vector::Zero(c);
  h.classes = std::move(classes);
  return h;
}

HeadParams HeadParams::zeros_like(const HeadParams& other) {
  HeadParams h = other;
  h.score_weight.setZero();
  h.score_bias.setZero();
  h.class_weight.setZero();
  h.class_bias.setZero();
  return h;
}

std::size_t HeadParams::class_index(const std::string& name) const {
  const auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw NotFoundError("unknown class '" + name + "'");
  return static_cast<std::size_t>(it - classes.begin());
}

std::vector<TensorRef> HeadParams::tensors() {
  return {{"head.score_weight", score_weight.data(), static_cast<std::size_t>(score_weight.size())},
          {"head.score_bias", score_bias.data(), 1},
          {"head.class_weight", class_weight.data(), static_cast<std::size_t>(class_weight.size())},
          {"head.class_bias", class_bias.data(), static_cast<std::size_t>(class_bias.size())}};
}

Vector score_entities(std::span<const Vector> entities, const HeadParams& head) {
  if (entities.empty()) throw ValidationError("score_entities needs at least one entity");
  Vector scores(static_cast<Eigen::Index>(entities.size()));
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (entities[i].size() != head.score_weight.size()) throw ValidationError("entity embedding dimension mismatch");
    scores(static_cast<Eigen::Index>(i)) = head.score_weight.dot(entities[i]) + head.score_bias(0);
  }
  return scores;
}

Vector attention_weights(const Vector& scores) {
  if (scores.size() == 0) throw ValidationError("attention_weights needs at least one score");
  const Vector e = (scores.array() - scores.maxCoeff()).exp();
  return e / e.sum();
}

Vector pool(std::span<const Vector> entities, const Vector& weights) {
  if (entities.size() != static_cast<std::size_t>(weights.size())) {
    throw ValidationError("pool: entity and weight counts differ");
  }
  if (entities.empty()) throw ValidationError("pool needs at least one entity");
  Vector out = Vector::Zero(entities.front().size());
  for (std::size_t i = 0; i < entities.size(); ++i) out += weights(static_cast<Eigen::Index>(i)) * entities[i];
  return out;
}

Vector classify(const Vector& doc_embedding, const HeadParams& head) {
  return attention_weights(head.class_weight * doc_embedding + head.class_bias);
}

double classification_loss(const Vector& probs, std::size_t gold, double smoothing) {
  const auto c = static_cast<double>(probs.size());
  double loss = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    const double q = (1.0 - smoothing) * (static_cast<std::size_t>(k) == gold ? 1.0 : 0.0) + smoothing / c;
    if (q > 0.0) loss -= q * std::log(std::max(probs(k), kLogClamp));
  }
  return loss;
}

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double relevance_loss(const Vector& scores, std::span<const std::optional<bool>> annotations) {
  if (annotations.size() != static_cast<std::size_t>(scores.size())) {
    throw ValidationError("relevance_loss: score and annotation counts differ");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    if (!annotations[i]) continue;
    const double r = sigmoid(scores(static_cast<Eigen::Index>(i)));
    total -= *annotations[i] ? std::log(std::max(r, kLogClamp)) : std::log(std::max(1.0 - r, kLogClamp));
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

std::size_t argmax(const Vector& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

HeadForward head_forward(std::span<const Vector> entities, const HeadParams& head) {
  HeadForward f;
  f.scores = score_entities(entities, head);
  f.weights = attention_weights(f.scores);
  f.doc_embedding = pool(entities, f.weights);
  f.logits = head.class_weight * f.doc_embedding + head.class_bias;
  f.probs = attention_weights(f.logits);
  f.predicted = argmax(f.probs);
  return f;
}

LossTerms head_loss(const HeadForward& fwd, std::size_t gold, std::span<const std::optional<bool>> annotations,
                    double smoothing, double relevance_weight) {
  LossTerms t;
  t.classification = classification_loss(fwd.probs, gold, smoothing);
  t.relevance = relevance_loss(fwd.scores, annotations);
  t.annotated = static_cast<std::size_t>(std::count_if(annotations.begin(), annotations.end(),
                                                       [](const auto& a) { return a.has_value(); }));
  t.total = t.classification + relevance_weight * t.relevance;
  return t;
}

std::vector<Vector> head_backward(std::span<const Vector> entities, const HeadParams& head, const HeadForward& fwd,
                                  std::size_t gold, std::span<const std::optional<bool>> annotations,
                                  double smoothing, double relevance_weight, HeadParams& grads) {
  const Eigen::Index n = fwd.scores.size();
  const Eigen::Index c = fwd.probs.size();

  // d loss / d p_k, honouring the log clamp, then back through the softmax.
  Vector d_probs(c);
  for (Eigen::Index k = 0; k < c; ++k) {
    const double q = (1.0 - smoothing) * (static_cast<std::size_t>(k) == gold ? 1.0 : 0.0) +
                     smoothing / static_cast<double>(c);
    d_probs(k) = fwd.probs(k) > kLogClamp ? -q / fwd.probs(k) : 0.0;
  }
  const Vector d_logits = fwd.probs.cwiseProduct(d_probs.array().matrix() - Vector::Constant(c, fwd.probs.dot(d_probs)));

  grads.class_weight += d_logits * fwd.doc_embedding.transpose();
  grads.class_bias += d_logits;
  const Vector d_doc = head.class_weight.transpose() * d_logits;

  Vector d_weights(n);
  for (Eigen::Index i = 0; i < n; ++i) d_weights(i) = entities[static_cast<std::size_t>(i)].dot(d_doc);
  Vector d_scores = fwd.weights.cwiseProduct(d_weights - Vector::Constant(n, fwd.weights.dot(d_weights)));

  if (relevance_weight != 0.0) {
    std::size_t annotated = 0;
    for (const auto& a : annotations) annotated += a.has_value();
    if (annotated > 0) {
      const double w = relevance_weight / static_cast<double>(annotated);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& a = annotations[static_cast<std::size_t>(i)];
        if (!a) continue;
        const double r = sigmoid(fwd.scores(i));
        // Derivative of -log(max(r, clamp)) or -log(max(1 - r, clamp)).
        if (*a) {
          if (r > kLogClamp) d_scores(i) += w * (r - 1.0);
        } else {
          if (1.0 - r > kLogClamp) d_scores(i) += w * r;
        }
      }
    }
  }

  grads.score_bias(0) += d_scores.sum();
  std::vector<Vector> d_entities(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = entities[static_cast<std::size_t>(i)];
    grads.score_weight += d_scores(i) * e;
    d_entities[static_cast<std::size_t>(i)] = fwd.weights(i) * d_doc + d_scores(i) * head.score_weight;
  }
  return d_entities;
}

const char* encoder_mode_name(EncoderMode mode) { return mode == EncoderMode::builtin ? "builtin" : "precomputed"; }

EncoderMode parse_encoder_mode(const std::string& name) {
  if (name == "builtin") return EncoderMode::builtin;
  if (name == "precomputed") return EncoderMode::precomputed;
  throw ValidationError("unknown encoder mode '" + name + "' (expected builtin or precomputed)");
}

Model Model::builtin(TokenVocabulary vocab, const EncoderConfig& config, std::vector<std::string> classes,
                     std::uint64_t seed) {
  Model m;
  m.mode_ = EncoderMode::builtin;
  m.encoder_ = EncoderParams::init(config, vocab.size(), derive_seed(seed, 1));
  m.token_vocab_ = std::move(vocab);
  m.head_ = HeadParams::init(config.dim, std::move(classes), derive_seed(seed, 2));
  return m;
}

Model Model::precomputed(std::shared_ptr<const PrecomputedEmbeddings> table, std::vector<std::string> classes,
                         std::uint64_t seed) {
  if (!table || table->dim() == 0) throw ValidationError("precomputed mode needs a non-empty embedding table");
  Model m;
  m.mode_ = EncoderMode::precomputed;
  m.head_ = HeadParams::init(table->dim(), std::move(classes), derive_seed(seed, 2));
  m.table_ = std::move(table);
  return m;
}

DocumentInput Model::prepare(const FilteredDocument& doc) const {
  DocumentInput in;
  in.doc_id = doc.doc_id;
  if (doc.gold_label) {
    const auto it = std::find(head_.classes.begin(), head_.classes.end(), *doc.gold_label);
    if (it != head_.classes.end()) in.gold = static_cast<std::size_t>(it - head_.classes.begin());
  }
  for (const auto& e : doc.entities) {
    in.entity_ids.push_back(e.entity_id);
    in.annotations.push_back(e.relevance);
  }
  if (mode_ != EncoderMode::builtin) return in;

  const std::size_t max_len = encoder_.config.max_len;
  std::map<std::size_t, std::size_t> unit_of_sentence;
  for (std::size_t i = 0; i < doc.entities.size(); ++i) {
    const auto& e = doc.entities[i];
    const auto& tokens = e.sentence.tokens;
    if (tokens.size() <= max_len) {
      auto [it, fresh] = unit_of_sentence.emplace(e.sentence.index, in.units.size());
      if (fresh) {
        EncodingUnit u;
        u.ids = token_vocab_.ids(tokens);
        in.units.push_back(std::move(u));
      }
      auto& unit = in.units[it->second];
      unit.entity_index.push_back(i);
      unit.spans.emplace_back(e.first, e.last);
    } else {
      const TokenWindow w = window_truncate(tokens.size(), e.first, e.last, max_len);
      EncodingUnit u;
      for (std::size_t t = w.begin; t < w.end; ++t) u.ids.push_back(token_vocab_.id(tokens[t].norm));
      u.entity_index.push_back(i);
      u.spans.emplace_back(w.first, w.last);
      in.units.push_back(std::move(u));
    }
  }
  return in;
}

Model::Forward Model::forward(const DocumentInput& input) const {
  Forward f;
  const std::size_t n = input.entity_ids.size();
  if (n == 0) throw ValidationError("document '" + input.doc_id + "' has no entities (case A is never modelled)");
  f.entities.resize(n);
  if (mode_ == EncoderMode::precomputed) {
    if (!table_) throw ValidationError("precomputed model has no embedding table loaded");
    for (std::size_t i = 0; i < n; ++i) f.entities[i] = table_->lookup(input.entity_ids[i]);
  } else {
    f.units.reserve(input.units.size());
    for (const auto& unit : input.units) {
      f.units.push_back(encode_ids(encoder_, unit.ids));
      const Matrix& out = f.units.back().output;
      for (std::size_t j = 0; j < unit.entity_index.size(); ++j) {
        const auto [first, last] = unit.spans[j];
        Vector sum = out.row(static_cast<Eigen::Index>(first)).transpose();
        for (std::size_t t = first + 1; t <= last; ++t) sum += out.row(static_cast<Eigen::Index>(t)).transpose();
        f.entities[unit.entity_index[j]] = sum / static_cast<double>(last - first + 1);
      }
    }
  }
  f.head = head_forward(f.entities, head_);
  return f;
}

LossTerms Model::loss(const Forward& fwd, const DocumentInput& input, double smoothing,
                      double relevance_weight) const {
  if (!input.gold) throw ValidationError("document '" + input.doc_id + "' has no usable gold label");
  return head_loss(fwd.head, *input.gold, input.annotations, smoothing, relevance_weight);
}

void Model::backward(const Forward& fwd, const DocumentInput& input, double smoothing, double relevance_weight,
                     ModelGrads& grads) const {
  if (!input.gold) throw ValidationError("document '" + input.doc_id + "' has no usable gold label");
  const auto d_entities = head_backward(fwd.entities, head_, fwd.head, *input.gold, input.annotations, smoothing,
                                        relevance_weight, grads.head);
  if (mode_ != EncoderMode::builtin) return;
  for (std::size_t u = 0; u < input.units.size(); ++u) {
    const auto& unit = input.units[u];
    const auto& enc = fwd.units[u];
    Matrix d_out = Matrix::Zero(enc.output.rows(), enc.output.cols());
    for (std::size_t j = 0; j < unit.entity_index.size(); ++j) {
      const auto [first, last] = unit.spans[j];
      const double share = 1.0 / static_cast<double>(last - first + 1);
      for (std::size_t t = first; t <= last; ++t) {
        d_out.row(static_cast<Eigen::Index>(t)) += share * d_entities[unit.entity_index[j]].transpose();
      }
    }
    encode_backward(encoder_, enc, d_out, grads.encoder);
  }
}

std::vector<TensorRef> Model::tensors() {
  std::vector<TensorRef> out;
  if (mode_ == EncoderMode::builtin) out = encoder_.tensors();
  for (auto& t : head_.tensors()) out.push_back(t);
  return out;
}

ModelGrads ModelGrads::zeros_like(const Model& model) {
  ModelGrads g;
  g.has_encoder = model.mode() == EncoderMode::builtin;
  if (g.has_encoder) g.encoder = EncoderParams::zeros_like(model.encoder());
  g.head = HeadParams::zeros_like(model.head());
  return g;
}

std::vector<TensorRef> ModelGrads::tensors() {
  std::vector<TensorRef> out;
  if (has_encoder) out = encoder.tensors();
  for (auto& t : head.tensors()) out.push_back(t);
  return out;
}

void ModelGrads::set_zero() {
  for (auto& t : tensors()) std::fill(t.data, t.data + t.size, 0.0);
}

namespace {

constexpr char kMagic[8] = {'S', 'P', 'D', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
  using nlohmann::json;
  Model& m = const_cast<Model&>(model);  // tensors() hands out mutable views; nothing is written
  const auto tensors = m.tensors();
  json header;
  header["format_version"] = kFormatVersion;
  header["mode"] = encoder_mode_name(model.mode_);
  header["task"] = meta.task;
  header["default_label"] = meta.default_label;
  header["vocab_terms"] = meta.vocab_terms;
  header["embeddings_path"] = meta.embeddings_path;
  header["config_hash"] = meta.config_hash;
  header["classes"] = model.head_.classes;
  header["dim"] = model.head_.dim();
  if (model.mode_ == EncoderMode::builtin) {
    const auto& c = model.encoder_.config;
    header["encoder"] = {{"dim", c.dim}, {"layers", c.layers}, {"heads", c.heads}, {"max_len", c.max_len},
                         {"ffn_mult", c.ffn_mult}};
    header["token_vocab"] = model.token_vocab_.words();
  }
  json shapes = json::array();
  for (const auto& t : tensors) shapes.push_back({{"name", t.name}, {"size", t.size}});
  header["tensors"] = shapes;

  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const auto len = static_cast<std::uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : tensors) {
    out.write(reinterpret_cast<const char*>(t.data), static_cast<std::streamsize>(t.size * sizeof(double)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  using nlohmann::json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ParseError(path.string(), 0, "not a checkpoint");
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw ParseError(path.string(), 0, "truncated header");
  const json header = json::parse(text);
  if (header.at("format_version").get<std::uint32_t>() != kFormatVersion) {
    throw ParseError(path.string(), 0, "unsupported checkpoint version");
  }

  Model m;
  m.mode_ = parse_encoder_mode(header.at("mode").get<std::string>());
  const auto classes = header.at("classes").get<std::vector<std::string>>();
  const auto dim = header.at("dim").get<std::size_t>();
  m.head_ = HeadParams::init(dim, classes, 0);
  if (m.mode_ == EncoderMode::builtin) {
    const auto& e = header.at("encoder");
    EncoderConfig c;
    c.dim = e.at("dim").get<std::size_t>();
    c.layers = e.at("layers").get<std::size_t>();
    c.heads = e.at("heads").get<std::size_t>();
    c.max_len = e.at("max_len").get<std::size_t>();
    c.ffn_mult = e.at("ffn_mult").get<std::size_t>();
    m.token_vocab_ = TokenVocabulary(header.at("token_vocab").get<std::vector<std::string>>());
    m.encoder_ = EncoderParams::init(c, m.token_vocab_.size(), 0);
  }
  auto tensors = m.tensors();
  const auto& shapes = header.at("tensors");
  if (shapes.size() != tensors.size()) throw ParseError(path.string(), 0, "tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (shapes[i].at("name").get<std::string>() != tensors[i].name ||
        shapes[i].at("size").get<std::size_t>() != tensors[i].size) {
      throw ParseError(path.string(), 0, "tensor layout mismatch at " + tensors[i].name);
    }
    in.read(reinterpret_cast<char*>(tensors[i].data), static_cast<std::streamsize>(tensors[i].size * sizeof(double)));
    if (!in) throw ParseError(path.string(), 0, "truncated tensor data");
  }

  CheckpointMeta local;
  CheckpointMeta& md = meta ? *meta : local;
  md.task = header.value("task", "");
  md.default_label = header.value("default_label", "");
  md.vocab_terms = header.value("vocab_terms", std::vector<std::string>{});
  md.embeddings_path = header.value("embeddings_path", "");
  md.config_hash = header.value("config_hash", "");
  if (m.mode_ == EncoderMode::precomputed && !md.embeddings_path.empty() &&
      std::filesystem::exists(md.embeddings_path)) {
    m.table_ = std::make_shared<const PrecomputedEmbeddings>(PrecomputedEmbeddings::load(md.embeddings_path));
  }
  return m;
}

}  // namespace sparsedoc
