#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparsedoc/encoder.hpp"
#include "sparsedoc/filter.hpp"

namespace sparsedoc {

/// Attention scorer (shared across entities) and document classifier.
struct HeadParams {
  Vector score_weight;      // d
  Vector score_bias;        // size 1
  Matrix class_weight;      // C x d
  Vector class_bias;        // C
  std::vector<std::string> classes;

  static HeadParams init(std::size_t dim, std::vector<std::string> classes, std::uint64_t seed);
  static HeadParams zeros_like(const HeadParams& other);

  std::size_t dim() const { return static_cast<std::size_t>(score_weight.size()); }
  std::size_t num_classes() const { return classes.size(); }
  std::size_t class_index(const std::string& name) const;
  std::vector<TensorRef> tensors();
};

/// Log arguments are clamped to at least this value.
inline constexpr double kLogClamp = 1e-12;

/// S_i = w_s . e_i + b_s
Vector score_entities(std::span<const Vector> entities, const HeadParams& head);
/// Max-subtracted softmax.
Vector attention_weights(const Vector& scores);
/// sum_i W_i e_i
Vector pool(std::span<const Vector> entities, const Vector& weights);
/// softmax(W_c z + b_c)
Vector classify(const Vector& doc_embedding, const HeadParams& head);

/// Cross-entropy against the label-smoothed target
/// q_k = (1 - eps) [k == gold] + eps / C.
double classification_loss(const Vector& probs, std::size_t gold, double smoothing);

/// Mean binary cross-entropy of sigmoid(S_i) over annotated entities; 0 when
/// nothing is annotated.
double relevance_loss(const Vector& scores, std::span<const std::optional<bool>> annotations);

std::size_t argmax(const Vector& v);

struct HeadForward {
  Vector scores;
  Vector weights;
  Vector doc_embedding;
  Vector logits;
  Vector probs;
  std::size_t predicted = 0;
};

HeadForward head_forward(std::span<const Vector> entities, const HeadParams& head);

struct LossTerms {
  double classification = 0.0;
  double relevance = 0.0;
  double total = 0.0;
  std::size_t annotated = 0;
};

LossTerms head_loss(const HeadForward& fwd, std::size_t gold, std::span<const std::optional<bool>> annotations,
                    double smoothing, double relevance_weight);

/// Exact gradients of head_loss().total. Head gradients accumulate into
/// `grads`; per-entity gradients are returned.
std::vector<Vector> head_backward(std::span<const Vector> entities, const HeadParams& head, const HeadForward& fwd,
                                  std::size_t gold, std::span<const std::optional<bool>> annotations,
                                  double smoothing, double relevance_weight, HeadParams& grads);

enum class EncoderMode { builtin, precomputed };

const char* encoder_mode_name(EncoderMode mode);
EncoderMode parse_encoder_mode(const std::string& name);

/// One encoder call: a (possibly windowed) sentence and the entity spans it
/// serves.
struct EncodingUnit {
  std::vector<std::int32_t> ids;
  std::vector<std::size_t> entity_index;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
};

/// A case_b document prepared for the model.
struct DocumentInput {
  std::string doc_id;
  std::optional<std::size_t> gold;
  std::vector<std::string> entity_ids;
  std::vector<std::optional<bool>> annotations;
  std::vector<EncodingUnit> units;  // built-in encoder only
};

struct ModelGrads;
struct CheckpointMeta;

/// Encoder + head for one classification task.
class Model {
 public:
  Model() = default;

  static Model builtin(TokenVocabulary vocab, const EncoderConfig& config, std::vector<std::string> classes,
                       std::uint64_t seed);
  static Model precomputed(std::shared_ptr<const PrecomputedEmbeddings> table, std::vector<std::string> classes,
                           std::uint64_t seed);

  EncoderMode mode() const { return mode_; }
  const HeadParams& head() const { return head_; }
  HeadParams& head() { return head_; }
  const EncoderParams& encoder() const { return encoder_; }
  EncoderParams& encoder() { return encoder_; }
  const TokenVocabulary& token_vocab() const { return token_vocab_; }
  const PrecomputedEmbeddings* table() const { return table_.get(); }
  void set_table(std::shared_ptr<const PrecomputedEmbeddings> table) { table_ = std::move(table); }
  std::size_t dim() const { return head_.dim(); }

  /// Converts the entities of a case_b document into model input.
  DocumentInput prepare(const FilteredDocument& doc) const;

  struct Forward {
    std::vector<EncoderForward> units;
    std::vector<Vector> entities;
    HeadForward head;
  };

  Forward forward(const DocumentInput& input) const;
  LossTerms loss(const Forward& fwd, const DocumentInput& input, double smoothing, double relevance_weight) const;
  /// Accumulates gradients of the total loss for one document.
  void backward(const Forward& fwd, const DocumentInput& input, double smoothing, double relevance_weight,
                ModelGrads& grads) const;

  /// All trainable tensors (encoder first when built-in, then head).
  std::vector<TensorRef> tensors();

  friend void save_checkpoint(const Model&, const CheckpointMeta&, const std::filesystem::path&);
  friend Model load_checkpoint(const std::filesystem::path&, CheckpointMeta*);

 private:
  EncoderMode mode_ = EncoderMode::builtin;
  TokenVocabulary token_vocab_;
  EncoderParams encoder_;
  HeadParams head_;
  std::shared_ptr<const PrecomputedEmbeddings> table_;
};

struct ModelGrads {
  EncoderParams encoder;
  HeadParams head;
  bool has_encoder = false;

  static ModelGrads zeros_like(const Model& model);
  std::vector<TensorRef> tensors();
  void set_zero();
};

/// Everything besides the tensors that a checkpoint needs to be usable.
struct CheckpointMeta {
  std::string task;
  std::string default_label;
  std::vector<std::string> vocab_terms;
  std::string embeddings_path;  // precomputed mode
  std::string config_hash;
};

/// Binary container: magic "SPDCKPT1", u32 header length, JSON header
/// (metadata, shapes, token vocabulary), then every tensor as little-endian
/// IEEE-754 doubles in tensors() order.
void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace sparsedoc
