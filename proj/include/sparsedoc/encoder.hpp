#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "sparsedoc/corpus.hpp"

namespace sparsedoc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Flat view over one parameter tensor, used by the optimizer, checkpoint
/// I/O and gradient checks.
struct TensorRef {
  std::string name;
  double* data;
  std::size_t size;
};

struct EncoderConfig {
  std::size_t dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t max_len = 128;
  std::size_t ffn_mult = 4;

  void validate() const;
};

/// Word-level vocabulary for the built-in encoder. Row 0 is PAD, row 1 UNK.
class TokenVocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;

  TokenVocabulary();
  explicit TokenVocabulary(std::vector<std::string> words);

  /// Normalized tokens with frequency >= min_freq, ordered by descending
  /// frequency then lexicographically.
  static TokenVocabulary build(const std::vector<std::vector<Sentence>>& documents, std::size_t min_freq = 2);

  std::int32_t id(const std::string& norm) const;
  std::vector<std::int32_t> ids(const std::vector<Token>& tokens) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int32_t> index_;
};

struct EncoderLayer {
  Matrix wq, wk, wv, wo;  // d x d
  Vector bq, bk, bv, bo;
  Vector ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Matrix w1;  // d x (ffn_mult*d)
  Vector b1;
  Matrix w2;  // (ffn_mult*d) x d
  Vector b2;
};

struct EncoderParams {
  EncoderConfig config;
  Matrix token_table;  // V x d
  Matrix positions;    // max_len x d
  std::vector<EncoderLayer> layers;
  Vector final_gain, final_bias;

  /// Tables uniform(-0.05, 0.05), matrices Xavier-uniform, biases zero,
  /// layer-norm gains one.
  static EncoderParams init(const EncoderConfig& config, std::size_t vocab_size, std::uint64_t seed);
  static EncoderParams zeros_like(const EncoderParams& other);

  std::vector<TensorRef> tensors();
  std::size_t vocab_size() const { return static_cast<std::size_t>(token_table.rows()); }
};

/// Activations kept by the forward pass for the backward pass.
struct LayerCache {
  Matrix x_in, xhat1, h1, q, k, v, ctx, x_mid, xhat2, h2, f_pre, f_act;
  Vector rstd1, rstd2;
  std::vector<Matrix> probs;  // one L x L matrix per head
};

struct EncoderForward {
  std::vector<std::int32_t> ids;
  std::vector<LayerCache> layers;
  Matrix x_last, xhat_final;
  Vector rstd_final;
  Matrix output;  // L x d
};

/// Pre-norm transformer forward pass over token ids (length <= max_len).
EncoderForward encode_ids(const EncoderParams& params, std::span<const std::int32_t> ids);

/// Reverse-mode pass; accumulates into `grads` (same shapes as params).
void encode_backward(const EncoderParams& params, const EncoderForward& fwd, const Matrix& d_output,
                     EncoderParams& grads);

/// One vector per token of the sentence.
std::vector<Vector> encode_sentence(const Sentence& sentence, const TokenVocabulary& vocab,
                                    const EncoderParams& params);

/// Mean of the token vectors over [first, last].
Vector entity_embedding(std::span<const Vector> token_embeddings, std::size_t first, std::size_t last);

/// Token window [begin, end) of a long sentence and the re-indexed span.
struct TokenWindow {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t first = 0;
  std::size_t last = 0;
};

/// Identity when n_tokens <= max_len; otherwise a max_len window centred on
/// the span, shifted to stay in bounds.
TokenWindow window_truncate(std::size_t n_tokens, std::size_t first, std::size_t last, std::size_t max_len);

/// Frozen entity_id -> vector table loaded from a precomputed-embedding file.
/// Format: first line "dim=<d>", then "entity_id,v1,...,vd" per line.
class PrecomputedEmbeddings {
 public:
  static PrecomputedEmbeddings load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  void insert(const std::string& entity_id, Vector v);
  const Vector& lookup(const std::string& entity_id) const;
  bool contains(const std::string& entity_id) const { return table_.count(entity_id) > 0; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return table_.size(); }

  explicit PrecomputedEmbeddings(std::size_t dim = 0) : dim_(dim) {}

 private:
  std::size_t dim_;
  std::unordered_map<std::string, Vector> table_;
  std::vector<std::string> order_;
};

double gelu(double x);
double gelu_grad(double x);

}  // namespace sparsedoc
