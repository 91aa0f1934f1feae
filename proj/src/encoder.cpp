#include "sparsedoc/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>

#include "sparsedoc/errors.hpp"
#include "sparsedoc/random.hpp"
#include "sparsedoc/text.hpp"

namespace sparsedoc {

namespace {

constexpr double kLayerNormEps = 1e-5;

void layer_norm(const Matrix& x, const Vector& gain, const Vector& bias, Matrix& xhat, Vector& rstd, Matrix& y) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  xhat.resize(rows, cols);
  rstd.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    rstd(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = (x.row(r).array() - mean) * rstd(r);
  }
  y = (xhat.array().rowwise() * gain.transpose().array()).rowwise() + bias.transpose().array();
}

void layer_norm_backward(const Matrix& dy, const Matrix& xhat, const Vector& rstd, const Vector& gain, Matrix& dx,
                         Vector& dgain, Vector& dbias) {
  dgain += dy.cwiseProduct(xhat).colwise().sum().transpose();
  dbias += dy.colwise().sum().transpose();
  const Matrix dxhat = dy.array().rowwise() * gain.transpose().array();
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).mean();
    const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
    dx.row(r).array() += rstd(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
  }
}

void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

void fill_uniform(Matrix& m, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
}

Matrix xavier(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  Matrix m(fan_in, fan_out);
  fill_uniform(m, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
  return m;
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

void EncoderConfig::validate() const {
  if (dim == 0 || layers == 0 || heads == 0 || max_len == 0 || ffn_mult == 0) {
    throw ValidationError("encoder dimensions must be positive");
  }
  if (dim % heads != 0) throw ValidationError("encoder dim must be divisible by the head count");
}

TokenVocabulary::TokenVocabulary() : TokenVocabulary(std::vector<std::string>{}) {}

TokenVocabulary::TokenVocabulary(std::vector<std::string> words) {
  words_ = {"<pad>", "<unk>"};
  for (auto& w : words) {
    if (w == "<pad>" || w == "<unk>") continue;
    words_.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<std::int32_t>(i));
}

TokenVocabulary TokenVocabulary::build(const std::vector<std::vector<Sentence>>& documents, std::size_t min_freq) {
  std::map<std::string, std::size_t> counts;
  for (const auto& sentences : documents) {
    for (const auto& s : sentences) {
      for (const auto& t : s.tokens) ++counts[t.norm];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, c] : counts) {
    if (c >= min_freq) kept.emplace_back(w, c);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, _] : kept) words.push_back(w);
  return TokenVocabulary(std::move(words));
}

std::int32_t TokenVocabulary::id(const std::string& norm) const {
  const auto it = index_.find(norm);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::int32_t> TokenVocabulary::ids(const std::vector<Token>& tokens) const {
  std::vector<std::int32_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t.norm));
  return out;
}

EncoderParams EncoderParams::init(const EncoderConfig& config, std::size_t vocab_size, std::uint64_t seed) {
  config.validate();
  const auto d = static_cast<Eigen::Index>(config.dim);
  const auto f = static_cast<Eigen::Index>(config.dim * config.ffn_mult);
  Rng rng(seed);
  EncoderParams p;
  p.config = config;
  p.token_table.resize(static_cast<Eigen::Index>(vocab_size), d);
  fill_uniform(p.token_table, 0.05, rng);
  p.positions.resize(static_cast<Eigen::Index>(config.max_len), d);
  fill_uniform(p.positions, 0.05, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    EncoderLayer layer;
    layer.wq = xavier(d, d, rng);
    layer.wk = xavier(d, d, rng);
    layer.wv = xavier(d, d, rng);
    layer.wo = xavier(d, d, rng);
    layer.bq = layer.bk = layer.bv = layer.bo = Vector::Zero(d);
    layer.ln1_gain = layer.ln2_gain = Vector::Ones(d);
    layer.ln1_bias = layer.ln2_bias = Vector::Zero(d);
    layer.w1 = xavier(d, f, rng);
    layer.b1 = Vector::Zero(f);
    layer.w2 = xavier(f, d, rng);
    layer.b2 = Vector::Zero(d);
    p.layers.push_back(std::move(layer));
  }
  p.final_gain = Vector::Ones(d);
  p.final_bias = Vector::Zero(d);
  return p;
}

EncoderParams EncoderParams::zeros_like(const EncoderParams& other) {
  EncoderParams p = other;
  for (auto& t : p.tensors()) std::fill(t.data, t.data + t.size, 0.0);
  return p;
}

std::vector<TensorRef> EncoderParams::tensors() {
  std::vector<TensorRef> out;
  auto add = [&](std::string name, auto& t) { out.push_back({std::move(name), t.data(), static_cast<std::size_t>(t.size())}); };
  add("encoder.token_table", token_table);
  add("encoder.positions", positions);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& L = layers[l];
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    add(p + "wq", L.wq);
    add(p + "bq", L.bq);
    add(p + "wk", L.wk);
    add(p + "bk", L.bk);
    add(p + "wv", L.wv);
    add(p + "bv", L.bv);
    add(p + "wo", L.wo);
    add(p + "bo", L.bo);
    add(p + "ln1_gain", L.ln1_gain);
    add(p + "ln1_bias", L.ln1_bias);
    add(p + "ln2_gain", L.ln2_gain);
    add(p + "ln2_bias", L.ln2_bias);
    add(p + "w1", L.w1);
    add(p + "b1", L.b1);
    add(p + "w2", L.w2);
    add(p + "b2", L.b2);
  }
  add("encoder.final_gain", final_gain);
  add("encoder.final_bias", final_bias);
  return out;
}

EncoderForward encode_ids(const EncoderParams& params, std::span<const std::int32_t> ids) {
  const auto& cfg = params.config;
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (ids.empty()) throw ValidationError("cannot encode an empty token sequence");
  if (ids.size() > cfg.max_len) throw ValidationError("token sequence longer than max_len");
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const auto heads = static_cast<Eigen::Index>(cfg.heads);
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  EncoderForward fwd;
  fwd.ids.assign(ids.begin(), ids.end());
  Matrix x(n, d);
  for (Eigen::Index t = 0; t < n; ++t) {
    std::int32_t id = ids[static_cast<std::size_t>(t)];
    if (id < 0 || id >= params.token_table.rows()) id = TokenVocabulary::kUnk;
    fwd.ids[static_cast<std::size_t>(t)] = id;
    x.row(t) = params.token_table.row(id) + params.positions.row(t);
  }

  fwd.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& L = params.layers[l];
    auto& c = fwd.layers[l];
    c.x_in = x;
    layer_norm(c.x_in, L.ln1_gain, L.ln1_bias, c.xhat1, c.rstd1, c.h1);
    c.q = (c.h1 * L.wq).rowwise() + L.bq.transpose();
    c.k = (c.h1 * L.wk).rowwise() + L.bk.transpose();
    c.v = (c.h1 * L.wv).rowwise() + L.bv.transpose();
    c.ctx.resize(n, d);
    c.probs.resize(static_cast<std::size_t>(heads));
    for (Eigen::Index h = 0; h < heads; ++h) {
      Matrix s = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose() * scale;
      softmax_rows(s);
      c.ctx.middleCols(h * dh, dh) = s * c.v.middleCols(h * dh, dh);
      c.probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    c.x_mid = c.x_in + ((c.ctx * L.wo).rowwise() + L.bo.transpose());
    layer_norm(c.x_mid, L.ln2_gain, L.ln2_bias, c.xhat2, c.rstd2, c.h2);
    c.f_pre = (c.h2 * L.w1).rowwise() + L.b1.transpose();
    c.f_act = c.f_pre.unaryExpr([](double v) { return gelu(v); });
    x = c.x_mid + ((c.f_act * L.w2).rowwise() + L.b2.transpose());
  }
  fwd.x_last = x;
  layer_norm(fwd.x_last, params.final_gain, params.final_bias, fwd.xhat_final, fwd.rstd_final, fwd.output);
  return fwd;
}

void encode_backward(const EncoderParams& params, const EncoderForward& fwd, const Matrix& d_output,
                     EncoderParams& grads) {
  const auto& cfg = params.config;
  const Eigen::Index n = fwd.output.rows();
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const auto heads = static_cast<Eigen::Index>(cfg.heads);
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dx = Matrix::Zero(n, d);
  layer_norm_backward(d_output, fwd.xhat_final, fwd.rstd_final, params.final_gain, dx, grads.final_gain,
                      grads.final_bias);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& L = params.layers[li];
    auto& G = grads.layers[li];
    const auto& c = fwd.layers[li];

    // Feed-forward residual branch.
    Matrix d_mid = dx;
    G.w2 += c.f_act.transpose() * dx;
    G.b2 += dx.colwise().sum().transpose();
    Matrix d_act = dx * L.w2.transpose();
    Matrix d_pre = d_act.cwiseProduct(c.f_pre.unaryExpr([](double v) { return gelu_grad(v); }));
    G.w1 += c.h2.transpose() * d_pre;
    G.b1 += d_pre.colwise().sum().transpose();
    const Matrix d_h2 = d_pre * L.w1.transpose();
    layer_norm_backward(d_h2, c.xhat2, c.rstd2, L.ln2_gain, d_mid, G.ln2_gain, G.ln2_bias);

    // Attention residual branch.
    Matrix d_in = d_mid;
    G.wo += c.ctx.transpose() * d_mid;
    G.bo += d_mid.colwise().sum().transpose();
    const Matrix d_ctx = d_mid * L.wo.transpose();
    Matrix dq(n, d), dk(n, d), dv(n, d);
    for (Eigen::Index h = 0; h < heads; ++h) {
      const Matrix& p = c.probs[static_cast<std::size_t>(h)];
      const auto d_head = d_ctx.middleCols(h * dh, dh);
      dv.middleCols(h * dh, dh) = p.transpose() * d_head;
      const Matrix dp = d_head * c.v.middleCols(h * dh, dh).transpose();
      Matrix ds = p.cwiseProduct(dp);
      const Vector row_dot = ds.rowwise().sum();
      ds -= p.cwiseProduct(row_dot.replicate(1, n));
      ds *= scale;
      dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh);
    }
    G.wq += c.h1.transpose() * dq;
    G.bq += dq.colwise().sum().transpose();
    G.wk += c.h1.transpose() * dk;
    G.bk += dk.colwise().sum().transpose();
    G.wv += c.h1.transpose() * dv;
    G.bv += dv.colwise().sum().transpose();
    const Matrix d_h1 = dq * L.wq.transpose() + dk * L.wk.transpose() + dv * L.wv.transpose();
    layer_norm_backward(d_h1, c.xhat1, c.rstd1, L.ln1_gain, d_in, G.ln1_gain, G.ln1_bias);
    dx = std::move(d_in);
  }

  for (Eigen::Index t = 0; t < n; ++t) {
    grads.token_table.row(fwd.ids[static_cast<std::size_t>(t)]) += dx.row(t);
    grads.positions.row(t) += dx.row(t);
  }
}

std::vector<Vector> encode_sentence(const Sentence& sentence, const TokenVocabulary& vocab,
                                    const EncoderParams& params) {
  const auto ids = vocab.ids(sentence.tokens);
  const auto fwd = encode_ids(params, ids);
  std::vector<Vector> out;
  out.reserve(ids.size());
  for (Eigen::Index t = 0; t < fwd.output.rows(); ++t) out.emplace_back(fwd.output.row(t).transpose());
  return out;
}

Vector entity_embedding(std::span<const Vector> token_embeddings, std::size_t first, std::size_t last) {
  if (last < first) throw ValidationError("empty entity span");
  if (last >= token_embeddings.size()) throw ValidationError("entity span out of bounds");
  Vector sum = token_embeddings[first];
  for (std::size_t i = first + 1; i <= last; ++i) sum += token_embeddings[i];
  return sum / static_cast<double>(last - first + 1);
}

TokenWindow window_truncate(std::size_t n_tokens, std::size_t first, std::size_t last, std::size_t max_len) {
  if (last < first || last >= n_tokens) throw ValidationError("entity span out of bounds");
  if (last - first + 1 > max_len) throw ValidationError("entity span longer than max_len");
  if (n_tokens <= max_len) return {0, n_tokens, first, last};
  const std::size_t center = (first + last) / 2;
  const std::size_t half = max_len / 2;
  std::size_t begin = center > half ? center - half : 0;
  begin = std::min(begin, first);
  if (last + 1 > max_len) begin = std::max(begin, last + 1 - max_len);
  begin = std::min(begin, n_tokens - max_len);
  return {begin, begin + max_len, first - begin, last - begin};
}

PrecomputedEmbeddings PrecomputedEmbeddings::load(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path.string(), 0, "empty embedding file");
  const std::string header = trim(lines.front());
  if (header.rfind("dim=", 0) != 0) throw ParseError(path.string(), 1, "expected header 'dim=<d>'");
  char* end = nullptr;
  const long dim = std::strtol(header.c_str() + 4, &end, 10);
  if (dim <= 0 || *end != '\0') throw ParseError(path.string(), 1, "invalid dimension");
  PrecomputedEmbeddings out(static_cast<std::size_t>(dim));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split(lines[i], ',');
    if (fields.size() - 1 != out.dim_) {
      throw ParseError(path.string(), i + 1,
                       "expected " + std::to_string(out.dim_) + " values, got " + std::to_string(fields.size() - 1));
    }
    Vector v(dim);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      const std::string f = trim(fields[j]);
      char* e = nullptr;
      v(static_cast<Eigen::Index>(j - 1)) = std::strtod(f.c_str(), &e);
      if (f.empty() || *e != '\0') throw ParseError(path.string(), i + 1, "bad number '" + f + "'");
    }
    const std::string id = trim(fields[0]);
    if (out.contains(id)) throw ParseError(path.string(), i + 1, "duplicate entity id '" + id + "'");
    out.insert(id, std::move(v));
  }
  return out;
}

void PrecomputedEmbeddings::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "dim=" << dim_ << '\n';
  char buf[40];
  for (const auto& id : order_) {
    out << id;
    for (const double x : table_.at(id)) {
      std::snprintf(buf, sizeof(buf), ",%.17g", x);
      out << buf;
    }
    out << '\n';
  }
}

void PrecomputedEmbeddings::insert(const std::string& entity_id, Vector v) {
  if (static_cast<std::size_t>(v.size()) != dim_) throw ValidationError("embedding dimension mismatch");
  if (!v.allFinite()) throw ValidationError("non-finite embedding for '" + entity_id + "'");
  if (table_.emplace(entity_id, std::move(v)).second) order_.push_back(entity_id);
}

const Vector& PrecomputedEmbeddings::lookup(const std::string& entity_id) const {
  const auto it = table_.find(entity_id);
  if (it == table_.end()) throw NotFoundError("no precomputed embedding for entity '" + entity_id + "'");
  return it->second;
}

}  // namespace sparsedoc
