#include <cmath>
#include <vector>

#include <doctest.h>

#include "gradcheck.hpp"
#include "sparsedoc/encoder.hpp"
#include "sparsedoc/errors.hpp"
#include "sparsedoc/random.hpp"
#include "test_util.hpp"

using namespace sparsedoc;

namespace {

using Grid = std::vector<std::vector<double>>;

EncoderConfig small_config() {
  EncoderConfig c;
  c.dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.max_len = 12;
  c.ffn_mult = 2;
  return c;
}

/// Replaces every parameter (biases and gains included) with random values
/// so that every path of the network carries signal.
void randomize(EncoderParams& p, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& t : p.tensors()) {
    const bool gain = t.name.find("gain") != std::string::npos;
    for (std::size_t i = 0; i < t.size; ++i) t.data[i] = (gain ? 1.0 : 0.0) + rng.uniform(-0.4, 0.4);
  }
}

Grid to_grid(const Matrix& m) {
  Grid g(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) g[r][c] = m(r, c);
  return g;
}

Grid matmul(const Grid& a, const Matrix& w, const Vector& b) {
  Grid out(a.size(), std::vector<double>(static_cast<std::size_t>(w.cols())));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      double s = b(j);
      for (std::size_t k = 0; k < a[i].size(); ++k) s += a[i][k] * w(static_cast<Eigen::Index>(k), j);
      out[i][j] = s;
    }
  return out;
}

Grid layer_norm_ref(const Grid& x, const Vector& gain, const Vector& bias) {
  Grid out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(x[i].size());
    double mean = 0.0;
    for (double v : x[i]) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= n;
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      out[i][j] = (x[i][j] - mean) / std::sqrt(var + 1e-5) * gain(j) + bias(j);
    }
  }
  return out;
}

/// Plain-loop forward pass written directly from the layer equations.
Grid reference_forward(const EncoderParams& p, const std::vector<std::int32_t>& ids) {
  const std::size_t n = ids.size();
  const std::size_t d = p.config.dim;
  const std::size_t heads = p.config.heads;
  const std::size_t dh = d / heads;
  Grid x(n, std::vector<double>(d));
  for (std::size_t t = 0; t < n; ++t) {
    const std::int32_t id = (ids[t] < 0 || ids[t] >= p.token_table.rows()) ? 1 : ids[t];
    for (std::size_t j = 0; j < d; ++j) x[t][j] = p.token_table(id, j) + p.positions(t, j);
  }
  for (const auto& L : p.layers) {
    const Grid h1 = layer_norm_ref(x, L.ln1_gain, L.ln1_bias);
    const Grid q = matmul(h1, L.wq, L.bq), k = matmul(h1, L.wk, L.bk), v = matmul(h1, L.wv, L.bv);
    Grid ctx(n, std::vector<double>(d, 0.0));
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(n);
        double mx = -1e300;
        for (std::size_t j = 0; j < n; ++j) {
          double dot = 0.0;
          for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) dot += q[i][e] * k[j][e];
          s[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (auto& sj : s) z += (sj = std::exp(sj - mx));
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) ctx[i][e] += s[j] / z * v[j][e];
      }
    }
    const Grid attn = matmul(ctx, L.wo, L.bo);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) x[i][j] += attn[i][j];
    const Grid h2 = layer_norm_ref(x, L.ln2_gain, L.ln2_bias);
    Grid f = matmul(h2, L.w1, L.b1);
    for (auto& row : f)
      for (auto& val : row) val = 0.5 * val * (1.0 + std::erf(val / std::sqrt(2.0)));
    const Grid ff = matmul(f, L.w2, L.b2);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) x[i][j] += ff[i][j];
  }
  return layer_norm_ref(x, p.final_gain, p.final_bias);
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

double weighted_output(const EncoderParams& p, const std::vector<std::int32_t>& ids, const Matrix& upstream) {
  return encode_ids(p, ids).output.cwiseProduct(upstream).sum();
}

}  // namespace

TEST_CASE("encoder forward matches a plain-loop reference") {
  const EncoderConfig cfg = small_config();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    EncoderParams p = EncoderParams::init(cfg, 7, seed);
    randomize(p, seed + 100);
    const std::vector<std::int32_t> ids = {2, 5, 1, 6, 6, 3, 99, -4};
    const Matrix out = encode_ids(p, ids).output;
    const Grid ref = reference_forward(p, ids);
    REQUIRE(out.rows() == 8);
    REQUIRE(out.cols() == 8);
    const Grid got = to_grid(out);
    for (std::size_t i = 0; i < ref.size(); ++i)
      for (std::size_t j = 0; j < ref[i].size(); ++j) CHECK(got[i][j] == doctest::Approx(ref[i][j]).epsilon(1e-9));
  }
}

TEST_CASE("encoder forward is deterministic and maps unknown ids to UNK") {
  EncoderParams p = EncoderParams::init(small_config(), 5, 3);
  const std::vector<std::int32_t> a = {2, 3, 400};
  const std::vector<std::int32_t> b = {2, 3, TokenVocabulary::kUnk};
  const auto fa = encode_ids(p, a);
  CHECK(fa.output == encode_ids(p, a).output);
  CHECK(fa.output == encode_ids(p, b).output);
  CHECK(fa.ids[2] == TokenVocabulary::kUnk);
}

TEST_CASE("encoder rejects empty and over-long inputs") {
  EncoderParams p = EncoderParams::init(small_config(), 5, 3);
  CHECK_THROWS_AS(encode_ids(p, std::vector<std::int32_t>{}), ValidationError);
  CHECK_THROWS_AS(encode_ids(p, std::vector<std::int32_t>(13, 2)), ValidationError);
  CHECK_NOTHROW(encode_ids(p, std::vector<std::int32_t>(12, 2)));
}

TEST_CASE("encoder config validation") {
  EncoderConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = small_config();
  c.dim = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("encode_backward matches central finite differences for every tensor") {
  const EncoderConfig cfg = small_config();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    EncoderParams p = EncoderParams::init(cfg, 6, seed);
    randomize(p, seed * 7);
    std::vector<std::int32_t> ids;
    Rng rng(seed);
    const std::size_t n = 2 + rng.below(6);
    for (std::size_t t = 0; t < n; ++t) ids.push_back(static_cast<std::int32_t>(2 + rng.below(4)));
    const Matrix upstream = random_matrix(static_cast<Eigen::Index>(n), 8, seed + 50);

    EncoderParams grads = EncoderParams::zeros_like(p);
    encode_backward(p, encode_ids(p, ids), upstream, grads);
    const auto checks = testutil::finite_difference_check(p.tensors(), grads.tensors(),
                                                          [&] { return weighted_output(p, ids, upstream); });
    for (const auto& c : checks) {
      INFO(c.name << " seed " << seed << " rel " << c.rel_error << " max " << c.max_abs_diff);
      CHECK(c.rel_error <= 1e-4);
    }
  }
}

TEST_CASE("encoder gradients: zero upstream gives zero, unused rows stay zero, accumulation adds") {
  EncoderParams p = EncoderParams::init(small_config(), 6, 9);
  randomize(p, 10);
  const std::vector<std::int32_t> ids = {2, 3, 2};
  const auto fwd = encode_ids(p, ids);

  EncoderParams zero = EncoderParams::zeros_like(p);
  encode_backward(p, fwd, Matrix::Zero(3, 8), zero);
  for (auto& t : zero.tensors())
    for (std::size_t i = 0; i < t.size; ++i) CHECK(t.data[i] == 0.0);

  const Matrix up = random_matrix(3, 8, 4);
  EncoderParams once = EncoderParams::zeros_like(p);
  encode_backward(p, fwd, up, once);
  for (Eigen::Index r : {0, 1, 4, 5}) CHECK(once.token_table.row(r).isZero(0.0));
  CHECK(!once.token_table.row(2).isZero(0.0));
  for (Eigen::Index r = 3; r < 12; ++r) CHECK(once.positions.row(r).isZero(0.0));

  EncoderParams twice = EncoderParams::zeros_like(p);
  encode_backward(p, fwd, up, twice);
  encode_backward(p, fwd, up, twice);
  auto a = once.tensors();
  auto b = twice.tensors();
  for (std::size_t g = 0; g < a.size(); ++g)
    for (std::size_t i = 0; i < a[g].size; ++i) CHECK(b[g].data[i] == doctest::Approx(2.0 * a[g].data[i]));
}

TEST_CASE("entity_embedding averages the span") {
  const std::vector<Vector> toks = {Vector::Constant(2, 1.0), Vector::Constant(2, 3.0), Vector::Constant(2, 8.0)};
  CHECK(entity_embedding(toks, 0, 1).isApprox(Vector::Constant(2, 2.0)));
  CHECK(entity_embedding(toks, 2, 2).isApprox(Vector::Constant(2, 8.0)));
  CHECK(entity_embedding(toks, 0, 2).isApprox(Vector::Constant(2, 4.0)));
  CHECK_THROWS_AS(entity_embedding(toks, 2, 1), ValidationError);
  CHECK_THROWS_AS(entity_embedding(toks, 1, 3), ValidationError);
}

TEST_CASE("window_truncate examples") {
  const TokenWindow w = window_truncate(200, 100, 100, 128);
  CHECK(w.begin == 36);
  CHECK(w.end == 164);
  CHECK(w.first == 64);
  CHECK(w.last == 64);

  const TokenWindow s = window_truncate(200, 0, 0, 128);
  CHECK(s.begin == 0);
  CHECK(s.end == 128);
  CHECK(s.first == 0);

  const TokenWindow e = window_truncate(200, 199, 199, 128);
  CHECK(e.begin == 72);
  CHECK(e.end == 200);
  CHECK(e.first == 127);

  const TokenWindow id = window_truncate(50, 3, 5, 128);
  CHECK(id.begin == 0);
  CHECK(id.end == 50);
  CHECK(id.first == 3);
  CHECK(id.last == 5);

  CHECK_THROWS_AS(window_truncate(10, 4, 10, 8), ValidationError);
  CHECK_THROWS_AS(window_truncate(300, 0, 200, 128), ValidationError);
}

TEST_CASE("window_truncate property: window is in bounds, has max_len tokens and keeps the span") {
  Rng rng(2024);
  for (int trial = 0; trial < 5000; ++trial) {
    const std::size_t max_len = 1 + rng.below(40);
    const std::size_t n = 1 + rng.below(120);
    const std::size_t len = 1 + rng.below(std::min(n, max_len));
    const std::size_t first = rng.below(n - len + 1);
    const std::size_t last = first + len - 1;
    const TokenWindow w = window_truncate(n, first, last, max_len);
    CHECK(w.end <= n);
    CHECK(w.end - w.begin == std::min(n, max_len));
    CHECK(w.begin <= first);
    CHECK(last < w.end);
    CHECK(w.first == first - w.begin);
    CHECK(w.last == last - w.begin);
  }
}

TEST_CASE("precomputed embeddings: load, lookup and errors") {
  testutil::TempDir dir;
  testutil::write_file(dir / "ok.txt", "dim=3\nabc,1,2,3\ndef,0.5,-1,2e-1\n");
  const auto table = PrecomputedEmbeddings::load(dir / "ok.txt");
  CHECK(table.dim() == 3);
  CHECK(table.size() == 2);
  CHECK(table.lookup("def")(1) == -1.0);
  CHECK(table.lookup("def")(2) == doctest::Approx(0.2));
  CHECK_THROWS_AS(table.lookup("zzz"), NotFoundError);

  testutil::write_file(dir / "mixed.txt", "dim=3\nabc,1,2,3\ndef,1,2\n");
  CHECK_THROWS_AS(PrecomputedEmbeddings::load(dir / "mixed.txt"), ParseError);
  testutil::write_file(dir / "dup.txt", "dim=2\nabc,1,2\nabc,1,2\n");
  CHECK_THROWS_AS(PrecomputedEmbeddings::load(dir / "dup.txt"), ParseError);
  testutil::write_file(dir / "nohdr.txt", "abc,1,2\n");
  CHECK_THROWS_AS(PrecomputedEmbeddings::load(dir / "nohdr.txt"), ParseError);
  testutil::write_file(dir / "empty.txt", "");
  CHECK_THROWS_AS(PrecomputedEmbeddings::load(dir / "empty.txt"), ParseError);

  PrecomputedEmbeddings t(2);
  CHECK_THROWS_AS(t.insert("x", Vector::Ones(3)), ValidationError);
}

TEST_CASE("precomputed embeddings round trip through save and load") {
  testutil::TempDir dir;
  PrecomputedEmbeddings t(3);
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    Vector v(3);
    for (int j = 0; j < 3; ++j) v(j) = rng.uniform(-10, 10);
    t.insert("e" + std::to_string(i), v);
  }
  t.save(dir / "t.txt");
  const auto back = PrecomputedEmbeddings::load(dir / "t.txt");
  REQUIRE(back.size() == 20);
  for (int i = 0; i < 20; ++i) {
    const std::string id = "e" + std::to_string(i);
    CHECK(back.lookup(id) == t.lookup(id));
  }
}

TEST_CASE("token vocabulary build orders by frequency then text") {
  Segmenter seg;
  const Document d1{"d1", "b a c", std::nullopt};
  const Document d2{"d2", "a b a", std::nullopt};
  const Document d3{"d3", "c d", std::nullopt};
  const auto vocab = TokenVocabulary::build({seg.segment(d1), seg.segment(d2), seg.segment(d3)}, 2);
  REQUIRE(vocab.size() == 5);
  CHECK(vocab.words()[0] == "<pad>");
  CHECK(vocab.words()[2] == "a");
  CHECK(vocab.words()[3] == "b");
  CHECK(vocab.words()[4] == "c");
  CHECK(vocab.id("d") == TokenVocabulary::kUnk);
  CHECK(vocab.id("a") == 2);
}
