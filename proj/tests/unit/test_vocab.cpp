#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "sparsedoc/errors.hpp"
#include "sparsedoc/random.hpp"
#include "sparsedoc/text.hpp"
#include "sparsedoc/vocab.hpp"
#include "test_util.hpp"

using namespace sparsedoc;

TEST_CASE("load_vocab") {
  testutil::TempDir dir;
  SUBCASE("ranks follow line order") {
    testutil::write_file(dir / "v.txt", "left\nright\n");
    const auto v = load_vocab(dir / "v.txt");
    REQUIRE(v.size() == 2);
    CHECK(v.terms[0].rank == 1);
    CHECK(v.terms[1].rank == 2);
    CHECK(v.texts() == std::vector<std::string>{"left", "right"});
  }
  SUBCASE("multiword term") {
    testutil::write_file(dir / "v.txt", "anal margin\n");
    const auto v = load_vocab(dir / "v.txt");
    REQUIRE(v.size() == 1);
    CHECK(v.terms[0].tokens == std::vector<std::string>{"anal", "margin"});
  }
  SUBCASE("duplicates rejected") {
    testutil::write_file(dir / "v.txt", "smoker\nsmoker\n");
    CHECK_THROWS_AS(load_vocab(dir / "v.txt"), ValidationError);
  }
  SUBCASE("comments and blanks skipped, case folded") {
    testutil::write_file(dir / "v.txt", "# header\n\nSmoker\n");
    CHECK(load_vocab(dir / "v.txt").texts() == std::vector<std::string>{"smoker"});
  }
  SUBCASE("save and reload") {
    const auto v = make_vocab({"sigmoid*", "*ectomy", "cm from the anal margin", "5-FU"});
    save_vocab(v, dir / "out.txt");
    CHECK(load_vocab(dir / "out.txt").texts() == v.texts());
  }
}

TEST_CASE("wildcard patterns") {
  const auto prefix = parse_term("sigmoid*");
  CHECK(prefix.prefix_last);
  CHECK(prefix.tokens == std::vector<std::string>{"sigmoid"});
  const auto suffix = parse_term("*ectomy");
  CHECK(suffix.suffix_first);
  CHECK(suffix.text() == "*ectomy");
}

TEST_CASE("bundled vocabulary lists load") {
  for (const char* name : {"laterality_reduced", "laterality", "laterality_augmented", "surgery_reduced", "surgery",
                           "surgery_augmented", "chemotherapy_further_reduced", "chemotherapy_reduced",
                           "chemotherapy"}) {
    CAPTURE(name);
    CHECK(load_vocab(std::string(SPARSEDOC_DATA_DIR) + "/vocab/" + name + ".txt").size() > 0);
  }
}

TEST_CASE("remove_stopwords") {
  const StopList stop = {"not", "non", "no"};
  CHECK(remove_stopwords(make_vocab({"smoker", "not", "non"}), stop).texts() == std::vector<std::string>{"smoker"});
  CHECK(remove_stopwords(make_vocab({"no information"}), stop).texts() ==
        std::vector<std::string>{"no information"});
  const auto v = make_vocab({"a", "b", "c"});
  CHECK(remove_stopwords(v, {}).texts() == v.texts());
  const auto once = remove_stopwords(make_vocab({"x", "no", "y", "not"}), stop);
  const auto twice = remove_stopwords(once, stop);
  CHECK(once.texts() == twice.texts());
  CHECK(once.terms[1].rank == 2);  // ranks re-compacted
}

TEST_CASE("truncate_top_n") {
  std::vector<std::string> lines;
  for (int i = 0; i < 50; ++i) lines.push_back("t" + std::to_string(i));
  const auto v = make_vocab(lines);
  const auto t30 = truncate_top_n(v, 30);
  REQUIRE(t30.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) CHECK(t30.terms[i].text() == lines[i]);
  CHECK(truncate_top_n(v, 1).texts() == std::vector<std::string>{"t0"});
  CHECK(truncate_top_n(truncate_top_n(v, 10), 50).size() == 10);
  CHECK_THROWS(truncate_top_n(v, 0));
  for (std::size_t a = 1; a <= 55; a += 6) {
    for (std::size_t b = 1; b <= 55; b += 7) {
      CHECK(truncate_top_n(truncate_top_n(v, a), b).texts() == truncate_top_n(v, std::min(a, b)).texts());
    }
  }
}

TEST_CASE("import_related_terms") {
  testutil::TempDir dir;
  testutil::write_file(dir / "r.txt", "smoking\ncigarette\n");
  CHECK(import_related_terms(dir / "r.txt", "smoker").texts() ==
        std::vector<std::string>{"smoker", "smoking", "cigarette"});
  testutil::write_file(dir / "e.txt", "");
  CHECK(import_related_terms(dir / "e.txt", "smoker").texts() == std::vector<std::string>{"smoker"});
  testutil::write_file(dir / "d.txt", "tobacco\nsmoker\ntobacco\n");
  CHECK(import_related_terms(dir / "d.txt", "smoker").texts() == std::vector<std::string>{"smoker", "tobacco"});
  CHECK_THROWS_AS(import_related_terms(dir / "missing.txt", "smoker"), NotFoundError);
}

namespace {

using Dense = std::vector<double>;

// Straightforward re-implementation: dense vectors, explicit loops.
Dense occurrence(const std::vector<Token>& toks, std::size_t first, std::size_t last, std::size_t window,
                 std::size_t dim) {
  Dense v(dim, 0.0);
  for (std::size_t k = 0; k < toks.size(); ++k) {
    if (k >= first && k <= last) continue;
    const std::size_t dist = k < first ? first - k : k - last;
    if (dist > window || is_punctuation(toks[k].norm)) continue;
    v[fnv1a64(toks[k].norm) % dim] += 1.0;
  }
  double n = 0;
  for (double x : v) n += x * x;
  if (n > 0) {
    for (double& x : v) x /= std::sqrt(n);
  }
  return v;
}

Dense dense(const SparseVector& s, std::size_t dim) {
  Dense v(dim, 0.0);
  for (const auto& [k, x] : s) v[k] = x;
  return v;
}

double dense_cos(const Dense& a, const Dense& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return (na == 0 || nb == 0) ? 0.0 : d / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("static_term_embedding") {
  const StaticTermEmbedder emb{2, 64};
  SUBCASE("single occurrence equals its representation") {
    const auto corpus = SegmentedCorpus::build({{"d", "the heavy smoker coughs.", std::nullopt}});
    const auto& toks = corpus.documents[0][0].tokens;
    const Dense expect = occurrence(toks, 2, 2, 2, 64);
    const Dense got = dense(static_term_embedding({"smoker"}, corpus, emb), 64);
    for (std::size_t i = 0; i < 64; ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-15));
  }
  SUBCASE("two identical contexts equal one") {
    const auto one = SegmentedCorpus::build({{"d", "a heavy smoker coughs.", std::nullopt}});
    const auto two = SegmentedCorpus::build({{"d", "a heavy smoker coughs. A heavy smoker coughs.", std::nullopt}});
    const Dense a = dense(static_term_embedding({"smoker"}, one, emb), 64);
    const Dense b = dense(static_term_embedding({"smoker"}, two, emb), 64);
    for (std::size_t i = 0; i < 64; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-15));
  }
  SUBCASE("three occurrences: hand-computed mean") {
    const auto corpus = SegmentedCorpus::build(
        {{"d1", "Old smoker here. Smoker now quit.", std::nullopt}, {"d2", "never a smoker", std::nullopt}});
    Dense mean(64, 0.0);
    int count = 0;
    for (const auto& doc : corpus.documents) {
      for (const auto& s : doc) {
        for (std::size_t k = 0; k < s.tokens.size(); ++k) {
          if (s.tokens[k].norm != "smoker") continue;
          const Dense o = occurrence(s.tokens, k, k, 2, 64);
          for (std::size_t i = 0; i < 64; ++i) mean[i] += o[i];
          ++count;
        }
      }
    }
    REQUIRE(count == 3);
    const Dense got = dense(static_term_embedding({"smoker"}, corpus, emb), 64);
    for (std::size_t i = 0; i < 64; ++i) CHECK(got[i] == doctest::Approx(mean[i] / 3).epsilon(1e-14));
  }
  SUBCASE("absent term") {
    const auto corpus = SegmentedCorpus::build({{"d", "nothing here", std::nullopt}});
    CHECK_THROWS_AS(static_term_embedding({"zzz"}, corpus, emb), NotFoundError);
  }
}

namespace {

// Brute-force greedy expansion over dense vectors.
std::vector<std::string> oracle_expand(const std::string& seed, const SegmentedCorpus& corpus, std::size_t n,
                                       std::size_t window, std::size_t dim, std::size_t min_freq,
                                       const StopList& stop) {
  std::map<std::string, std::pair<Dense, std::size_t>> words;
  for (const auto& doc : corpus.documents) {
    for (const auto& s : doc) {
      for (std::size_t k = 0; k < s.tokens.size(); ++k) {
        const auto& w = s.tokens[k].norm;
        if (is_punctuation(w)) continue;
        auto& [sum, count] = words[w];
        if (sum.empty()) sum.assign(dim, 0.0);
        const Dense o = occurrence(s.tokens, k, k, window, dim);
        for (std::size_t i = 0; i < dim; ++i) sum[i] += o[i];
        ++count;
      }
    }
  }
  auto mean_of = [&](const std::string& w) {
    Dense m = words.at(w).first;
    for (double& x : m) x /= static_cast<double>(words.at(w).second);
    return m;
  };
  std::vector<std::string> out = {seed};
  std::vector<Dense> chosen = {mean_of(seed)};
  while (out.size() < n) {
    Dense cls(dim, 0.0);
    for (const auto& c : chosen) {
      for (std::size_t i = 0; i < dim; ++i) cls[i] += c[i] / static_cast<double>(chosen.size());
    }
    std::string best;
    double best_sim = -2;
    std::size_t best_freq = 0;
    for (const auto& [w, entry] : words) {
      if (entry.second < min_freq || stop.count(w) || std::find(out.begin(), out.end(), w) != out.end()) continue;
      const double sim = dense_cos(cls, mean_of(w));
      const bool better = best.empty() || sim > best_sim + 1e-12 ||
                          (std::abs(sim - best_sim) <= 1e-12 &&
                           (entry.second > best_freq || (entry.second == best_freq && w < best)));
      if (better) {
        best = w;
        best_sim = sim;
        best_freq = entry.second;
      }
    }
    if (best.empty()) break;
    out.push_back(best);
    chosen.push_back(mean_of(best));
  }
  return out;
}

}  // namespace

TEST_CASE("expand_from_seed") {
  const StaticTermEmbedder emb{3, 256};
  SUBCASE("co-occurring word is selected first") {
    DocumentSet docs;
    for (int i = 0; i < 6; ++i) {
      docs.push_back({"a" + std::to_string(i), "she is a heavy smoker daily. he is a heavy tobacco daily.", {}});
      docs.push_back({"b" + std::to_string(i), "the kidney shows a small lesion today.", {}});
    }
    const auto corpus = SegmentedCorpus::build(docs);
    ExpansionOptions opt;
    opt.min_freq = 3;
    opt.stoplist = {"she", "he", "is", "a", "the", "heavy", "daily"};
    const auto v = expand_from_seed(parse_term("smoker"), corpus, emb, 2, opt);
    CHECK(v.texts() == std::vector<std::string>{"smoker", "tobacco"});
  }
  SUBCASE("n = 1 gives just the seed") {
    const auto corpus = SegmentedCorpus::build({{"d", "a smoker", {}}});
    CHECK(expand_from_seed(parse_term("smoker"), corpus, emb, 1).texts() == std::vector<std::string>{"smoker"});
  }
  SUBCASE("absent seed") {
    const auto corpus = SegmentedCorpus::build({{"d", "a smoker", {}}});
    CHECK_THROWS_AS(expand_from_seed(parse_term("zzz"), corpus, emb, 3), NotFoundError);
  }
  SUBCASE("too few eligible words warns and returns all") {
    const auto corpus = SegmentedCorpus::build({{"d", "smoker one two. smoker one two.", {}}});
    ExpansionOptions opt;
    opt.min_freq = 2;
    std::vector<std::string> warnings;
    const auto v = expand_from_seed(parse_term("smoker"), corpus, emb, 10, opt, &warnings);
    CHECK(v.size() == 3);
    CHECK(warnings.size() == 1);
  }
  SUBCASE("matches the brute-force oracle on random corpora") {
    Rng rng(9);
    const std::vector<std::string> lex = {"smoker", "tobacco", "pack", "year", "cough", "lung", "left", "right",
                                          "colon", "kidney", "quit", "daily", "heavy", "light", "report"};
    for (int trial = 0; trial < 8; ++trial) {
      DocumentSet docs;
      for (int d = 0; d < 12; ++d) {
        std::string text;
        const std::size_t sentences = 1 + rng.below(4);
        for (std::size_t s = 0; s < sentences; ++s) {
          const std::size_t words = 2 + rng.below(8);
          for (std::size_t w = 0; w < words; ++w) text += rng.pick(lex) + " ";
          text += "smoker. ";
        }
        docs.push_back({"d" + std::to_string(d), text, {}});
      }
      const auto corpus = SegmentedCorpus::build(docs);
      ExpansionOptions opt;
      opt.min_freq = 2;
      opt.stoplist = {"report"};
      const std::size_t n = 1 + rng.below(12);
      const auto got = expand_from_seed(parse_term("smoker"), corpus, emb, n, opt).texts();
      CHECK(got == oracle_expand("smoker", corpus, n, 3, 256, 2, opt.stoplist));
      REQUIRE(!got.empty());
      CHECK(got.front() == "smoker");
    }
  }
}
