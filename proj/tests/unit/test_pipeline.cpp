#include <cmath>
#include <numeric>

#include <doctest.h>

#include "sparsedoc/errors.hpp"
#include "sparsedoc/pipeline.hpp"
#include "sparsedoc/synth.hpp"
#include "test_util.hpp"

using namespace sparsedoc;

namespace {

SynthCorpus small_synth() {
  SynthConfig s;
  s.num_documents = 45;
  s.sentences_per_document = 8;
  s.unmentioned_rate = 0.2;
  s.seed = 3;
  return generate(s);
}

CrossvalOptions small_options() {
  CrossvalOptions o;
  o.classes = {"current", "past", "never"};
  o.default_label = "never";
  o.k = 3;
  o.seed = 17;
  o.train.learning_rate = 1e-3;
  o.train.max_epochs = 3;
  o.train.patience = 2;
  o.model.encoder = EncoderConfig{16, 1, 2, 32, 2};
  o.model.min_token_freq = 1;
  return o;
}

}  // namespace

TEST_CASE("prepare_corpus filters and attaches relevance") {
  const auto synth = small_synth();
  std::map<std::string, bool> rel;
  for (const auto& r : synth.relevance) rel[r.entity_id] = r.relevant;
  rel["ffffffffffffffff"] = true;
  const auto pc = prepare_corpus(synth.corpus(), make_vocab(synth.vocabulary), "never", Segmenter(), &rel);
  CHECK(pc.filtered.size() == 45);
  CHECK(pc.annotations_supplied == rel.size());
  std::size_t entities = 0;
  for (const auto& d : pc.filtered) entities += d.entities.size();
  CHECK(pc.annotations_matched == entities);
  const auto sel = pc.select({pc.ids()[4], pc.ids()[1]});
  CHECK(sel[0].doc_id == pc.ids()[4]);
  CHECK(sel[1].doc_id == pc.ids()[1]);
  CHECK_THROWS_AS(pc.select({"nope"}), NotFoundError);
}

TEST_CASE("crossval covers every document once and its summaries are consistent") {
  const auto synth = small_synth();
  const auto pc = prepare_corpus(synth.corpus(), make_vocab(synth.vocabulary), "never");
  const CrossvalReport r = crossval(pc, small_options());
  REQUIRE(r.folds.size() == 3);
  std::size_t tested = 0;
  double acc = 0.0, bal = 0.0;
  for (const auto& f : r.folds) {
    tested += f.n_test;
    CHECK(f.test.count == f.n_test);
    CHECK(f.n_train + f.n_validation + f.n_test == 45);
    acc += f.test.accuracy;
    bal += f.test.balanced_accuracy;
  }
  CHECK(tested == 45);
  CHECK(r.pooled.count == 45);
  CHECK(r.mean_accuracy == doctest::Approx(acc / 3.0).epsilon(1e-15));
  CHECK(r.mean_balanced_accuracy == doctest::Approx(bal / 3.0).epsilon(1e-15));
  double sq = 0.0;
  for (const auto& f : r.folds) sq += std::pow(f.test.balanced_accuracy - bal / 3.0, 2);
  CHECK(summary_json(r).at("std_balanced_accuracy").get<double>() == doctest::Approx(std::sqrt(sq / 2.0)));
}

TEST_CASE("crossval results do not depend on the thread count") {
  const auto synth = small_synth();
  const auto pc = prepare_corpus(synth.corpus(), make_vocab(synth.vocabulary), "never");
  CrossvalOptions o = small_options();
  const std::string one = summary_json(crossval(pc, o)).dump();
  o.threads = 3;
  CHECK(summary_json(crossval(pc, o)).dump() == one);
}

TEST_CASE("baseline crossval uses the same folds") {
  const auto synth = small_synth();
  BaselineOptions b;
  b.classes = {"current", "past", "never"};
  b.k = 3;
  b.seed = 17;
  const CrossvalReport r = baseline_crossval(synth.corpus(), b);
  const auto pc = prepare_corpus(synth.corpus(), make_vocab(synth.vocabulary), "never");
  const CrossvalReport m = crossval(pc, small_options());
  REQUIRE(r.folds.size() == 3);
  for (std::size_t f = 0; f < 3; ++f) CHECK(r.folds[f].n_test == m.folds[f].n_test);
  CHECK(r.pooled.count == 45);
  CHECK(r.method != m.method);
}

TEST_CASE("write_crossval writes per-fold files and a summary") {
  testutil::TempDir dir;
  CrossvalReport r;
  r.method = "model";
  r.classes = {"a", "b"};
  for (std::size_t f = 0; f < 2; ++f) {
    FoldReport fr;
    fr.fold = f;
    const std::vector<std::size_t> gold = {0, 1}, pred = {0, 0};
    fr.test = compute_metrics(gold, pred, 2);
    r.folds.push_back(fr);
  }
  write_crossval(r, dir.path());
  CHECK(std::filesystem::exists(dir / "fold_0.json"));
  CHECK(std::filesystem::exists(dir / "fold_1.json"));
  const auto summary = nlohmann::json::parse(testutil::read_file(dir / "summary.json"));
  CHECK(summary.at("method") == "model");
}

TEST_CASE("ablation table format") {
  const std::string t = ablation_table({{1, 1, 0.5, 0.25}, {10, 4, 1.0, 1.0}});
  CHECK(t.rfind("N\tterms\taccuracy\tbalanced_accuracy\n", 0) == 0);
  CHECK(std::count(t.begin(), t.end(), '\n') == 3);
}
