#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include <doctest.h>

#include "sparsedoc/errors.hpp"
#include "sparsedoc/random.hpp"
#include "sparsedoc/train.hpp"
#include "test_util.hpp"

using namespace sparsedoc;

namespace {

const std::vector<std::string> kClasses = {"current", "past", "never"};

/// Brute-force metrics straight from the definitions.
void reference_metrics(const std::vector<std::size_t>& gold, const std::vector<std::size_t>& pred, std::size_t c,
                       double& accuracy, double& balanced) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == pred[i];
  accuracy = gold.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold.size());
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t total = 0, hit = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (gold[i] != k) continue;
      ++total;
      hit += pred[i] == k;
    }
    if (total == 0) continue;
    ++present;
    sum += static_cast<double>(hit) / static_cast<double>(total);
  }
  balanced = present ? sum / static_cast<double>(present) : 0.0;
}

/// Documents whose single entity vector encodes the class on one axis.
struct Toy {
  std::shared_ptr<PrecomputedEmbeddings> table = std::make_shared<PrecomputedEmbeddings>(4);
  std::vector<FilteredDocument> docs;
};

Toy separable_toy(std::size_t n, std::uint64_t seed) {
  Toy toy;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % 3;
    FilteredDocument d;
    d.doc_id = "doc" + std::to_string(i);
    d.route = Route::case_b;
    d.gold_label = kClasses[cls];
    const std::size_t n_entities = 1 + rng.below(3);
    for (std::size_t e = 0; e < n_entities; ++e) {
      Entity ent;
      ent.entity_id = d.doc_id + "_" + std::to_string(e);
      ent.doc_id = d.doc_id;
      Vector v(4);
      for (int j = 0; j < 4; ++j) v(j) = rng.uniform(-0.2, 0.2);
      v(static_cast<Eigen::Index>(cls)) += 1.0;
      toy.table->insert(ent.entity_id, v);
      d.entities.push_back(ent);
    }
    toy.docs.push_back(d);
  }
  return toy;
}

TrainConfig toy_config() {
  TrainConfig c;
  c.learning_rate = 0.05;
  c.batch_size = 4;
  c.max_epochs = 40;
  c.patience = 10;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("adamw one step matches a hand-computed update") {
  std::vector<double> theta = {1.0, -2.0, 0.5};
  std::vector<double> grad = {0.3, -0.1, 0.0};
  const std::vector<TensorRef> p = {{"p", theta.data(), 3}};
  const std::vector<TensorRef> g = {{"g", grad.data(), 3}};
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.1;
  OptimizerState state;
  adamw_step(p, g, state, cfg);
  const std::vector<double> start = {1.0, -2.0, 0.5};
  for (std::size_t j = 0; j < 3; ++j) {
    const double m_hat = (0.1 * grad[j]) / 0.1;
    const double v_hat = (0.001 * grad[j] * grad[j]) / 0.001;
    const double expected = start[j] - 0.01 * (m_hat / (std::sqrt(v_hat) + 1e-8) + 0.1 * start[j]);
    CHECK(theta[j] == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(state.step == 1);
}

TEST_CASE("adamw: zero gradient with decay shrinks by (1 - lr*wd); without decay nothing moves") {
  std::vector<double> theta = {2.0};
  std::vector<double> grad = {0.0};
  const std::vector<TensorRef> p = {{"p", theta.data(), 1}};
  const std::vector<TensorRef> g = {{"g", grad.data(), 1}};
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.01;
  OptimizerState state;
  adamw_step(p, g, state, cfg);
  CHECK(theta[0] == doctest::Approx(2.0 * 0.999).epsilon(1e-15));

  theta[0] = 2.0;
  cfg.weight_decay = 0.0;
  OptimizerState fresh;
  for (int i = 0; i < 5; ++i) adamw_step(p, g, fresh, cfg);
  CHECK(theta[0] == 2.0);
}

TEST_CASE("adamw rejects non-finite gradients without side effects") {
  std::vector<double> theta = {1.0, 1.0};
  std::vector<double> grad = {0.5, std::numeric_limits<double>::quiet_NaN()};
  const std::vector<TensorRef> p = {{"p", theta.data(), 2}};
  const std::vector<TensorRef> g = {{"g", grad.data(), 2}};
  OptimizerState state;
  CHECK_THROWS_AS(adamw_step(p, g, state, TrainConfig{}), Error);
  CHECK(theta[0] == 1.0);
  CHECK(state.step == 0);
  CHECK(state.m.empty());
}

TEST_CASE("metrics examples") {
  // Recalls 0.8 and 0.6 average to 0.7.
  std::vector<std::size_t> gold, pred;
  for (int i = 0; i < 10; ++i) {
    gold.push_back(0);
    pred.push_back(i < 8 ? 0 : 1);
  }
  for (int i = 0; i < 5; ++i) {
    gold.push_back(1);
    pred.push_back(i < 3 ? 1 : 0);
  }
  const Metrics m = compute_metrics(gold, pred, 3);
  CHECK(m.balanced_accuracy == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(m.accuracy == doctest::Approx(11.0 / 15.0));
  CHECK(std::isnan(m.recall[2]));
  CHECK(m.confusion[0][1] == 2);
  CHECK(m.confusion[1][0] == 2);
  CHECK(m.count == 15);
  const std::vector<std::size_t> short_pred = {0};
  CHECK_THROWS_AS(compute_metrics(gold, short_pred, 3), ValidationError);
}

TEST_CASE("metrics agree with a brute-force oracle on 1000 random cases") {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 2 + rng.below(4);
    const std::size_t n = 1 + rng.below(60);
    std::vector<std::size_t> gold(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      gold[i] = rng.below(c);
      pred[i] = rng.below(c);
    }
    double acc = 0.0, bal = 0.0;
    reference_metrics(gold, pred, c, acc, bal);
    const Metrics m = compute_metrics(gold, pred, c);
    CHECK(m.accuracy == acc);
    CHECK(m.balanced_accuracy == doctest::Approx(bal).epsilon(1e-15));
  }
}

TEST_CASE("kfold split partitions the ids") {
  std::vector<std::string> ids;
  for (int i = 0; i < 23; ++i) ids.push_back("d" + std::to_string(i));
  for (std::size_t k : {2u, 5u, 23u}) {
    const auto split = kfold_split(ids, k, 7, 0.2);
    REQUIRE(split.folds.size() == k);
    std::multiset<std::string> all_test;
    for (const auto& f : split.folds) {
      all_test.insert(f.test.begin(), f.test.end());
      CHECK(f.test.size() + f.train.size() + f.validation.size() == ids.size());
      std::set<std::string> seen(f.test.begin(), f.test.end());
      for (const auto& id : f.train) CHECK(seen.insert(id).second);
      for (const auto& id : f.validation) CHECK(seen.insert(id).second);
      CHECK(f.test.size() >= ids.size() / k);
      CHECK(f.test.size() <= ids.size() / k + 1);
      CHECK(!f.validation.empty());
      CHECK(!f.train.empty());
    }
    CHECK(all_test == std::multiset<std::string>(ids.begin(), ids.end()));
  }
  const auto loo = kfold_split(ids, ids.size(), 1, 0.2);
  for (const auto& f : loo.folds) CHECK(f.test.size() == 1);
  CHECK_THROWS_AS(kfold_split(ids, 24, 1), ValidationError);
  CHECK_THROWS_AS(kfold_split(ids, 0, 1), ValidationError);
}

TEST_CASE("kfold split is a function of the seed") {
  std::vector<std::string> ids;
  for (int i = 0; i < 40; ++i) ids.push_back("d" + std::to_string(i));
  const auto a = kfold_split(ids, 5, 11);
  const auto b = kfold_split(ids, 5, 11);
  const auto c = kfold_split(ids, 5, 12);
  bool differs = false;
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(a.folds[f].test == b.folds[f].test);
    CHECK(a.folds[f].validation == b.folds[f].validation);
    differs |= a.folds[f].test != c.folds[f].test;
  }
  CHECK(differs);
}

TEST_CASE("early stopping: a peak at epoch 3 with patience 5 stops at epoch 8") {
  EarlyStopper s(5);
  const std::vector<double> scores = {0.3, 0.5, 0.9, 0.8, 0.9, 0.7, 0.6, 0.5, 0.4, 0.3};
  std::size_t stopped = 0;
  for (std::size_t e = 1; e <= scores.size(); ++e) {
    s.observe(e, scores[e - 1]);
    if (s.should_stop(e)) {
      stopped = e;
      break;
    }
  }
  CHECK(stopped == 8);
  CHECK(s.best_epoch() == 3);
  CHECK(s.best_score() == 0.9);
}

TEST_CASE("training separates a linearly separable toy and is deterministic") {
  const Toy toy = separable_toy(60, 1);
  const Toy val = separable_toy(30, 2);
  std::vector<FilteredDocument> all_val = val.docs;
  auto table = std::make_shared<PrecomputedEmbeddings>(4);
  for (const auto* t : {&toy, &val})
    for (const auto& d : t->docs)
      for (const auto& e : d.entities) table->insert(e.entity_id, t->table->lookup(e.entity_id));

  const Model init = Model::precomputed(table, kClasses, 5);
  const TrainResult r = train_model(init, toy.docs, all_val, "never", toy_config());
  CHECK(evaluate(r.best, all_val, "never").balanced_accuracy == 1.0);
  CHECK(r.trainable_documents == 60);
  CHECK(!r.history.empty());

  const TrainResult again = train_model(init, toy.docs, all_val, "never", toy_config());
  CHECK(again.best_epoch == r.best_epoch);
  CHECK(again.history.size() == r.history.size());
  Model a = r.best, b = again.best;
  auto ta = a.tensors(), tb = b.tensors();
  for (std::size_t g = 0; g < ta.size(); ++g) CHECK(std::equal(ta[g].data, ta[g].data + ta[g].size, tb[g].data));
}

TEST_CASE("one epoch with a single batch applies one AdamW step on the mean gradient") {
  Toy toy = separable_toy(5, 4);
  TrainConfig cfg = toy_config();
  cfg.batch_size = 5;
  cfg.max_epochs = 1;
  const Model init = Model::precomputed(toy.table, kClasses, 9);
  const TrainResult r = train_model(init, toy.docs, toy.docs, "never", cfg);

  Model manual = init;
  ModelGrads g = ModelGrads::zeros_like(manual);
  for (const auto& d : toy.docs) {
    const auto in = manual.prepare(d);
    manual.backward(manual.forward(in), in, cfg.label_smoothing, cfg.relevance_weight, g);
  }
  auto gt = g.tensors();
  for (auto& t : gt)
    for (std::size_t k = 0; k < t.size; ++k) t.data[k] /= 5.0;
  OptimizerState st;
  adamw_step(manual.tensors(), gt, st, cfg);

  Model trained = r.best;  // the first epoch always counts as an improvement
  auto a = manual.tensors(), b = trained.tensors();
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t k = 0; k < a[t].size; ++k) CHECK(b[t].data[k] == doctest::Approx(a[t].data[k]).epsilon(1e-12));
}

TEST_CASE("case A documents get the default label; training rejects all-case-A input") {
  Toy toy = separable_toy(6, 8);
  const Model m = Model::precomputed(toy.table, kClasses, 1);
  FilteredDocument a;
  a.doc_id = "a";
  a.route = Route::case_a;
  a.label = "never";
  a.gold_label = "past";
  const Prediction p = predict(m, a, "never");
  CHECK(p.route == Route::case_a);
  CHECK(p.predicted == 2);
  CHECK(p.probs.size() == 0);
  CHECK_THROWS_AS(train_model(m, {a}, toy.docs, "never", toy_config()), ValidationError);
  CHECK_THROWS_AS(train_model(m, toy.docs, {}, "never", toy_config()), ValidationError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.learning_rate = -1;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.label_smoothing = 1.5;
  CHECK_THROWS(c.validate());
}

TEST_CASE("history file has one JSON line per epoch") {
  testutil::TempDir dir;
  write_history({{1, 0.5, 0.6, 0.7}, {2, 0.4, 0.7, 0.8}}, dir / "h.jsonl");
  const std::string text = testutil::read_file(dir / "h.jsonl");
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(text.find("\"val_balanced_accuracy\":0.8") != std::string::npos);
}
