#include "sparsedoc/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sparsedoc/errors.hpp"
#include "sparsedoc/random.hpp"

namespace sparsedoc {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (batch_size == 0) throw ValidationError("batch size must be >= 1");
  if (patience == 0) throw ValidationError("patience must be >= 1");
  if (max_epochs == 0) throw ValidationError("max epochs must be >= 1");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ValidationError("label smoothing must be in [0, 1)");
  if (relevance_weight < 0.0) throw ValidationError("relevance weight must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ValidationError("betas must be in [0, 1)");
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  if (weight_decay < 0.0) throw ValidationError("weight decay must be >= 0");
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw ValidationError("validation fraction must be in [0, 1)");
}

void adamw_step(std::span<const TensorRef> params, std::span<const TensorRef> grads, OptimizerState& state,
                const TrainConfig& cfg) {
  if (params.size() != grads.size()) throw ValidationError("adamw_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size != grads[i].size) throw ValidationError("adamw_step: shape mismatch at " + params[i].name);
    for (std::size_t j = 0; j < grads[i].size; ++j) {
      if (!std::isfinite(grads[i].data[j])) {
        throw Error("adamw_step: non-finite gradient in " + grads[i].name + "[" + std::to_string(j) + "]");
      }
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size, 0.0);
      state.v.emplace_back(p.size, 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ValidationError("adamw_step: optimizer state does not match params");

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* theta = params[i].data;
    const double* g = grads[i].data;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < params[i].size; ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      theta[j] -= cfg.learning_rate * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * theta[j]);
    }
  }
}

Metrics compute_metrics(std::span<const std::size_t> gold, std::span<const std::size_t> predicted,
                        std::size_t num_classes) {
  if (gold.size() != predicted.size()) throw ValidationError("compute_metrics: length mismatch");
  Metrics m;
  m.count = gold.size();
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= num_classes || predicted[i] >= num_classes) throw ValidationError("class index out of range");
    ++m.confusion[gold[i]][predicted[i]];
    correct += gold[i] == predicted[i];
  }
  m.accuracy = gold.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold.size());
  m.recall.assign(num_classes, std::nan(""));
  double recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t row = 0;
    for (const auto x : m.confusion[c]) row += x;
    if (row == 0) continue;
    m.recall[c] = static_cast<double>(m.confusion[c][c]) / static_cast<double>(row);
    recall_sum += m.recall[c];
    ++present;
  }
  m.balanced_accuracy = present ? recall_sum / static_cast<double>(present) : 0.0;
  return m;
}

FoldSplit kfold_split(const std::vector<std::string>& ids, std::size_t k, std::uint64_t seed, double val_fraction) {
  if (k == 0) throw ValidationError("k must be >= 1");
  if (k > ids.size()) {
    throw ValidationError("k = " + std::to_string(k) + " exceeds the number of documents (" +
                          std::to_string(ids.size()) + ")");
  }
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<std::vector<std::size_t>> test(k);
  for (std::size_t i = 0; i < order.size(); ++i) test[i % k].push_back(order[i]);

  FoldSplit split;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<bool> in_test(ids.size(), false);
    for (const auto i : test[f]) in_test[i] = true;
    std::vector<std::size_t> rest;
    for (const auto i : order) {
      if (!in_test[i]) rest.push_back(i);
    }
    Rng fold_rng(derive_seed(seed, f + 1));
    fold_rng.shuffle(rest);
    std::size_t n_val = static_cast<std::size_t>(std::floor(static_cast<double>(rest.size()) * val_fraction + 0.5));
    if (val_fraction > 0.0 && rest.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, rest.size() - 1);

    Fold fold;
    for (const auto i : test[f]) fold.test.push_back(ids[i]);
    for (std::size_t j = 0; j < rest.size(); ++j) {
      (j < n_val ? fold.validation : fold.train).push_back(ids[rest[j]]);
    }
    split.folds.push_back(std::move(fold));
  }
  return split;
}

bool EarlyStopper::observe(std::size_t epoch, double score) {
  if (score > best_score_) {
    best_score_ = score;
    best_epoch_ = epoch;
    return true;
  }
  return false;
}

Prediction predict(const Model& model, const FilteredDocument& doc, const std::string& default_label) {
  Prediction p;
  p.doc_id = doc.doc_id;
  p.route = doc.route;
  if (doc.route == Route::case_a) {
    p.predicted = model.head().class_index(doc.label.value_or(default_label));
    return p;
  }
  const auto fwd = model.forward(model.prepare(doc));
  p.predicted = fwd.head.predicted;
  p.probs = fwd.head.probs;
  p.weights = fwd.head.weights;
  return p;
}

namespace {

struct PreparedSet {
  std::vector<DocumentInput> case_b;
  std::vector<std::size_t> case_b_gold;
  std::vector<std::size_t> case_a_gold;  // their prediction is always the default
};

PreparedSet prepare_set(const Model& model, const std::vector<FilteredDocument>& docs) {
  PreparedSet out;
  const auto& classes = model.head().classes;
  for (const auto& doc : docs) {
    if (!doc.gold_label) continue;
    const auto it = std::find(classes.begin(), classes.end(), *doc.gold_label);
    if (it == classes.end()) continue;
    const auto gold = static_cast<std::size_t>(it - classes.begin());
    if (doc.route == Route::case_a) {
      out.case_a_gold.push_back(gold);
    } else {
      out.case_b.push_back(model.prepare(doc));
      out.case_b_gold.push_back(gold);
    }
  }
  return out;
}

Metrics evaluate_prepared(const Model& model, const PreparedSet& set, std::size_t default_index) {
  std::vector<std::size_t> gold, pred;
  for (std::size_t i = 0; i < set.case_b.size(); ++i) {
    gold.push_back(set.case_b_gold[i]);
    pred.push_back(model.forward(set.case_b[i]).head.predicted);
  }
  for (const auto g : set.case_a_gold) {
    gold.push_back(g);
    pred.push_back(default_index);
  }
  return compute_metrics(gold, pred, model.head().num_classes());
}

}  // namespace

Metrics evaluate(const Model& model, const std::vector<FilteredDocument>& docs, const std::string& default_label) {
  return evaluate_prepared(model, prepare_set(model, docs), model.head().class_index(default_label));
}

TrainResult train_model(Model initial, const std::vector<FilteredDocument>& train,
                        const std::vector<FilteredDocument>& validation, const std::string& default_label,
                        const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ValidationError("training set is empty");
  if (validation.empty()) throw ValidationError("validation set is empty");
  const std::size_t default_index = initial.head().class_index(default_label);

  const PreparedSet train_set = prepare_set(initial, train);
  if (train_set.case_b.empty()) throw ValidationError("nothing trainable: every training document is case A");
  const PreparedSet val_set = prepare_set(initial, validation);

  TrainResult result;
  result.trainable_documents = train_set.case_b.size();
  for (const auto& in : train_set.case_b) {
    for (const auto& a : in.annotations) result.annotated_entities += a.has_value();
  }

  Model model = std::move(initial);
  ModelGrads grads = ModelGrads::zeros_like(model);
  OptimizerState opt;
  EarlyStopper stopper(cfg.patience);
  result.best = model;

  std::vector<std::size_t> order(train_set.case_b.size());
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, epoch));
    rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      grads.set_zero();
      for (std::size_t j = start; j < stop; ++j) {
        const auto& input = train_set.case_b[order[j]];
        const auto fwd = model.forward(input);
        loss_sum += model.loss(fwd, input, cfg.label_smoothing, cfg.relevance_weight).total;
        model.backward(fwd, input, cfg.label_smoothing, cfg.relevance_weight, grads);
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      auto grad_tensors = grads.tensors();
      for (auto& t : grad_tensors) {
        for (std::size_t k = 0; k < t.size; ++k) t.data[k] *= scale;
      }
      adamw_step(model.tensors(), grad_tensors, opt, cfg);
    }

    const Metrics val = evaluate_prepared(model, val_set, default_index);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), val.accuracy, val.balanced_accuracy};
    result.history.push_back(rec);
    if (stopper.observe(epoch, val.balanced_accuracy)) {
      result.best = model;
      result.best_epoch = epoch;
    }
    if (stopper.should_stop(epoch)) break;
  }
  return result;
}

void write_history(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : history) {
    out << nlohmann::json{{"epoch", r.epoch},
                          {"train_loss", r.train_loss},
                          {"val_accuracy", r.val_accuracy},
                          {"val_balanced_accuracy", r.val_balanced_accuracy}}
               .dump()
        << '\n';
  }
}

}  // namespace sparsedoc
