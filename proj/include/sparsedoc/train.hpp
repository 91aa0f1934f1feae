#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "sparsedoc/model.hpp"

namespace sparsedoc {

struct TrainConfig {
  double learning_rate = 2e-5;
  std::size_t batch_size = 4;  // documents per optimizer step
  std::size_t patience = 5;
  double label_smoothing = 0.1;
  double relevance_weight = 0.0;  // lambda; 0 disables the relevance loss
  std::size_t max_epochs = 50;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double val_fraction = 0.2;

  void validate() const;
};

struct OptimizerState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// Decoupled weight decay Adam. Throws (leaving params and state untouched)
/// if any gradient is non-finite.
void adamw_step(std::span<const TensorRef> params, std::span<const TensorRef> grads, OptimizerState& state,
                const TrainConfig& cfg);

struct Metrics {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  std::vector<double> recall;  // NaN for classes absent from the gold labels
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]
  std::size_t count = 0;
};

/// Balanced accuracy averages recall over classes with at least one gold
/// instance.
Metrics compute_metrics(std::span<const std::size_t> gold, std::span<const std::size_t> predicted,
                        std::size_t num_classes);

struct Fold {
  std::vector<std::string> test;
  std::vector<std::string> train;
  std::vector<std::string> validation;
};

struct FoldSplit {
  std::vector<Fold> folds;
};

/// Seeded shuffle, round-robin assignment to k test folds, then a seeded
/// train/validation split of the remaining ids.
FoldSplit kfold_split(const std::vector<std::string>& ids, std::size_t k, std::uint64_t seed,
                      double val_fraction = 0.2);

/// Tracks the best validation score; a strictly higher score is an
/// improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  /// Returns true when `score` improves on every earlier epoch.
  bool observe(std::size_t epoch, double score);
  bool should_stop(std::size_t epoch) const { return epoch >= best_epoch_ + patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_score() const { return best_score_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  double best_score_ = -std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_balanced_accuracy = 0.0;
};

struct TrainResult {
  Model best;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::size_t trainable_documents = 0;
  std::size_t annotated_entities = 0;  // entities contributing to the relevance loss
};

struct Prediction {
  std::string doc_id;
  Route route = Route::case_a;
  std::size_t predicted = 0;
  Vector probs;     // empty for case_a
  Vector weights;   // attention weights, empty for case_a
};

/// case_a documents get the default label without touching the model.
Prediction predict(const Model& model, const FilteredDocument& doc, const std::string& default_label);

/// Documents whose gold label is missing or not a model class are skipped.
Metrics evaluate(const Model& model, const std::vector<FilteredDocument>& docs, const std::string& default_label);

/// Epoch loop with gradient accumulation over `batch_size` documents
/// (mean gradient), validation balanced accuracy for model selection and
/// early stopping. Only case_b documents with a gold label are trained on.
TrainResult train_model(Model initial, const std::vector<FilteredDocument>& train,
                        const std::vector<FilteredDocument>& validation, const std::string& default_label,
                        const TrainConfig& cfg);

void write_history(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace sparsedoc
