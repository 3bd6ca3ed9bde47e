#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cxr/batch.hpp"
#include "cxr/model.hpp"

namespace cxr {

struct TrainingConfig {
  std::size_t max_epochs = 150;
  std::size_t patience = 15;  // epochs without validation-loss improvement
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;  // dropout stream

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based, 0 before the first epoch

  // "epoch,train_loss,val_loss,val_acc"
  std::string to_csv() const;

  friend bool operator==(const TrainingHistory&, const TrainingHistory&) = default;
};

// Tracks the best validation loss; asks to stop once `patience` consecutive
// epochs fail to improve on it.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  // Returns true when `val_loss` is a new best.
  bool update(std::size_t epoch, double val_loss);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_loss_;
};

// Per-class probabilities; index 0 = non-consolidation, 1 = consolidation.
struct Prediction {
  std::array<double, 2> p{0.5, 0.5};
  double consolidation() const { return p[1]; }

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// Inference-mode forward pass per image of an [N, H, W, 1] batch.
std::vector<Prediction> predict(const Model<float>& model, const Tensor<float>& images);

std::vector<double> consolidation_scores(std::span<const Prediction> predictions);

struct Evaluation {
  double loss = 0.0;  // mean cross-entropy + L2 penalty
  double accuracy = 0.0;
  std::vector<Prediction> predictions;
};

Evaluation evaluate(const Model<float>& model, const EvalSet& set);

struct TrainResult {
  Model<float> model;  // parameters from the best validation epoch
  TrainingHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Adam over augmented batches, validation after every epoch, early stopping
// on validation loss. Throws NumericError naming the epoch and batch on a
// non-finite loss or gradient.
TrainResult train(Model<float> model, BatchIterator& train_batches, const EvalSet& validation,
                  const TrainingConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace cxr
