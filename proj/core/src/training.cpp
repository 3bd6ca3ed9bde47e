#include "cxr/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cxr/adam.hpp"
#include "cxr/metrics.hpp"

namespace cxr {

void TrainingConfig::validate() const {
  if (max_epochs < 1) throw DataError("max_epochs must be >= 1");
  if (patience < 1) throw DataError("patience must be >= 1");
  if (batch_size < 1) throw DataError("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw DataError("learning rate must be > 0");
}

std::string TrainingHistory::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + format_number(e.train_loss) + "," +
           format_number(e.val_loss) + "," + format_number(e.val_accuracy) + "\n";
  }
  return out;
}

EarlyStopping::EarlyStopping(std::size_t patience)
    : patience_(patience), best_loss_(std::numeric_limits<double>::infinity()) {}

bool EarlyStopping::update(std::size_t epoch, double val_loss) {
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

std::vector<Prediction> predict(const Model<float>& model, const Tensor<float>& images) {
  if (images.rank() != model.input_shape().size() + 1) {
    throw ShapeError("predict: expected a batch of " + shape_string(model.input_shape()) +
                     ", got " + shape_string(images.shape()));
  }
  if (model.output_shape() != Shape{2}) {
    throw ShapeError("predict: model must emit two class probabilities");
  }
  std::vector<Prediction> out;
  out.reserve(images.dim(0));
  for (std::size_t i = 0; i < images.dim(0); ++i) {
    const Tensor<float> probs = forward(model, images.slice(i), Mode::inference);
    out.push_back(Prediction{{static_cast<double>(probs[0]), static_cast<double>(probs[1])}});
  }
  return out;
}

std::vector<double> consolidation_scores(std::span<const Prediction> predictions) {
  std::vector<double> out;
  out.reserve(predictions.size());
  for (const auto& p : predictions) out.push_back(p.consolidation());
  return out;
}

Evaluation evaluate(const Model<float>& model, const EvalSet& set) {
  if (set.size() == 0) throw DataError("evaluation set is empty");
  if (model.output_shape() != Shape{2} || model.logits_end() == model.layers().size()) {
    throw ShapeError("evaluate: model must end in a two-way softmax");
  }
  Evaluation result;
  double ce_total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Tensor<float> logits =
        forward<float>(model, set.images.slice(i), Mode::inference, nullptr, nullptr, model.logits_end());
    const Tensor<float> probs = softmax(logits);
    result.predictions.push_back(
        Prediction{{static_cast<double>(probs[0]), static_cast<double>(probs[1])}});
    const double z0 = logits[0], z1 = logits[1];
    const double peak = std::max(z0, z1);
    const double lse = peak + std::log(std::exp(z0 - peak) + std::exp(z1 - peak));
    ce_total += lse - (set.labels[i] == Label::consolidation ? z1 : z0);
  }
  result.loss = ce_total / static_cast<double>(set.size()) + l2_penalty(model);
  const auto scores = consolidation_scores(result.predictions);
  result.accuracy = accuracy(scores, set.labels);
  return result;
}

TrainResult train(Model<float> model, BatchIterator& train_batches, const EvalSet& validation,
                  const TrainingConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  AdamState<float> adam(model.parameters(), adam_cfg);
  EarlyStopping stopper(cfg.patience);
  TrainResult result{model, {}};

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    train_batches.start_epoch(epoch);
    Rng dropout_rng(derive_seed(cfg.seed, {epoch}));
    double loss_sum = 0.0;
    std::size_t seen = 0, batch_index = 0;
    while (auto batch = train_batches.next()) {
      ++batch_index;
      const std::string where =
          "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index);
      auto step = loss_and_grad(model, batch->images, batch->one_hot, Mode::training, &dropout_rng);
      if (!std::isfinite(step.loss)) throw NumericError("non-finite training loss at " + where);
      try {
        adam_step<float>(model.parameters(), step.grads, adam);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at " + where);
      }
      loss_sum += step.loss * static_cast<double>(batch->labels.size());
      seen += batch->labels.size();
    }
    const Evaluation val = evaluate(model, validation);
    if (!std::isfinite(val.loss)) {
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    EpochRecord record{epoch, loss_sum / static_cast<double>(seen), val.loss, val.accuracy};
    result.history.epochs.push_back(record);
    if (stopper.update(epoch, val.loss)) {
      result.model = model;
      result.history.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(record);
    if (stopper.should_stop()) break;
  }
  return result;
}

}  // namespace cxr
