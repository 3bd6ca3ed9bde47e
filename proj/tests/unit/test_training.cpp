#include <gtest/gtest.h>

#include <cmath>

#include "cxr/architecture.hpp"
#include "cxr/batch.hpp"
#include "cxr/error.hpp"
#include "cxr/synthetic.hpp"
#include "cxr/training.hpp"

namespace cxr {
namespace {

struct Toy {
  InMemoryImageSource source;
  std::vector<std::size_t> train, val;
};

Toy blob_toy(std::size_t n, std::size_t size, std::uint64_t seed) {
  BlobDatasetConfig cfg;
  cfg.count = n;
  cfg.size = size;
  cfg.seed = seed;
  std::vector<GrayImage> images;
  std::vector<Label> labels;
  for (auto& s : make_blob_dataset(cfg)) {
    images.push_back(std::move(s.image));
    labels.push_back(s.label);
  }
  Toy t{InMemoryImageSource(std::move(images), std::move(labels)), {}, {}};
  for (std::size_t i = 0; i < n; ++i) (i < n * 3 / 4 ? t.train : t.val).push_back(i);
  return t;
}

NetworkShape small_arch4(std::size_t size) {
  NetworkShape s = network_shape(architecture_by_name("Arch4"));
  s.height = s.width = size;
  return s;
}

TEST(EarlyStopping, StopsAfterPatience) {
  EarlyStopping es(1);
  EXPECT_TRUE(es.update(1, 1.0));
  EXPECT_FALSE(es.should_stop());
  EXPECT_FALSE(es.update(2, 1.5));
  EXPECT_TRUE(es.should_stop());
  EXPECT_EQ(es.best_epoch(), 1u);
  EarlyStopping three(3);
  three.update(1, 1.0);
  three.update(2, 1.0);
  three.update(3, 0.9);
  three.update(4, 0.95);
  three.update(5, 0.91);
  EXPECT_FALSE(three.should_stop());
  three.update(6, 2.0);
  EXPECT_TRUE(three.should_stop());
  EXPECT_EQ(three.best_epoch(), 3u);
}

TEST(TrainingConfig, Validation) {
  TrainingConfig c;
  EXPECT_EQ(c.max_epochs, 150u);
  EXPECT_EQ(c.patience, 15u);
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_DOUBLE_EQ(c.learning_rate, 1e-4);
  c.max_epochs = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.patience = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Train, SeparableToyReachesPerfectValidation) {
  auto toy = blob_toy(20, 150, 4);
  BatchIterator it(toy.source, toy.train, 4, 1, std::nullopt);
  const EvalSet val = make_eval_set(toy.source, toy.val);
  TrainingConfig cfg;
  cfg.max_epochs = 30;
  cfg.patience = 30;
  cfg.seed = 2;
  const auto r = train(build_network<float>(small_arch4(150), 3), it, val, cfg);
  double best_acc = 0.0;
  for (const auto& e : r.history.epochs) best_acc = std::max(best_acc, e.val_accuracy);
  EXPECT_EQ(best_acc, 1.0) << r.history.to_csv();
  EXPECT_LE(r.history.epochs.size(), 30u);
}

TEST(Train, ReturnsBestEpochAndIsReproducible) {
  auto toy = blob_toy(24, 24, 5);
  const EvalSet val = make_eval_set(toy.source, toy.val);
  TrainingConfig cfg;
  cfg.max_epochs = 6;
  cfg.patience = 2;
  cfg.batch_size = 8;
  cfg.seed = 9;
  auto run = [&] {
    BatchIterator it(toy.source, toy.train, cfg.batch_size, 4, AugmentationConfig{});
    return train(build_network<float>(small_arch4(24), 8), it, val, cfg);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.history.epochs, b.history.epochs);
  EXPECT_EQ(a.model.parameters(), b.model.parameters());

  ASSERT_GE(a.history.best_epoch, 1u);
  double best = INFINITY;
  std::size_t arg = 0;
  for (const auto& e : a.history.epochs) {
    if (e.val_loss < best) best = e.val_loss, arg = e.epoch;
  }
  EXPECT_EQ(a.history.best_epoch, arg);
  EXPECT_NEAR(evaluate(a.model, val).loss, best, 1e-9);
  const std::size_t ran = a.history.epochs.size();
  EXPECT_TRUE(ran == cfg.max_epochs || ran - a.history.best_epoch == cfg.patience);
}

TEST(Train, NanAbortsWithEpochAndBatch) {
  auto toy = blob_toy(8, 16, 6);
  auto model = build_network<float>(small_arch4(16), 1);
  // A poisoned conv weight can be masked by ReLU; the output bias cannot.
  model.parameters().back()[0] = std::nanf("");
  BatchIterator it(toy.source, toy.train, 4, 1, std::nullopt);
  const EvalSet val = make_eval_set(toy.source, toy.val);
  TrainingConfig cfg;
  cfg.max_epochs = 2;
  try {
    train(model, it, val, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 1"), std::string::npos) << msg;
  }
}

TEST(History, CsvHeader) {
  TrainingHistory h;
  h.epochs.push_back({1, 0.5, 0.25, 1.0});
  EXPECT_EQ(h.to_csv(), "epoch,train_loss,val_loss,val_acc\n1,0.500000,0.250000,1.000000\n");
}

TEST(Predict, ProbabilitiesAndBatchIndependence) {
  const auto m = build_network<float>(small_arch4(16), 2);
  auto toy = blob_toy(4, 16, 7);
  auto set = make_eval_set(toy.source, std::vector<std::size_t>{0, 1, 0});
  const auto preds = predict(m, set.images);
  for (const auto& p : preds) {
    EXPECT_GT(p.p[0], 0.0);
    EXPECT_LT(p.p[0], 1.0);
    EXPECT_NEAR(p.p[0] + p.p[1], 1.0, 1e-6);
  }
  EXPECT_EQ(preds[0], preds[2]);
  const auto alone = predict(m, set.images.slice(1).reshaped({1, 16, 16, 1}));
  EXPECT_EQ(alone[0], preds[1]);
}

TEST(Predict, ZeroHeadGivesHalf) {
  auto m = build_network<float>(small_arch4(16), 2);
  const std::size_t out = m.layers().size() - 2;
  m.parameters()[m.weight_index(out)].fill(0.0f);
  const Tensor<float> x({1, 16, 16, 1}, 1.0f);
  const auto p = predict(m, x)[0];
  EXPECT_EQ(p.p[0], 0.5);
  EXPECT_EQ(p.p[1], 0.5);
  EXPECT_THROW(predict(m, Tensor<float>({1, 8, 8, 1}, 1.0f)), ShapeError);
}

}  // namespace
}  // namespace cxr
