#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cxr/adam.hpp"
#include "cxr/architecture.hpp"
#include "cxr/batch.hpp"
#include "cxr/error.hpp"
#include "cxr/model.hpp"
#include "../support/gradcheck.hpp"

namespace cxr {
namespace {

TEST(Architecture, SixTableOneSpecs) {
  const auto& all = architectures();
  const std::pair<std::size_t, std::size_t> expected[] = {{4, 64}, {4, 128}, {4, 256},
                                                          {3, 64}, {3, 128}, {3, 256}};
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(all[i].name, "Arch" + std::to_string(i + 1));
    EXPECT_EQ(all[i].conv_layers, expected[i].first);
    EXPECT_EQ(all[i].fc_neurons, expected[i].second);
  }
  EXPECT_EQ(architecture_by_name("Arch5").fc_neurons, 128u);
  EXPECT_THROW(architecture_by_name("Arch7"), Error);
}

TEST(Architecture, FlattenWidths) {
  // 150 -> 75 -> 37 -> 18 -> 9 with floor pooling.
  std::size_t side = 150;
  for (int i = 0; i < 4; ++i) side /= 2;
  EXPECT_EQ(side, 9u);
  EXPECT_EQ(flatten_width(network_shape(architecture_by_name("Arch1"))), 9u * 9u * 32u);
  EXPECT_EQ(flatten_width(network_shape(architecture_by_name("Arch1"))), 2592u);
  EXPECT_EQ(flatten_width(network_shape(architecture_by_name("Arch4"))), 10368u);
}

TEST(Architecture, LayerStackOrder) {
  const auto layers = layer_stack(network_shape(architecture_by_name("Arch4")));
  std::vector<LayerKind> kinds;
  for (const auto& l : layers) kinds.push_back(l.kind);
  const std::vector<LayerKind> expect{
      LayerKind::conv2d, LayerKind::relu, LayerKind::maxpool2d, LayerKind::conv2d,
      LayerKind::relu,   LayerKind::maxpool2d, LayerKind::conv2d, LayerKind::relu,
      LayerKind::maxpool2d, LayerKind::flatten, LayerKind::dropout, LayerKind::dense,
      LayerKind::relu,   LayerKind::dense, LayerKind::softmax};
  EXPECT_EQ(kinds, expect);
  EXPECT_EQ(layers[0].filters, 32u);
  EXPECT_EQ(layers[0].kernel_h, 3u);
  EXPECT_DOUBLE_EQ(layers[10].rate, 0.7);
  EXPECT_DOUBLE_EQ(layers[11].l2, 0.01);
  EXPECT_DOUBLE_EQ(layers[13].l2, 0.0);
  EXPECT_EQ(layers[13].units, 2u);
}

TEST(Model, SeededInitIsBitIdentical) {
  const auto spec = architecture_by_name("Arch6");
  const auto a = build_model<float>(spec, 42), b = build_model<float>(spec, 42);
  EXPECT_EQ(a.parameters(), b.parameters());
  const auto c = build_model<float>(spec, 43);
  EXPECT_NE(a.parameters(), c.parameters());
  EXPECT_EQ(a.output_shape(), Shape{2});
}

TEST(Model, InitRangesAndZeroBiases) {
  const auto m = build_network<double>(testing::toy_shape(), 5);
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    if (!m.layers()[i].has_parameters()) continue;
    for (double v : m.bias(i).values()) EXPECT_EQ(v, 0.0);
    const auto& w = m.weights(i);
    const std::size_t fan_out = w.shape().back();
    const std::size_t fan_in = w.size() / fan_out;
    const double limit = m.layers()[i].init == Init::he_uniform
                             ? std::sqrt(6.0 / static_cast<double>(fan_in))
                             : std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double v : w.values()) EXPECT_LE(std::abs(v), limit);
  }
}

TEST(Model, RejectsInvalidStacks) {
  EXPECT_THROW(LayerSpec::dropout(1.0).validate(), Error);
  EXPECT_THROW(LayerSpec::dense(0).validate(), Error);
  EXPECT_THROW(LayerSpec::conv2d(0, 3, Padding::same).validate(), Error);
  EXPECT_THROW(Model<float>({4, 4, 1}, {LayerSpec::dense(2)}), ShapeError);
}

TEST(Model, FullGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 5; ++i) EXPECT_LT(testing::check_model(rng), 1e-4);
}

TEST(Model, EightByEightGradientCheck) {
  NetworkShape s = testing::toy_shape();
  s.height = s.width = 8;
  std::mt19937_64 rng(22);
  Model<double> m = build_network<double>(s, 3);
  const auto x = testing::random_tensor<double>({3, 8, 8, 1}, rng, 0.0, 2.0);
  const std::vector<Label> labels{Label::consolidation, Label::non_consolidation, Label::consolidation};
  const auto y = one_hot(labels).cast<double>();
  const auto g = loss_and_grad(m, x, y, Mode::inference);
  for (std::size_t p = 0; p < m.parameters().size(); ++p) {
    auto f = [&] { return evaluate_loss(m, x, y); };
    EXPECT_LT(testing::relative_error(g.grads[p], testing::numeric_gradient(m.parameters()[p], f)), 1e-4)
        << "parameter " << p;
  }
}

// Zero weights in the output layer give zero logits whatever the input.
Model<double> zero_head_model() {
  Model<double> m = build_network<double>(testing::toy_shape(), 9);
  const std::size_t out = m.layers().size() - 2;
  m.parameters()[m.weight_index(out)].fill(0.0);
  m.parameters()[m.bias_index(out)].fill(0.0);
  return m;
}

TEST(Loss, UniformPredictionIsLnTwo) {
  Model<double> m = zero_head_model();
  std::mt19937_64 rng(23);
  const auto x = testing::random_tensor<double>({2, 12, 12, 1}, rng);
  const std::vector<Label> labels{Label::consolidation, Label::non_consolidation};
  const auto r = loss_and_grad(m, x, one_hot(labels).cast<double>(), Mode::inference);
  EXPECT_NEAR(r.data_loss, std::log(2.0), 1e-12);
  EXPECT_NEAR(r.loss - r.data_loss, l2_penalty(m), 1e-15);
}

TEST(Loss, PerfectPredictionIsZero) {
  Model<double> m = zero_head_model();
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    if (m.layers()[i].l2 > 0.0) m.parameters()[m.weight_index(i)].fill(0.0);
  }
  const std::size_t out = m.layers().size() - 2;
  m.parameters()[m.bias_index(out)][1] = 800.0;
  std::mt19937_64 rng(24);
  const auto x = testing::random_tensor<double>({1, 12, 12, 1}, rng);
  const std::vector<Label> labels{Label::consolidation};
  EXPECT_EQ(evaluate_loss(m, x, one_hot(labels).cast<double>()), 0.0);
}

TEST(Loss, BatchLabelMismatchThrows) {
  Model<double> m = zero_head_model();
  const Tensor<double> x({2, 12, 12, 1}, 1.0);
  const std::vector<Label> labels{Label::consolidation};
  EXPECT_THROW(loss_and_grad(m, x, one_hot(labels).cast<double>(), Mode::inference), ShapeError);
}

TEST(Loss, DecreasesOverFirstAdamSteps) {
  // Two linearly separable points, dropout off (inference mode).
  Model<float> m({2}, {LayerSpec::dense(4, 0.0, Init::he_uniform), LayerSpec::relu(),
                       LayerSpec::dense(2), LayerSpec::softmax()});
  m.initialize(31);
  const Tensor<float> x({2, 2}, std::vector<float>{1.0f, 0.2f, -1.0f, 0.4f});
  const std::vector<Label> labels{Label::non_consolidation, Label::consolidation};
  const auto y = one_hot(labels);
  AdamState<float> state(m.parameters(), AdamConfig{0.01});
  double previous = evaluate_loss(m, x, y);
  for (int step = 0; step < 5; ++step) {
    const auto g = loss_and_grad(m, x, y, Mode::inference);
    adam_step<float>(m.parameters(), g.grads, state);
    const double now = evaluate_loss(m, x, y);
    EXPECT_LT(now, previous) << "step " << step;
    previous = now;
  }
}

TEST(Model, BatchInvariantForward) {
  const auto m = build_network<float>(testing::toy_shape(), 4);
  std::mt19937_64 rng(25);
  const auto x = testing::random_tensor<float>({3, 12, 12, 1}, rng, 0.0, 2.0);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto alone = forward(m, x.slice(i), Mode::inference);
    const std::vector<Label> l{Label::consolidation, Label::consolidation, Label::consolidation};
    const auto r = loss_and_grad(m, x, one_hot(l), Mode::inference);
    EXPECT_EQ(alone, r.probabilities[i]);
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<Tensor<double>> p{Tensor<double>({3}, 1.5)};
  const std::vector<Tensor<double>> g{Tensor<double>({3}, 0.0)};
  AdamState<double> s(p, {});
  adam_step<double>(p, g, s);
  EXPECT_EQ(p[0], Tensor<double>({3}, 1.5));
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double grad : {0.3, -2.0, 1e3}) {
    std::vector<Tensor<double>> p{Tensor<double>({1}, 0.0)};
    const std::vector<Tensor<double>> g{Tensor<double>({1}, grad)};
    AdamState<double> s(p, {});
    adam_step<double>(p, g, s);
    EXPECT_NEAR(p[0][0], grad > 0 ? -1e-4 : 1e-4, 1e-9);
  }
}

TEST(Adam, ConvergesOnQuadratic) {
  // Reference recurrence written out by hand next to the library call.
  std::vector<Tensor<double>> p{Tensor<double>({1}, 0.0)};
  AdamState<double> s(p, AdamConfig{0.1});
  double w = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * (p[0][0] - 3.0);
    adam_step<double>(p, std::vector<Tensor<double>>{Tensor<double>({1}, g)}, s);
    const double gr = 2.0 * (w - 3.0);
    m = 0.9 * m + 0.1 * gr;
    v = 0.999 * v + 0.001 * gr * gr;
    const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    w -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  }
  EXPECT_NEAR(p[0][0], 3.0, 0.5);
  EXPECT_NEAR(p[0][0], w, 1e-6);
}

TEST(Adam, NanGradientThrowsWithoutUpdating) {
  std::vector<Tensor<double>> p{Tensor<double>({2}, 1.0)};
  const std::vector<Tensor<double>> g{Tensor<double>({2}, std::vector<double>{0.1, std::nan("")})};
  AdamState<double> s(p, {});
  EXPECT_THROW(adam_step<double>(p, g, s), NumericError);
  EXPECT_EQ(s.step, 0);
  EXPECT_EQ(p[0], Tensor<double>({2}, 1.0));
}

}  // namespace
}  // namespace cxr
