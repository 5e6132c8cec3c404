#include <cmath>
#include <random>
#include <vector>

#include "shufflerl/checkpoint.hpp"
#include "shufflerl/errors.hpp"
#include "shufflerl/grad_check.hpp"
#include "shufflerl/layers.hpp"
#include "shufflerl/network.hpp"
#include "unit_support.hpp"

using namespace shufflerl;

namespace {

Array4 random_array(Shape4 shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Array4 a(shape);
  for (auto& x : a.values()) x = u(rng);
  return a;
}

ArchitectureSpec toy_spec() {
  ArchitectureSpec s;
  s.input_height = 6;
  s.input_width = 8;
  s.action_dim = 2;
  s.conv = {{4, 3, 3, 1, 1}, {8, 2, 2, 1, 1}};
  s.embedding = 16;
  return s;
}

std::vector<std::vector<double>> snapshot(ActorCritic& net) {
  std::vector<std::vector<double>> out;
  for (const auto& p : net.parameters()) out.emplace_back(p.value.begin(), p.value.end());
  return out;
}

}  // namespace

TEST(Conv2d, HandCrossCorrelation) {
  auto p = ConvParams::zeros(1, 1, 2, 2, 1, 1);
  p.weight = {1, 0, 0, 1};
  const Array4 x(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
  const auto y = conv2d_forward(x, p);
  EXPECT_EQ(y.shape(), (Shape4{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 5.0);
}

TEST(Conv2d, IdentityKernelPassesThrough) {
  auto p = ConvParams::zeros(1, 1, 1, 1, 1, 1);
  p.weight = {1.0};
  const auto x = random_array({2, 1, 3, 4}, 5);
  EXPECT_EQ(conv2d_forward(x, p), x);
  const auto up = random_array({2, 1, 3, 4}, 6);
  EXPECT_EQ(conv2d_backward(x, p, up).first, up);
}

TEST(Conv2d, ZeroUpstreamGivesZeroGradients) {
  auto p = ConvParams::zeros(2, 1, 2, 2, 1, 1);
  p.weight = {1, 2, 3, 4, 5, 6, 7, 8};
  const auto x = random_array({1, 1, 3, 4}, 7);
  const auto [dx, g] = conv2d_backward(x, p, Array4(conv2d_output_shape(x.shape(), p)));
  for (double v : dx.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.weight) EXPECT_EQ(v, 0.0);
  for (double v : g.bias) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, OutputSizeFormulaExhaustive) {
  for (std::size_t in = 1; in <= 12; ++in)
    for (std::size_t k = 1; k <= in; ++k)
      for (std::size_t s = 1; s <= 12; ++s) {
        std::size_t count = 0;
        for (std::size_t start = 0; start + k <= in; start += s) ++count;
        EXPECT_EQ(conv_output_size(in, k, s), count) << in << " " << k << " " << s;
      }
  EXPECT_EQ(conv_output_size(90, 8, 4), 21u);
  EXPECT_EQ(conv_output_size(511, 8, 4), 126u);
}

TEST(BatchNorm, ConstantInputNormalizesToZero) {
  auto p = BatchNormParams::identity(2);
  const auto [y, cache] = batchnorm2d(Array4(Shape4{3, 2, 2, 2}, 4.25), p);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, TrainModeMoments) {
  auto p = BatchNormParams::identity(3);
  const auto x = random_array({8, 3, 4, 4}, 9, -3.0, 5.0);
  const auto [y, cache] = batchnorm2d(x, p);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, sq = 0;
    const double n = 8 * 16;
    for (std::size_t b = 0; b < 8; ++b)
      for (std::size_t k = 0; k < 16; ++k) mean += y.at(b, c, k / 4, k % 4) / n;
    for (std::size_t b = 0; b < 8; ++b)
      for (std::size_t k = 0; k < 16; ++k) sq += std::pow(y.at(b, c, k / 4, k % 4) - mean, 2) / n;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq, 1.0, 1e-5);
  }
}

TEST(BatchNorm, InferenceHandExample) {
  auto p = BatchNormParams::identity(1);
  p.running_mean = {2.0};
  p.running_var = {4.0};
  p.gain = {3.0};
  p.shift = {0.5};
  const Array4 x(Shape4{1, 1, 1, 2}, {6.0, 0.0});
  const auto y = batchnorm2d_inference(x, p);
  const double s = std::sqrt(4.0 + p.epsilon);
  EXPECT_DOUBLE_EQ(y[0], 4.0 / s * 3.0 + 0.5);
  EXPECT_DOUBLE_EQ(y[1], -2.0 / s * 3.0 + 0.5);
}

TEST(BatchNorm, InputGradientSumsToZeroPerChannel) {
  auto p = BatchNormParams::identity(3);
  p.gain = {0.7, 1.3, -2.0};
  const auto x = random_array({2, 3, 2, 2}, 10);
  const auto [y, cache] = batchnorm2d(x, p);
  const auto [dx, g] = batchnorm2d_backward(cache, random_array(y.shape(), 11));
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t k = 0; k < 4; ++k) sum += dx.at(b, c, k / 2, k % 2);
    EXPECT_NEAR(sum, 0.0, 1e-12);
  }
}

TEST(Relu, ClampsNegatives) {
  const Array4 x(Shape4{1, 3, 1, 1}, {-1.0, 0.0, 2.0});
  EXPECT_EQ(relu(x).values()[0], 0.0);
  EXPECT_EQ(relu(x).values()[1], 0.0);
  EXPECT_EQ(relu(x).values()[2], 2.0);
}

TEST(Linear, IdentityPassesThrough) {
  auto p = LinearParams::zeros(3, 3);
  p.weight = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const auto x = random_array({2, 3, 1, 1}, 12);
  EXPECT_EQ(linear_forward(x, p), x);
}

TEST(Network, ToyShapes) {
  ActorCritic net(toy_spec(), 3);
  const std::vector<Shape4> expected = {{1, 4, 4, 6}, {1, 8, 3, 5}, {1, 16, 1, 1}};
  EXPECT_EQ(net.trace_shapes(1), expected);
  const auto out = net.infer(random_array(net.input_shape(1), 4));
  EXPECT_EQ(out.means.shape(), (Shape4{1, 2, 1, 1}));
}

TEST(Network, MismatchedLayersRejected) {
  auto s = toy_spec();
  s.conv = {{4, 7, 7, 1, 1}};
  EXPECT_THROW(s.validate(), Error);
}

TEST(Network, IdenticalBatchItemsGiveIdenticalOutputs) {
  ActorCritic net(toy_spec(), 3);
  const auto one = random_array(net.input_shape(1), 13);
  std::vector<double> twice(one.values().begin(), one.values().end());
  twice.insert(twice.end(), one.values().begin(), one.values().end());
  const auto out = net.infer(Array4(net.input_shape(2), twice));
  EXPECT_EQ(out.means[0], out.means[2]);
  EXPECT_EQ(out.means[1], out.means[3]);
  EXPECT_EQ(out.values[0], out.values[1]);
}

TEST(Network, SameSeedSameParameters) {
  ActorCritic a(toy_spec(), 21), b(toy_spec(), 21), c(toy_spec(), 22);
  EXPECT_EQ(snapshot(a), snapshot(b));
  EXPECT_NE(snapshot(a), snapshot(c));
}

TEST(Network, BiasesStartAtZero) {
  ActorCritic net(toy_spec(), 2);
  for (const auto& p : net.parameters())
    if (p.name.ends_with("bias"))
      for (double v : p.value) EXPECT_EQ(v, 0.0) << p.name;
}

TEST(Network, ConvFanInScale) {
  ArchitectureSpec s;
  s.input_height = 13;
  s.input_width = 13;
  s.action_dim = 1;
  s.conv = {{64, 13, 13, 1, 1}};
  s.embedding = 4;
  ActorCritic net(s, 8);
  const auto& w = std::get<CnnExtractor>(net.policy_extractor()).conv().front().weight;
  ASSERT_GE(w.size(), 10000u);
  double mean = 0, sq = 0;
  for (double v : w) mean += v / static_cast<double>(w.size());
  for (double v : w) sq += (v - mean) * (v - mean) / static_cast<double>(w.size() - 1);
  EXPECT_NEAR(std::sqrt(sq), std::sqrt(2.0 / 169.0), 0.03 * std::sqrt(2.0 / 169.0));
}

TEST(GradCheck, LinearIsExact) {
  auto p = LinearParams::zeros(4, 3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& w : p.weight) w = n(rng);
  const auto x = random_array({2, 4, 1, 1}, 2);
  const auto up = random_array({2, 3, 1, 1}, 3);
  LinearGrads g{std::vector<double>(p.weight.size()), std::vector<double>(3)};
  const std::vector<ParamRef> refs = {{"w", p.weight, g.weight}, {"b", p.bias, g.bias}};
  const auto loss = [&] {
    const auto y = linear_forward(x, p);
    double s = 0;
    for (std::size_t k = 0; k < y.size(); ++k) s += y[k] * up[k];
    return s;
  };
  const auto grads = [&] {
    const auto [dx, lg] = linear_backward(x, p, up);
    g.weight = lg.weight;
    g.bias = lg.bias;
  };
  EXPECT_LT(grad_check(refs, loss, grads).max_relative_error, 1e-7);
}

TEST(GradCheck, DetectsCorruptedGradient) {
  std::vector<double> w = {0.3, -1.2, 2.0};
  std::vector<double> g(3);
  const std::vector<ParamRef> refs = {{"w", w, g}};
  const auto loss = [&] { return w[0] * w[0] + w[1] * w[2]; };
  const auto grads = [&] {
    g = {2 * w[0], w[2], w[1]};
    g[1] *= 1.1;
  };
  const auto r = grad_check(refs, loss, grads);
  EXPECT_GT(r.max_relative_error, 1e-2);
  EXPECT_EQ(r.worst_index, 1u);
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = unit::scratch();
  ActorCritic net(toy_spec(), 5);
  const auto obs = random_array(net.input_shape(1), 6);
  net.forward(obs, BnMode::train);  // moves the running statistics off their defaults
  save_checkpoint(dir / "ck", net, {{"agent", "cnn"}});
  auto loaded = load_checkpoint(dir / "ck");
  EXPECT_EQ(loaded.metadata.at("agent"), "cnn");
  EXPECT_EQ(loaded.network.spec(), net.spec());
  EXPECT_EQ(snapshot(loaded.network), snapshot(net));
  EXPECT_EQ(loaded.network.infer(obs).means, net.infer(obs).means);
}

TEST(Checkpoint, TruncatedBlobRejected) {
  const auto dir = unit::scratch();
  ActorCritic net(toy_spec(), 5);
  save_checkpoint(dir / "ck", net);
  std::filesystem::resize_file(dir / "ck" / "params.bin", 16);
  EXPECT_THROW(load_checkpoint(dir / "ck"), DataError);
}
