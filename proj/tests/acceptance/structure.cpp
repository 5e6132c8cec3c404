#include <algorithm>
#include <numeric>
#include <vector>

#include <fmt/format.h>

#include "criteria.hpp"
#include "oracles.hpp"
#include "shufflerl/features.hpp"
#include "shufflerl/network.hpp"

namespace acceptance {

using namespace shufflerl;

namespace {

// Distinct values per slot so any misplacement shows up: prices are
// 1000+i, holdings 2000+i, ratio j of ticker i is 10000+100j+i.
FeatureVector tagged_vector(std::size_t d) {
  const FeatureLayout layout(d);
  std::vector<double> prices(d);
  std::vector<std::int64_t> holdings(d);
  std::vector<Ratios> ratios(d);
  for (std::size_t i = 0; i < d; ++i) {
    prices[i] = 1000.0 + static_cast<double>(i);
    holdings[i] = 2000 + static_cast<std::int64_t>(i);
    for (std::size_t j = 0; j < kRatioCount; ++j)
      ratios[i][j] = 10000.0 + 100.0 * static_cast<double>(j) + static_cast<double>(i);
  }
  return build_feature_vector(layout, 5.0, prices, holdings, ratios, 1.0);
}

}  // namespace

Outcome feature_accounting() {
  const FeatureLayout dow(30);
  const auto v = tagged_vector(30);
  std::string problems;
  if (dow.total() != 511 || v.values.size() != 511)
    problems += fmt::format("D=30 length {} / {}; ", dow.total(), v.values.size());

  // Block sizes by counting each tag range in the built vector.
  std::size_t balance = 0, prices = 0, holdings = 0, ratios = 0;
  for (std::size_t k = 0; k < v.values.size(); ++k) {
    const double x = v.values[k];
    if (x == 5.0 && k == 0) ++balance;
    else if (x >= 1000.0 && x < 2000.0 && k >= 1 && k <= 30) ++prices;
    else if (x >= 2000.0 && x < 3000.0 && k >= 31 && k <= 60) ++holdings;
    else if (x >= 10000.0 && k >= 61) ++ratios;
  }
  if (balance != 1 || prices != 30 || holdings != 30 || ratios != 450)
    problems += fmt::format("blocks {}/{}/{}/{}; ", balance, prices, holdings, ratios);

  for (std::size_t d = 1; d <= 200; ++d) {
    const FeatureLayout layout(d);
    const auto expected = 1 + 17 * d;
    if (layout.total() != expected || (d <= 60 && tagged_vector(d).values.size() != expected)) {
      problems += fmt::format("D={} length {}; ", d, layout.total());
      break;
    }
  }
  if (!problems.empty()) return {false, problems};
  return {true, "D=30: 511 = 1/30/30/450; 1+17D for D in [1, 200]"};
}

Outcome permutation_suite() {
  oracle::Gen gen(20240611);
  std::size_t checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto d = static_cast<std::size_t>(gen.integer(1, 40));
    const FeatureLayout layout(d);
    FeatureVector v;
    v.values = gen.reals(layout.total(), -1e3, 1e3);

    const auto p = ticker_block_permutation(layout);
    const auto shuffled = apply_permutation(v, p);
    const auto back = apply_permutation(shuffled, invert_permutation(p));
    if (shuffled.tag != LayoutTag::shuffled || back.tag != LayoutTag::canonical ||
        back.values != v.values)
      return {false, fmt::format("round trip failed at D={}", d)};

    auto a = v.values, b = shuffled.values;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) return {false, fmt::format("multiset changed at D={}", d)};

    // Adjacency oracle: ticker i occupies 17 consecutive slots starting at
    // 1 + 17i, holding its price, shares and 15 ratios in that order.
    if (shuffled.values[0] != v.values[0])
      return {false, fmt::format("balance moved at D={}", d)};
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t base = 1 + 17 * i;
      bool ok = shuffled.values[base] == v.values[1 + i] &&
                shuffled.values[base + 1] == v.values[1 + d + i];
      for (std::size_t j = 0; j < 15 && ok; ++j)
        ok = shuffled.values[base + 2 + j] == v.values[1 + 2 * d + j * d + i];
      if (!ok) return {false, fmt::format("ticker {} not contiguous at D={}", i, d)};
    }

    // Random bijections round-trip too, and compose with their inverse to
    // the identity.
    const PermutationSpec r(gen.permutation(layout.total()));
    if (apply_permutation(apply_permutation(v, r), invert_permutation(r)).values != v.values ||
        compose(r, invert_permutation(r)) != PermutationSpec::identity(layout.total()))
      return {false, fmt::format("random permutation round trip failed at D={}", d)};
    ++checked;
  }
  return {true, fmt::format("{} random D in [1, 40]", checked)};
}

Outcome shape_contract() {
  const ArchitectureSpec spec;  // defaults: 90 x 511 input
  // Size-formula oracle for a valid strided window.
  auto out = [](std::size_t in, std::size_t k, std::size_t s) { return (in - k) / s + 1; };
  const std::size_t h1 = out(90, 8, 4), w1 = out(511, 8, 4);
  const std::size_t h2 = out(h1, 4, 2), w2 = out(w1, 4, 2);
  const std::vector<Shape4> expected = {{1, 16, h1, w1}, {1, 32, h2, w2}, {1, 256, 1, 1}};

  ActorCritic net(spec, 1);
  const auto traced = net.trace_shapes(1);

  // Shapes produced by an actual forward pass through the extractor.
  Array4 obs(Shape4{1, 1, 90, 511});
  oracle::Gen gen(3);
  for (auto& x : obs.values()) x = gen.real(-1.0, 1.0);
  auto& cnn = std::get<CnnExtractor>(net.policy_extractor());
  std::vector<Shape4> actual;
  Array4 x = obs;
  for (std::size_t l = 0; l < cnn.conv().size(); ++l) {
    x = relu(batchnorm2d_inference(conv2d_forward(x, cnn.conv()[l]), cnn.batch_norm()[l]));
    actual.push_back(x.shape());
  }
  const auto embedding = cnn.infer(obs);
  actual.push_back(embedding.shape());
  const auto output = net.infer(obs);

  const bool ok = traced == expected && actual == expected &&
                  output.means.shape() == Shape4{1, 30, 1, 1} && output.values.size() == 1 &&
                  h1 == 21 && w1 == 126 && h2 == 9 && w2 == 62;
  std::string detail;
  for (const auto& s : actual) detail += s.to_string() + " ";
  return {ok, fmt::format("(1, 1, 90, 511) -> {}-> means {}", detail,
                          output.means.shape().to_string())};
}

}  // namespace acceptance
