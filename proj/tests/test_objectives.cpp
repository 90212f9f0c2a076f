#include <gtest/gtest.h>

#include <numeric>

#include "scalar_oracles.hpp"
#include "test_support.hpp"
#include "txst/errors.hpp"
#include "txst/objectives.hpp"

using namespace txst;

namespace {

torch::Tensor row(std::initializer_list<double> v) {
  return torch::tensor(std::vector<double>(v), torch::kFloat64).unsqueeze(0);
}

FeaturePyramid random_pyramid(std::int64_t batch, double scale) {
  FeaturePyramid p;
  std::int64_t size = 8;
  for (auto layer : kStyleLayers) {
    p[layer] = torch::randn({batch, 4, size, size}, torch::kFloat64) * scale + 0.3;
    size = std::max<std::int64_t>(size / 2, 2);
  }
  return p;
}

}  // namespace

TEST(Directional, Examples) {
  auto content = row({0.1, 0.2, 0.3});
  auto source = row({1.0, -1.0, 0.5});
  auto dt = row({0.3, 0.5, -0.2});
  auto target = source + dt;
  EXPECT_NEAR(directional_clip_loss(content, content + 2.5 * dt, source, target).item<double>(), 0.0, 1e-12);
  EXPECT_NEAR(directional_clip_loss(content, content - dt, source, target).item<double>(), 2.0, 1e-12);
  auto ortho = row({0.5, -0.3, 0.0});
  EXPECT_NEAR(directional_clip_loss(content, content + ortho, source, target).item<double>(), 1.0, 1e-12);
  EXPECT_THROW(directional_clip_loss(content, content, source, target), DegenerateInput);
  EXPECT_THROW(directional_clip_loss(content, content + dt, source, source), DegenerateInput);
}

TEST(Directional, InvariantToPositiveScaling) {
  torch::manual_seed(0);
  auto c = torch::randn({4, 16}, torch::kFloat64);
  auto di = torch::randn({4, 16}, torch::kFloat64);
  auto s = torch::randn({16}, torch::kFloat64);
  auto dt = torch::randn({16}, torch::kFloat64);
  const double base = directional_clip_loss(c, c + di, s, s + dt).item<double>();
  for (double k : {0.01, 3.0, 250.0}) {
    EXPECT_NEAR(directional_clip_loss(c, c + k * di, s, s + dt).item<double>(), base, 1e-9);
    EXPECT_NEAR(directional_clip_loss(c, c + di, s, s + k * dt).item<double>(), base, 1e-9);
  }
  EXPECT_GE(base, 0.0);
  EXPECT_LE(base, 2.0);
}

TEST(Contrastive, UniformSimilarityGivesLogTwo) {
  auto sim = torch::full({3, 3}, 0.4, torch::kFloat64);
  std::vector<std::int64_t> pos = {1, 0, 0};
  EXPECT_NEAR(contrastive_from_similarity(sim, pos, {}).item<double>(), std::log(2.0), 1e-12);
}

TEST(Contrastive, SaturatedSoftmaxIsNearZero) {
  auto sim = torch::full({3, 3}, -1.0, torch::kFloat64);
  sim.fill_diagonal_(1.0);
  sim[0][1] = sim[1][0] = 1.0;
  sim[2][0] = 1.0;
  std::vector<std::int64_t> pos = {1, 0, 0};
  EXPECT_LT(contrastive_from_similarity(sim, pos, {0.1}).item<double>(), 1e-6);
}

TEST(Contrastive, MatchesScalarLoopOracle) {
  torch::manual_seed(1);
  for (int trial = 0; trial < 10; ++trial) {
    auto f = torch::randn({4, 12}, torch::kFloat64);
    std::vector<std::int64_t> labels = {0, 1, 0, 1}, partner = {2, 3, 0, 1};
    const double got = contrastive_term(f, labels, partner, {0.1}).item<double>();
    EXPECT_NEAR(got, oracle::contrastive(oracle::to_matrix(f), partner, 0.1), 1e-6);
  }
}

TEST(Contrastive, SumsImageAndTextTerms) {
  torch::manual_seed(2);
  auto a = torch::randn({4, 6}, torch::kFloat64);
  auto b = torch::randn({4, 6}, torch::kFloat64);
  std::vector<std::int64_t> labels = {0, 1, 0, 1}, partner = {2, 3, 0, 1};
  const double expected = oracle::contrastive(oracle::to_matrix(a), partner, 0.5) +
                          oracle::contrastive(oracle::to_matrix(b), partner, 0.5);
  EXPECT_NEAR(contrastive_similarity_loss(a, b, labels, partner, {0.5}).item<double>(), expected, 1e-9);
}

TEST(Contrastive, MonotoneInPositiveSimilarity) {
  torch::manual_seed(3);
  auto sim = torch::rand({4, 4}, torch::kFloat64) * 2 - 1;
  std::vector<std::int64_t> pos = {1, 0, 3, 2};
  double previous = contrastive_from_similarity(sim, pos, {}).item<double>();
  for (int step = 0; step < 10; ++step) {
    sim[0][1] += 0.1;
    const double now = contrastive_from_similarity(sim, pos, {}).item<double>();
    EXPECT_LT(now, previous);
    previous = now;
  }
}

TEST(Contrastive, RejectsMissingPositives) {
  auto f = torch::randn({3, 4});
  std::vector<std::int64_t> labels = {0, 1, 2}, partner = {1, 0, 0};
  EXPECT_THROW(contrastive_term(f, labels, partner, {}), DegenerateInput);
  std::vector<std::int64_t> self = {0, 0, 0};
  EXPECT_THROW(contrastive_term(f, std::vector<std::int64_t>{0, 0, 0}, self, {}), DegenerateInput);
  EXPECT_THROW(contrastive_from_similarity(torch::zeros({3, 3}), std::vector<std::int64_t>{1, 0, 0}, {0.0}),
               ConfigError);
}

TEST(Contrastive, LiteralModeAveragesEveryTarget) {
  auto sim = torch::full({3, 3}, 0.2, torch::kFloat64);
  EXPECT_NEAR(contrastive_from_similarity(sim, std::vector<std::int64_t>{1, 0, 0}, {0.1, ContrastiveMode::kLiteral})
                  .item<double>(),
              std::log(2.0), 1e-12);
}

TEST(ClipFeature, Examples) {
  auto a = torch::randn({3, 5});
  EXPECT_EQ(clip_feature_loss(a, a).item<double>(), 0.0);
  EXPECT_NEAR(clip_feature_loss(row({3.0, 4.0}), row({0.0, 0.0})).item<double>(), 25.0, 1e-12);
  auto x = torch::tensor({3.0, 4.0, 1.0, 1.0}).view({2, 2});
  auto y = torch::tensor({0.0, 0.0, 0.0, 1.0 + std::sqrt(10.0)}).view({2, 2});
  // Squared distances 25 and 1 + 10 = 11.
  EXPECT_NEAR(clip_feature_loss(x, y).item<double>(), 18.0, 1e-12);
  EXPECT_THROW(clip_feature_loss(x, torch::zeros({2, 3})), ShapeError);
}

TEST(StyleLoss, Examples) {
  torch::manual_seed(4);
  auto p = random_pyramid(2, 1.0);
  EXPECT_EQ(style_loss(p, p).item<double>(), 0.0);

  FeaturePyramid a, b;
  auto base = torch::tensor({1.0, 3.0, 1.0, 3.0}, torch::kFloat64).view({1, 1, 2, 2});
  for (auto layer : kStyleLayers) a[layer] = b[layer] = base;
  b[Layer::kRelu3_4] = base + 3.0;  // mean 2 vs 5, equal std
  EXPECT_NEAR(style_loss(a, b).item<double>(), 3.0, 1e-12);

  FeaturePyramid missing = p;
  missing.erase(Layer::kRelu2_2);
  EXPECT_THROW(style_loss(missing, p), ShapeError);
}

TEST(StyleLoss, MatchesScalarLoopOracle) {
  torch::manual_seed(5);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_pyramid(2, 1.0 + trial);
    auto b = random_pyramid(2, 0.5);
    double expected = 0;
    for (auto layer : kStyleLayers) expected += oracle::moment_distance(a[layer], b[layer], kStatEpsilon);
    EXPECT_NEAR(style_loss(a, b).item<double>(), expected, 1e-6);
  }
}

TEST(ContentLoss, Examples) {
  torch::manual_seed(6);
  auto p = random_pyramid(1, 1.0);
  EXPECT_EQ(content_loss(p, p).item<double>(), 0.0);
  auto q = p;
  q[Layer::kRelu2_2] = p[Layer::kRelu2_2] + 1.0;
  EXPECT_NEAR(content_loss(q, p).item<double>(), static_cast<double>(p[Layer::kRelu2_2].numel()), 1e-9);
  EXPECT_NEAR(content_loss(q, p, Reduction::kMean).item<double>(), 1.0, 1e-12);
  auto r = random_pyramid(1, 2.0);
  const double expected = oracle::l1_sum(r[Layer::kRelu2_2], p[Layer::kRelu2_2]) +
                          oracle::l1_sum(r[Layer::kRelu3_4], p[Layer::kRelu3_4]);
  EXPECT_NEAR(content_loss(r, p).item<double>(), expected, 1e-6);
  q[Layer::kRelu3_4] = torch::zeros({1, 4, 3, 3}, torch::kFloat64);
  EXPECT_THROW(content_loss(q, p), ShapeError);
}

TEST(IdentityLoss, Examples) {
  torch::manual_seed(7);
  auto f = torch::randn({2, 8, 4, 4}, torch::kFloat64);
  EXPECT_EQ(identity_loss(f, f).item<double>(), 0.0);
  EXPECT_NEAR(identity_loss(f + 0.5, f).item<double>(), 0.5 * static_cast<double>(f.numel()), 1e-9);
  auto g = torch::randn({2, 8, 4, 4}, torch::kFloat64);
  EXPECT_NEAR(identity_loss(g, f).item<double>(), oracle::l1_sum(g, f), 1e-6);
  EXPECT_THROW(identity_loss(f, torch::zeros({2, 8, 4, 3})), ShapeError);
}

TEST(TotalLoss, Examples) {
  auto one = torch::ones({}, torch::kFloat64);
  LossTerms ones{one, one, one, one, one, one};
  EXPECT_NEAR(total_loss(ones, LossWeights{}).total_value, 168.0, 1e-12);
  EXPECT_EQ(total_loss(ones, LossWeights{0, 0, 0, 0, 0, 0}).total_value, 0.0);
  auto zero = torch::zeros({}, torch::kFloat64);
  LossTerms single{zero, zero, torch::full({}, 0.37, torch::kFloat64), zero, zero, zero};
  auto report = total_loss(single, LossWeights{});
  EXPECT_NEAR(report.total_value, 3.7, 1e-12);
  EXPECT_NEAR(report.total.item<double>(), 3.7, 1e-12);
  EXPECT_NEAR(report.to_json()["l_sim"].get<double>(), 0.37, 1e-12);
}

TEST(TotalLoss, NonFiniteTermIsNamed) {
  auto one = torch::ones({});
  LossTerms terms{one, one, one, torch::full({}, std::nan("")), one, one};
  try {
    total_loss(terms, LossWeights{});
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_NE(std::string(e.what()).find("l_sty"), std::string::npos);
  }
}

TEST(Objectives, GradientsMatchFiniteDifferences) {
  torch::manual_seed(8);
  auto c = test::leaf(torch::randn({3, 6}));
  auto s = test::leaf(torch::randn({3, 6}));
  auto src = torch::randn({6}, torch::kFloat64);
  auto tgt = torch::randn({6}, torch::kFloat64);
  EXPECT_LT(test::gradient_error([&] { return directional_clip_loss(c, s, src, tgt); }, {c, s}), 1e-3);

  auto f = test::leaf(torch::randn({4, 6}));
  auto g = test::leaf(torch::randn({4, 6}));
  std::vector<std::int64_t> labels = {0, 1, 0, 1}, partner = {2, 3, 0, 1};
  EXPECT_LT(test::gradient_error([&] { return contrastive_similarity_loss(f, g, labels, partner, {}); }, {f, g}),
            1e-3);
  EXPECT_LT(test::gradient_error([&] { return clip_feature_loss(f, g); }, {f, g}), 1e-3);

  auto pa = random_pyramid(1, 1.0);
  auto pb = random_pyramid(1, 1.0);
  for (auto& [layer, t] : pa) t = test::leaf(t);
  std::vector<torch::Tensor> leaves;
  for (auto& [layer, t] : pa) leaves.push_back(t);
  EXPECT_LT(test::gradient_error([&] { return style_loss(pa, pb); }, leaves), 1e-3);
  EXPECT_LT(test::gradient_error([&] { return content_loss(pa, pb); }, leaves), 1e-3);
  auto x = test::leaf(torch::randn({1, 4, 3, 3}));
  auto y = torch::randn({1, 4, 3, 3}, torch::kFloat64);
  EXPECT_LT(test::gradient_error([&] { return identity_loss(x, y); }, {x}), 1e-3);
}
