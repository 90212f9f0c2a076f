#include <gtest/gtest.h>

#include "test_support.hpp"
#include "txst/errors.hpp"
#include "txst/style_conditioner.hpp"

using namespace txst;

TEST(PositionMap, SumsRowAndColumnEncodings) {
  auto r_h = torch::tensor({1.0, 2.0}).view({2, 1, 1});
  auto r_w = torch::tensor({10.0, 20.0, 30.0}).view({1, 3, 1});
  auto r = build_position_map(r_h, r_w);
  ASSERT_EQ(r.sizes(), (std::vector<std::int64_t>{2, 3, 1}));
  auto expected = torch::tensor({11.0, 21.0, 31.0, 12.0, 22.0, 32.0}).view({2, 3, 1});
  EXPECT_TRUE(torch::equal(r, expected));
  EXPECT_THROW(build_position_map(r_h.view({2, 1}), r_w), ShapeError);
}

TEST(Mapper, OutputShape) {
  torch::manual_seed(0);
  PositionalMapper mapper;
  auto out = mapper(torch::randn({3, 512}));
  EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{3, 512, 16, 16}));
  EXPECT_THROW(mapper(torch::randn({3, 256})), ShapeError);
}

TEST(Mapper, ZeroPositionEncodingGivesUniformMap) {
  torch::manual_seed(1);
  PositionalMapper mapper(MapperOptions{8, 32, 1, 0.02});
  torch::NoGradGuard no_grad;
  mapper->r_h().zero_();
  mapper->r_w().zero_();
  auto out = mapper(torch::randn({4, 32}));
  auto spread = (out - out.mean({2, 3}, true)).abs().max().item<double>();
  EXPECT_LT(spread, 1e-6);
}

TEST(Mapper, PositionEncodingBreaksSymmetry) {
  torch::manual_seed(2);
  PositionalMapper mapper(MapperOptions{8, 32, 1, 0.5});
  torch::NoGradGuard no_grad;
  auto out = mapper(torch::randn({2, 32}));
  EXPECT_GT(out.var({2, 3}, false).mean().item<double>(), 1e-8);
}

TEST(Mapper, AttentionRowsAreDistributions) {
  torch::manual_seed(3);
  for (std::int64_t heads : {1, 4}) {
    PositionalMapper mapper(MapperOptions{4, 16, heads, 0.1});
    torch::NoGradGuard no_grad;
    auto w = mapper->attention_weights(torch::randn({2, 16}) * 3);
    EXPECT_EQ(w.sizes(), (std::vector<std::int64_t>{2, heads, 16, 16}));
    EXPECT_GE(w.min().item<double>(), 0.0);
    EXPECT_LT((w.sum(-1) - 1).abs().max().item<double>(), 1e-5);
  }
}

TEST(Mapper, GradientsMatchFiniteDifferences) {
  torch::manual_seed(4);
  PositionalMapper mapper(MapperOptions{3, 8, 2, 0.3});
  mapper->to(torch::kFloat64);
  auto style = test::leaf(torch::randn({2, 8}));
  auto weights = torch::randn({2, 8, 3, 3}, torch::kFloat64);
  std::vector<torch::Tensor> inputs = {style, mapper->r_h(), mapper->r_w()};
  EXPECT_LT(test::gradient_error([&] { return (mapper(style) * weights).sum(); }, inputs), 1e-3);
}
