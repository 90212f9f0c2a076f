#include <set>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "txst/archive.hpp"
#include "txst/clip/adapter.hpp"
#include "txst/errors.hpp"
#include "txst/image.hpp"
#include "txst/model.hpp"

using namespace txst;
using namespace txst::clip;

namespace {

const ClipAdapter& desk_clip() {
  static const ClipAdapter adapter(clip_options(default_config()));
  return adapter;
}

const BpeTokenizer& tokenizer() { return desk_clip().tokenizer(); }

torch::Tensor painting(const std::string& artist, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "painting_%02d.png", index);
  return load_image(test::fixture_dir() / "desk" / "style" / artist / name);
}

}  // namespace

TEST(Tokenizer, MatchesReferenceIds) {
  // Ids produced by the reference CLIP tokenizer.
  EXPECT_EQ(tokenizer().encode("Photo"), (std::vector<std::int64_t>{1125}));
  EXPECT_EQ(tokenizer().encode("a painting by Vincent van Gogh"),
            (std::vector<std::int64_t>{320, 3086, 638, 10357, 2451, 19697}));
  const auto row = tokenizer().tokenize("Photo");
  ASSERT_EQ(row.size(), 77u);
  EXPECT_EQ(row[0], 49406);
  EXPECT_EQ(row[1], 1125);
  EXPECT_EQ(row[2], 49407);
  EXPECT_EQ(row[3], 0);
  EXPECT_EQ(tokenizer().vocab_size(), 49408);
}

TEST(Tokenizer, CleansAndRoundTrips) {
  EXPECT_EQ(tokenizer().encode("  Van   GOGH "), tokenizer().encode("van gogh"));
  EXPECT_EQ(tokenizer().decode(tokenizer().encode("a painting by claude monet")), "a painting by claude monet");
  EXPECT_TRUE(tokenizer().encode("").empty());
}

TEST(Tokenizer, RejectsOverlongPrompts) {
  std::string text;
  for (int i = 0; i < 80; ++i) text += "word ";
  try {
    tokenizer().tokenize(text);
    FAIL() << "expected PromptTooLong";
  } catch (const PromptTooLong& e) {
    EXPECT_EQ(e.limit(), 77u);
    EXPECT_GT(e.tokens(), 77u);
  }
  EXPECT_THROW(desk_clip().encode_text(text), PromptTooLong);
}

TEST(ClipAdapter, TextEmbeddingsAreDeterministic) {
  const auto a = desk_clip().encode_text("Photo");
  const auto b = desk_clip().encode_text("Photo");
  EXPECT_EQ(a.dim(), 512);
  EXPECT_TRUE(torch::equal(a.values(), b.values()));
  const auto gogh = desk_clip().encode_text("Van Gogh");
  const auto monet = desk_clip().encode_text("Claude Monet");
  EXPECT_LT(clip::cosine_similarity(gogh.values(), monet.values()), 1.0);
  EXPECT_THROW(desk_clip().encode_text(""), DegenerateInput);
}

TEST(ClipAdapter, BatchAndSingleTextAgree) {
  auto batch = desk_clip().encode_texts({"Photo", "Claude Monet"});
  EXPECT_TRUE(torch::allclose(batch[1], desk_clip().encode_text("Claude Monet").values(), 1e-5, 1e-6));
}

TEST(ClipAdapter, ImageEmbeddings) {
  const auto img = painting("Vincent_van_Gogh", 0);
  const auto a = desk_clip().encode_image(img);
  EXPECT_EQ(a.dim(), 512);
  EXPECT_TRUE(torch::equal(a.values(), desk_clip().encode_image(img).values()));
  // One-pixel horizontal shift.
  auto shifted = torch::cat({img.slice(2, 1), img.slice(2, -1)}, 2);
  EXPECT_GT(clip::cosine_similarity(a.values(), desk_clip().encode_image(shifted).values()), 0.9);
  EXPECT_THROW(desk_clip().encode_image(torch::rand({4, 32, 32})), ShapeError);
  EXPECT_THROW(desk_clip().encode_image(torch::rand({1, 3, 32, 32})), ShapeError);
}

TEST(ClipAdapter, TokenFeatures) {
  const auto a = desk_clip().encode_image_tokens(painting("Vincent_van_Gogh", 0), "gogh0");
  const auto b = desk_clip().encode_image_tokens(painting("Claude_Monet", 0), "monet0");
  EXPECT_EQ(a.values.dim(), 1);
  EXPECT_EQ(a.values.size(0), desk_clip().token_feature_dim());
  EXPECT_EQ(a.source_id, "gogh0");
  EXPECT_TRUE(torch::isfinite(a.values).all().item<bool>());
  EXPECT_FALSE(torch::equal(a.values, b.values));
  EXPECT_TRUE(torch::equal(a.values, desk_clip().encode_image_tokens(painting("Vincent_van_Gogh", 0)).values));
}

TEST(ClipAdapter, GradientsReachOnlyTheImage) {
  auto images = torch::rand({2, 3, 40, 48}).requires_grad_(true);
  auto enc = desk_clip().encode_images(images);
  (enc.embedding.sum() + enc.tokens.sum()).backward();
  ASSERT_TRUE(images.grad().defined());
  EXPECT_GT(images.grad().abs().sum().item<double>(), 0.0);
}

TEST(ClipAdapter, CheckpointRoundTrip) {
  const auto dir = test::scratch_dir("clip");
  ClipModel model(ClipConfig::from_preset("desk"));
  torch::manual_seed(3);
  model->initialize();
  save_clip_checkpoint(model, false, dir / "clip.txst");
  auto opts = clip_options(default_config());
  opts.checkpoint = dir / "clip.txst";
  const ClipAdapter loaded(opts);
  EXPECT_FALSE(loaded.pretrained());
  EXPECT_EQ(loaded.weights_hash(), parameter_hash(*model));
  Archive other;
  other.meta = {{"kind", "vgg19"}};
  other.save(dir / "wrong.txst");
  opts.checkpoint = dir / "wrong.txst";
  EXPECT_THROW(ClipAdapter{opts}, CheckpointError);
}

TEST(Cosine, Examples) {
  auto v = torch::randn({512});
  EXPECT_NEAR(clip::cosine_similarity(v, v), 1.0, 1e-12);
  EXPECT_NEAR(clip::cosine_similarity(v, -v), -1.0, 1e-12);
  EXPECT_NEAR(clip::cosine_similarity(torch::tensor({1.0, 0.0}), torch::tensor({0.0, 1.0})), 0.0, 1e-12);
  EXPECT_THROW(clip::cosine_similarity(torch::zeros({3}), torch::ones({3})), DegenerateInput);
  EXPECT_THROW(clip::cosine_similarity(torch::ones({3}), torch::ones({4})), ShapeError);
  EXPECT_THROW(cosine_similarity_rows(torch::zeros({2, 3}), torch::ones({2, 3})), DegenerateInput);
}

TEST(Cosine, SymmetricProperty) {
  torch::manual_seed(9);
  for (int i = 0; i < 50; ++i) {
    auto a = torch::randn({16}, torch::kFloat64);
    auto b = torch::randn({16}, torch::kFloat64);
    EXPECT_EQ(clip::cosine_similarity(a, b), clip::cosine_similarity(b, a));
    const double s = clip::cosine_similarity(a, b);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(PromptTemplates, AugmentationContract) {
  const auto t = PromptTemplates::load(asset_dir() / "prompt_templates.txt");
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.augment("Van Gogh", 0), t.augment("Van Gogh", 0));
  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = t.augment("Van Gogh", seed);
    EXPECT_NE(s.find("Van Gogh"), std::string::npos);
    seen.insert(s);
  }
  EXPECT_GE(seen.size(), 2u);
  EXPECT_EQ(t.apply(1, "Claude Monet"), "a painting by Claude Monet");
  EXPECT_THROW(PromptTemplates({"no placeholder"}), ConfigError);
}
