#include <gtest/gtest.h>

#include <fstream>

#include "test_support.hpp"
#include "txst/data.hpp"
#include "txst/errors.hpp"
#include "txst/image.hpp"

using namespace txst;
namespace fs = std::filesystem;

namespace {

void write_image(const fs::path& path, int seed, std::int64_t h = 20, std::int64_t w = 24) {
  fs::create_directories(path.parent_path());
  torch::manual_seed(seed);
  save_png(path, torch::rand({3, h, w}));
}

/// content/ with `contents` images, style/<artist>/ with the given painting counts.
fs::path make_tree(const std::string& name, int contents, const std::vector<std::pair<std::string, int>>& artists) {
  auto root = test::scratch_dir(name);
  for (int i = 0; i < contents; ++i) write_image(root / "content" / ("c" + std::to_string(i) + ".png"), i);
  int seed = 100;
  for (const auto& [artist, count] : artists) {
    for (int i = 0; i < count; ++i) write_image(root / "style" / artist / ("p" + std::to_string(i) + ".png"), seed++);
  }
  return root;
}

clip::PromptTemplates templates() {
  return clip::PromptTemplates({"a painting by {name}", "artwork of {name}", "{name} style"});
}

Manifest synthetic_corpus(std::size_t artists, std::size_t paintings, std::size_t contents) {
  Manifest m;
  m.content_root = "c";
  m.style_root = "s";
  for (std::size_t i = 0; i < contents; ++i) m.contents.push_back({"c" + std::to_string(i) + ".png", ""});
  for (std::size_t a = 0; a < artists; ++a) {
    ArtistEntry e{"Artist " + std::to_string(a), "Artist_" + std::to_string(a), {}};
    for (std::size_t p = 0; p < paintings; ++p) e.paintings.push_back({"p" + std::to_string(p) + ".png", ""});
    m.artists.push_back(e);
  }
  return m;
}

}  // namespace

TEST(Manifest, CountsContentsAndPaintings) {
  auto root = make_tree("manifest_count", 5, {{"Alpha_Painter", 3}, {"Beta", 3}});
  auto m = build_manifest(root / "content", root / "style");
  EXPECT_EQ(m.contents.size(), 5u);
  EXPECT_EQ(m.artists.size(), 2u);
  EXPECT_EQ(m.painting_count(), 6u);
  EXPECT_EQ(m.artists[0].name, "Alpha Painter");
  EXPECT_EQ(m.artists[0].directory, "Alpha_Painter");
  EXPECT_EQ(m.contents[0].sha256.size(), 64u);
  EXPECT_TRUE(m.warnings.empty());
}

TEST(Manifest, ExcludesArtistsWithOnePainting) {
  auto root = make_tree("manifest_exclude", 2, {{"Alone", 1}, {"Pair", 2}});
  auto m = build_manifest(root / "content", root / "style");
  ASSERT_EQ(m.artists.size(), 1u);
  EXPECT_EQ(m.artists[0].name, "Pair");
  ASSERT_EQ(m.warnings.size(), 1u);
  EXPECT_NE(m.warnings[0].find("Alone"), std::string::npos);
}

TEST(Manifest, RebuildIsByteIdenticalAndRoundTrips) {
  auto root = make_tree("manifest_bytes", 3, {{"A", 2}, {"B", 4}});
  auto first = build_manifest(root / "content", root / "style").dump();
  auto second = build_manifest(root / "content", root / "style").dump();
  EXPECT_EQ(first, second);

  auto m = build_manifest(root / "content", root / "style");
  m.save(root / "manifest.json");
  auto loaded = Manifest::load(root / "manifest.json");
  EXPECT_TRUE(fs::exists(loaded.content_path(0)));
  EXPECT_TRUE(fs::exists(loaded.painting_path(1, 3)));
  EXPECT_EQ(loaded.to_json()["artists"], m.to_json()["artists"]);
}

TEST(Manifest, EmptyRootsThrow) {
  auto root = make_tree("manifest_empty", 0, {{"A", 2}});
  fs::create_directories(root / "content");
  EXPECT_THROW(build_manifest(root / "content", root / "style"), DegenerateInput);
  auto other = make_tree("manifest_nostyle", 2, {{"A", 1}});
  EXPECT_THROW(build_manifest(other / "content", other / "style"), DegenerateInput);
}

TEST(Manifest, InvalidFileIsConfigError) {
  auto dir = test::scratch_dir("manifest_bad");
  std::ofstream(dir / "manifest.json") << "{not json";
  EXPECT_THROW(Manifest::load(dir / "manifest.json"), ConfigError);
}

TEST(Patch, PaperSizeAndSeeded) {
  auto dir = test::scratch_dir("patch");
  write_image(dir / "wide.png", 1, 300, 700);
  PatchOptions options;
  auto a = load_training_patch(dir / "wide.png", 9, options);
  EXPECT_EQ(a.sizes(), (std::vector<std::int64_t>{3, 256, 256}));
  EXPECT_TRUE(torch::equal(a, load_training_patch(dir / "wide.png", 9, options)));
  EXPECT_FALSE(torch::equal(a, load_training_patch(dir / "wide.png", 10, options)));
  options.resize = ResizeMode::kSquash;
  EXPECT_EQ(load_training_patch(dir / "wide.png", 9, options).sizes(), (std::vector<std::int64_t>{3, 256, 256}));
}

TEST(Patch, ShorterSideResize) {
  auto img = torch::rand({3, 30, 60});
  auto resized = resize_for_training(img, PatchOptions{40, 32, ResizeMode::kShorterSide});
  EXPECT_EQ(resized.size(1), 40);
  EXPECT_EQ(resized.size(2), 80);
  auto squashed = resize_for_training(img, PatchOptions{40, 32, ResizeMode::kSquash});
  EXPECT_EQ(squashed.size(1), 40);
  EXPECT_EQ(squashed.size(2), 40);
}

TEST(Patch, FlipFrequencyIsBalanced) {
  std::mt19937_64 rng(2022);
  int flips = 0;
  for (int i = 0; i < 10000; ++i) flips += draw_patch_geometry(512, 683, 256, rng).flip ? 1 : 0;
  EXPECT_GE(flips, 4500);
  EXPECT_LE(flips, 5500);
}

TEST(Patch, CropStaysInside) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    auto g = draw_patch_geometry(300, 500, 256, rng);
    EXPECT_GE(g.top, 0);
    EXPECT_GE(g.left, 0);
    EXPECT_LE(g.top + 256, 300);
    EXPECT_LE(g.left + 256, 500);
  }
}

TEST(ImageStore, CorruptFilesAreSkippedAndPersisted) {
  auto dir = test::scratch_dir("corrupt");
  std::ofstream(dir / "bad.png") << "not an image";
  ImageStore store(PatchOptions{40, 32}, dir / "skip.txt");
  EXPECT_THROW(store.resized(dir / "bad.png"), CorruptImage);
  EXPECT_TRUE(store.skipped(dir / "bad.png"));
  EXPECT_EQ(store.skip_list().size(), 1u);
  ImageStore reopened(PatchOptions{40, 32}, dir / "skip.txt");
  EXPECT_TRUE(reopened.skipped(dir / "bad.png"));
}

TEST(Minibatch, PairsShareArtistAndDiffer) {
  auto m = synthetic_corpus(3, 4, 10);
  auto t = templates();
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto b = sample_minibatch(m, 6, seed, t);
    ASSERT_EQ(b.size(), 6u);
    EXPECT_FALSE(b.with_replacement);
    std::set<std::size_t> distinct(b.content.begin(), b.content.end());
    EXPECT_EQ(distinct.size(), 6u);
    for (std::size_t i = 0; i < b.size(); ++i) {
      EXPECT_NE(b.style_a[i], b.style_b[i]);
      EXPECT_LT(b.style_a[i], m.artists[b.artist[i]].paintings.size());
      EXPECT_LT(b.style_b[i], m.artists[b.artist[i]].paintings.size());
      EXPECT_NE(b.prompts_a[i].find(m.artists[b.artist[i]].name), std::string::npos);
      EXPECT_NE(b.prompts_b[i].find(m.artists[b.artist[i]].name), std::string::npos);
    }
  }
}

TEST(Minibatch, SeededAndReplacementFlag) {
  auto m = synthetic_corpus(2, 3, 4);
  auto t = templates();
  auto a = sample_minibatch(m, 3, 77, t);
  auto b = sample_minibatch(m, 3, 77, t);
  EXPECT_EQ(a.content, b.content);
  EXPECT_EQ(a.style_a, b.style_a);
  EXPECT_EQ(a.prompts_b, b.prompts_b);
  auto big = sample_minibatch(m, 30, 1, t);
  EXPECT_EQ(big.size(), 30u);
  EXPECT_TRUE(big.with_replacement);
  EXPECT_THROW(sample_minibatch(m, 1, 1, t), DegenerateInput);
}

TEST(Minibatch, EveryArtistAppearsOnThirteenArtistCorpus) {
  auto m = synthetic_corpus(13, 40, 30);
  auto t = templates();
  std::set<std::size_t> seen;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    auto b = sample_minibatch(m, 4, rng, t);
    seen.insert(b.artist.begin(), b.artist.end());
  }
  EXPECT_EQ(seen.size(), 13u);
}

TEST(Minibatch, ExcludedEntriesAreNeverDrawn) {
  auto m = synthetic_corpus(2, 3, 5);
  std::set<std::string> excluded = {m.content_path(0).generic_string(), m.painting_path(0, 0).generic_string()};
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    auto b = sample_minibatch(m, 3, rng, templates(), excluded);
    for (std::size_t s = 0; s < b.size(); ++s) {
      EXPECT_NE(b.content[s], 0u);
      if (b.artist[s] == 0) {
        EXPECT_NE(b.style_a[s], 0u);
        EXPECT_NE(b.style_b[s], 0u);
      }
    }
  }
}
