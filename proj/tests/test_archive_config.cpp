#include <fstream>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "txst/archive.hpp"
#include "txst/config.hpp"
#include "txst/errors.hpp"

using namespace txst;

TEST(Archive, RoundTripIsByteIdentical) {
  Archive a;
  a.meta = {{"kind", "test"}, {"n", 3}};
  torch::manual_seed(0);
  a.tensors["b.float"] = torch::randn({2, 3});
  a.tensors["a.double"] = torch::randn({4}, torch::kFloat64);
  a.tensors["c.long"] = torch::arange(5);
  a.tensors["d.byte"] = torch::arange(7).to(torch::kUInt8);
  const auto bytes = a.serialize();
  auto b = Archive::deserialize(bytes);
  EXPECT_EQ(b.meta, a.meta);
  for (const auto& [name, t] : a.tensors) {
    ASSERT_TRUE(b.contains(name));
    EXPECT_TRUE(torch::equal(b.at(name), t)) << name;
    EXPECT_EQ(b.at(name).scalar_type(), t.scalar_type());
  }
  EXPECT_EQ(b.serialize(), bytes);
}

TEST(Archive, InsertionOrderDoesNotChangeBytes) {
  Archive a, b;
  a.tensors["x"] = torch::ones({2});
  a.tensors["y"] = torch::zeros({3});
  b.tensors["y"] = torch::zeros({3});
  b.tensors["x"] = torch::ones({2});
  EXPECT_EQ(a.serialize(), b.serialize());
}

TEST(Archive, RejectsCorruptInput) {
  Archive a;
  a.tensors["x"] = torch::ones({4});
  auto bytes = a.serialize();
  EXPECT_THROW(Archive::deserialize(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  EXPECT_THROW(Archive::deserialize("NOTANARCHIVE"), CheckpointError);
  EXPECT_THROW(Archive::deserialize(bytes + "x"), CheckpointError);
  EXPECT_THROW(a.at("missing"), CheckpointError);
}

TEST(Archive, SaveReplacesAtomically) {
  const auto dir = test::scratch_dir("archive");
  Archive a;
  a.tensors["x"] = torch::ones({2});
  a.save(dir / "a.txst");
  a.tensors["x"] = torch::zeros({2});
  a.save(dir / "a.txst");
  EXPECT_TRUE(torch::equal(Archive::load(dir / "a.txst").at("x"), torch::zeros({2})));
  EXPECT_FALSE(std::filesystem::exists(dir / "a.txst.tmp"));
  EXPECT_THROW(Archive::load(dir / "missing.txst"), CheckpointError);
}

TEST(Archive, ModuleExportImport) {
  torch::nn::Linear src(3, 2), dst(3, 2);
  Archive a;
  export_module(*src, "lin", a);
  EXPECT_TRUE(a.contains("lin.weight"));
  EXPECT_TRUE(a.contains("lin.bias"));
  import_module(*dst, "lin", a);
  EXPECT_TRUE(torch::equal(src->weight, dst->weight));
  EXPECT_EQ(parameter_hash(*src), parameter_hash(*dst));

  torch::nn::Linear wrong(4, 2);
  EXPECT_THROW(import_module(*wrong, "lin", a), CheckpointError);
  EXPECT_THROW(import_module(*dst, "other", a), CheckpointError);
}

TEST(Archive, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Config, DefaultsCarryPaperWeights) {
  const auto c = default_config();
  const auto& w = c["loss"]["weights"];
  EXPECT_EQ(w["clip"], 100.0);
  EXPECT_EQ(w["clip_f"], 50.0);
  EXPECT_EQ(w["sim"], 10.0);
  EXPECT_EQ(w["sty"], 5.0);
  EXPECT_EQ(w["con"], 1.0);
  EXPECT_EQ(w["id"], 2.0);
  EXPECT_EQ(c["train"]["lr"], 1e-4);
  EXPECT_EQ(c["train"]["batch_size"], 30);
  EXPECT_EQ(c["train"]["iterations"], 100000);
  EXPECT_EQ(c["fusion"]["order"], 2);
  EXPECT_EQ(c["mapper"]["grid"], 16);
  EXPECT_EQ(c["loss"]["source_text"], "Photo");
  EXPECT_EQ(c["service"]["max_upload_bytes"], 16 * 1024 * 1024);
}

TEST(Config, OverridesAreTypeChecked) {
  auto c = default_config();
  apply_override(c, "loss.weights.clip", "3.5");
  EXPECT_EQ(c["loss"]["weights"]["clip"], 3.5);
  apply_override(c, "train.batch_size", "4");
  EXPECT_EQ(c["train"]["batch_size"], 4);
  apply_override(c, "loss.source_text", "42");
  EXPECT_EQ(c["loss"]["source_text"], "42");
  apply_override(c, "train.deterministic", "false");
  EXPECT_EQ(c["train"]["deterministic"], false);
  EXPECT_THROW(apply_override(c, "train.batch_size", "many"), ConfigError);
  EXPECT_THROW(apply_override(c, "train.deterministic", "1.5"), ConfigError);
  EXPECT_THROW(apply_override(c, "train.nope", "1"), ConfigError);
  EXPECT_THROW(apply_override(c, "train", "1"), ConfigError);
}

TEST(Config, PresetsAndFiles) {
  auto c = default_config();
  apply_preset(c, "general");
  EXPECT_EQ(c["loss"]["weights"]["clip"], 10.0);
  apply_preset(c, "artist");
  EXPECT_EQ(c["loss"]["weights"]["clip"], 100.0);
  EXPECT_THROW(apply_preset(c, "other"), ConfigError);

  const auto dir = test::scratch_dir("config");
  std::ofstream(dir / "ok.json") << R"({"train": {"preset": "general", "lr": 0.001}})";
  auto loaded = load_config(dir / "ok.json");
  EXPECT_EQ(loaded["train"]["lr"], 0.001);
  EXPECT_EQ(loaded["loss"]["weights"]["clip"], 10.0);
  std::ofstream(dir / "bad.json") << R"({"train": {"learning_rate": 1}})";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  std::ofstream(dir / "broken.json") << "{";
  EXPECT_THROW(load_config(dir / "broken.json"), ConfigError);
  EXPECT_EQ(config_at(loaded, "fusion.order"), 2);
  EXPECT_THROW(config_at(loaded, "fusion.nothing"), ConfigError);
}
