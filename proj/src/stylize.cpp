#include "txst/stylize.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include "txst/config.hpp"
#include "txst/errors.hpp"
#include "txst/image.hpp"

namespace txst {

StylePrompt StylePrompt::from_text(std::string text) {
  StylePrompt p;
  p.components.push_back({PromptKind::kText, std::move(text), {}, 1.0});
  return p;
}

StylePrompt StylePrompt::from_image(torch::Tensor image) {
  StylePrompt p;
  p.components.push_back({PromptKind::kImage, {}, std::move(image), 1.0});
  return p;
}

std::vector<double> StylePrompt::normalized_weights() const {
  if (components.empty()) throw DegenerateInput("style prompt has no components");
  double sum = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) throw DegenerateInput("prompt weights must be non-negative");
    sum += c.weight;
  }
  if (sum <= 0.0) throw DegenerateInput("prompt weights sum to zero");
  std::vector<double> w;
  for (const auto& c : components) w.push_back(c.weight / sum);
  return w;
}

bool StylePrompt::all_text() const {
  return std::all_of(components.begin(), components.end(), [](const auto& c) { return c.kind == PromptKind::kText; });
}

std::string StylePrompt::combined_text() const {
  std::string out;
  for (const auto& c : components) {
    if (c.kind != PromptKind::kText) throw DegenerateInput("only text prompts can be combined into one string");
    if (!out.empty()) out += " and ";
    out += c.text;
  }
  return out;
}

torch::Tensor StylePrompt::resolve(const clip::ClipAdapter& clip) const {
  const auto weights = normalized_weights();
  if (combine_text && all_text() && components.size() > 1) return clip.encode_text(combined_text()).values();
  torch::Tensor sum;
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto& c = components[i];
    auto e = c.kind == PromptKind::kText ? clip.encode_text(c.text).values() : clip.encode_image(c.image).values();
    if (components.size() == 1) return e;
    e = e * weights[i];
    sum = sum.defined() ? sum + e : e;
  }
  return sum;
}

torch::Tensor limit_longest_side(const torch::Tensor& image, std::int64_t max_side) {
  const auto h = image.size(-2);
  const auto w = image.size(-1);
  const auto longest = std::max(h, w);
  if (max_side <= 0 || longest <= max_side) return image;
  const double s = static_cast<double>(max_side) / static_cast<double>(longest);
  return resize_to(image, std::max<std::int64_t>(1, std::llround(h * s)), std::max<std::int64_t>(1, std::llround(w * s)));
}

Stylizer::Stylizer(const std::filesystem::path& checkpoint, const nlohmann::json& patch) {
  std::ifstream in(checkpoint, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + checkpoint.string());
  std::ostringstream bytes;
  bytes << in.rdbuf();
  const auto raw = bytes.str();
  auto archive = Archive::deserialize(raw);
  if (archive.meta.value("kind", "") != "txst") throw CheckpointError(checkpoint.string() + " is not a txst checkpoint");
  checkpoint_hash_ = sha256_hex(raw);
  meta_ = archive.meta;
  meta_.erase("rng");
  meta_.erase("optimizer_steps");
  auto config = archive.meta.at("config");
  merge_config(config, patch);
  model_ = std::make_unique<StyleTransferModel>(config);
  if (model_->frozen_identity() != archive.meta.at("frozen")) {
    throw CheckpointError("frozen encoder or embedder weights differ from the ones " + checkpoint.string() +
                          " was trained with");
  }
  model_->import_parameters(archive);
  model_->train_mode(false);
  artists_ = archive.meta.at("artists").get<std::vector<std::string>>();
}

std::int64_t Stylizer::fusion_order() const { return model_->fusion()->options().order; }

nlohmann::json Stylizer::info() const {
  return {{"checkpoint_hash", checkpoint_hash_},
          {"fusion_order", fusion_order()},
          {"stage", meta_.at("stage")},
          {"iteration", meta_.at("iteration")},
          {"artists", artists_},
          {"frozen", meta_.at("frozen")}};
}

torch::Tensor Stylizer::stylize_embedding(const torch::Tensor& content, const torch::Tensor& embedding,
                                          double alpha) const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DegenerateInput("strength must lie in [0, 1]");
  if (content.dim() != 3 || content.size(0) != 3) throw ShapeError("expected a [3,H,W] content image");
  const auto h = content.size(1);
  const auto w = content.size(2);
  if (alpha == 0.0) return content.clone();
  torch::NoGradGuard no_grad;
  // The decoder upsamples three times, so work on a multiple of 8.
  const auto ph = (8 - h % 8) % 8;
  const auto pw = (8 - w % 8) % 8;
  auto x = content.unsqueeze(0);
  if (ph != 0 || pw != 0) {
    x = torch::nn::functional::pad(x, torch::nn::functional::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
  }
  auto out = model_->stylize(x, embedding.reshape({1, -1})).clamp(0.0, 1.0);
  out = out.slice(2, 0, h).slice(3, 0, w).squeeze(0);
  if (alpha == 1.0) return out;
  return out * alpha + content * (1.0 - alpha);
}

torch::Tensor Stylizer::stylize(const torch::Tensor& content, const StylePrompt& prompt, double alpha) const {
  return stylize_embedding(content, prompt.resolve(model_->clip()), alpha);
}

}  // namespace txst
