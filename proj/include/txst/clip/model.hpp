#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace txst::clip {

/// Architecture hyper-parameters of a CLIP-style joint embedder.
struct ClipConfig {
  std::string name = "ViT-B/32";
  std::int64_t embed_dim = 512;
  std::int64_t image_resolution = 224;
  std::int64_t patch_size = 32;
  std::int64_t vision_width = 768;
  std::int64_t vision_layers = 12;
  std::int64_t vision_heads = 12;
  std::int64_t context_length = 77;
  std::int64_t vocab_size = 49408;
  std::int64_t text_width = 512;
  std::int64_t text_layers = 12;
  std::int64_t text_heads = 8;

  /// The published ViT-B/32 layout.
  static ClipConfig vit_b32();
  /// Reduced layout with the same interface, for CPU-only desk runs and tests.
  static ClipConfig desk();
  static ClipConfig from_preset(const std::string& preset);

  nlohmann::json to_json() const;
  static ClipConfig from_json(const nlohmann::json& j);
};

/// Multi-head self attention with a packed input projection, parameter layout
/// `in_proj_weight`, `in_proj_bias`, `out_proj.{weight,bias}`.
class PackedAttentionImpl : public torch::nn::Module {
 public:
  PackedAttentionImpl(std::int64_t width, std::int64_t heads);
  /// x: [B, L, W]; mask: additive [L, L] or undefined.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask = {});

 private:
  std::int64_t heads_;
  torch::Tensor in_proj_weight_, in_proj_bias_;
  torch::nn::Linear out_proj_{nullptr};
};
TORCH_MODULE(PackedAttention);

class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(std::int64_t width, std::int64_t heads);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask = {});

 private:
  torch::nn::LayerNorm ln_1_{nullptr}, ln_2_{nullptr};
  PackedAttention attn_{nullptr};
  torch::nn::Sequential mlp_{nullptr};
};
TORCH_MODULE(ResidualBlock);

class TransformerImpl : public torch::nn::Module {
 public:
  TransformerImpl(std::int64_t width, std::int64_t layers, std::int64_t heads);
  torch::Tensor forward(torch::Tensor x, const torch::Tensor& mask = {});

 private:
  std::vector<ResidualBlock> blocks_;
};
TORCH_MODULE(Transformer);

class VisionTransformerImpl : public torch::nn::Module {
 public:
  explicit VisionTransformerImpl(const ClipConfig& cfg);
  /// Returns the pooled class-token feature after the final layer norm and
  /// before projection, shape [B, vision_width].
  torch::Tensor pooled(const torch::Tensor& normalized_images);
  torch::Tensor project(const torch::Tensor& pooled_features) const { return pooled_features.matmul(proj_); }

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::Tensor class_embedding_, positional_embedding_, proj_;
  torch::nn::LayerNorm ln_pre_{nullptr}, ln_post_{nullptr};
  Transformer transformer_{nullptr};
};
TORCH_MODULE(VisionTransformer);

/// Joint text/image embedder. Parameter names follow the reference CLIP state
/// dict so converted checkpoints load without renaming.
class ClipModelImpl : public torch::nn::Module {
 public:
  explicit ClipModelImpl(const ClipConfig& cfg);

  /// Reference initialization scheme driven by the global torch generator.
  void initialize();

  /// tokens: [B, context_length] int64 -> [B, embed_dim]
  torch::Tensor encode_text(const torch::Tensor& tokens);
  /// images: [B, 3, R, R], already normalized -> [B, vision_width]
  torch::Tensor image_features(const torch::Tensor& normalized_images) { return visual_->pooled(normalized_images); }
  torch::Tensor project_image(const torch::Tensor& features) const { return visual_->project(features); }

  const ClipConfig& config() const { return cfg_; }

 private:
  ClipConfig cfg_;
  VisionTransformer visual_{nullptr};
  torch::nn::Embedding token_embedding_{nullptr};
  torch::Tensor positional_embedding_, text_projection_, logit_scale_, causal_mask_;
  Transformer transformer_{nullptr};
  torch::nn::LayerNorm ln_final_{nullptr};
};
TORCH_MODULE(ClipModel);

}  // namespace txst::clip
