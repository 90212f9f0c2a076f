#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "txst/archive.hpp"
#include "txst/backbone.hpp"
#include "txst/clip/adapter.hpp"
#include "txst/style_conditioner.hpp"
#include "txst/style_fusion.hpp"

namespace txst {

MapperOptions mapper_options(const nlohmann::json& config);
FusionOptions fusion_options(const nlohmann::json& config);
clip::ClipAdapterOptions clip_options(const nlohmann::json& config);

/// Checkpoint namespaces of the trainable parts.
inline constexpr const char* kDecoderNamespace = "decoder";
inline constexpr const char* kMapperNamespace = "positional_mapper";
inline constexpr const char* kFusionNamespace = "poly_attention";

/// Frozen perceptual encoder and joint embedder plus the three trainable parts
/// (decoder, positional mapper, polynomial attention).
class StyleTransferModel {
 public:
  /// Builds every component from `config`. Trainable parts are initialized
  /// from `train.init_seed`; frozen parts load their checkpoints or fall back
  /// to seeded initialization.
  explicit StyleTransferModel(const nlohmann::json& config);

  const nlohmann::json& config() const { return config_; }
  const clip::ClipAdapter& clip() const { return *clip_; }
  std::shared_ptr<const clip::ClipAdapter> clip_ptr() const { return clip_; }
  VggEncoder& encoder() { return encoder_; }
  Decoder& decoder() { return decoder_; }
  PositionalMapper& mapper() { return mapper_; }
  PolynomialAttention& fusion() { return fusion_; }

  /// Trainable parameters keyed by checkpoint name, in name order.
  std::vector<std::pair<std::string, torch::Tensor>> trainable_parameters() const;

  /// embeddings [B, 512] -> style maps [B, 512, G, G]
  torch::Tensor style_maps(const torch::Tensor& embeddings) { return mapper_(embeddings); }
  /// Fused relu4_1 features for content features [B,512,h,w] and style embeddings [B,512].
  torch::Tensor stylized_features(const torch::Tensor& content_features, const torch::Tensor& embeddings);
  /// Full path on raw images, unclamped decoder output.
  torch::Tensor stylize(const torch::Tensor& content_images, const torch::Tensor& embeddings);

  void export_parameters(Archive& archive) const;
  void import_parameters(const Archive& archive, bool decoder_only = false);

  /// Identifiers of the frozen weights (referenced by hash, never stored).
  nlohmann::json frozen_identity() const;

  void train_mode(bool on);

 private:
  nlohmann::json config_;
  std::shared_ptr<clip::ClipAdapter> clip_;
  VggEncoder encoder_{nullptr};
  Decoder decoder_{nullptr};
  PositionalMapper mapper_{nullptr};
  PolynomialAttention fusion_{nullptr};
  std::string encoder_hash_;
};

}  // namespace txst
