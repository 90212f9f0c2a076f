#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "txst/clip/model.hpp"
#include "txst/clip/tokenizer.hpp"

namespace txst::clip {

inline constexpr std::int64_t kEmbeddingDim = 512;

/// A 512-dimensional vector in the joint text/image space. Values are kept
/// un-normalized; cosine terms normalize internally.
class ClipEmbedding {
 public:
  /// Throws ShapeError unless `values` is a finite 1-D tensor of length 512.
  explicit ClipEmbedding(torch::Tensor values);

  const torch::Tensor& values() const { return values_; }
  std::int64_t dim() const { return values_.size(0); }

 private:
  torch::Tensor values_;
};

/// Pre-projection visual feature of one image.
struct ClipTokenFeature {
  torch::Tensor values;
  std::string source_id;
};

struct ClipAdapterOptions {
  /// Converted checkpoint archive. Empty means: seeded initialization of `preset`.
  std::filesystem::path checkpoint;
  std::string preset = "desk";
  std::uint64_t seed = 1234;
  std::filesystem::path vocab;
};

/// Both outputs of one pass through the vision tower.
struct ImageEncoding {
  torch::Tensor embedding;  // [B, embed_dim]
  torch::Tensor tokens;     // [B, vision_width]
};

/// Frozen joint embedder. All parameters have requires_grad = false, so
/// gradients computed through `encode_images` reach only the input images.
/// The model is immutable after construction; encoding is safe to call from
/// several threads.
class ClipAdapter {
 public:
  explicit ClipAdapter(const ClipAdapterOptions& options);

  ClipEmbedding encode_text(std::string_view prompt) const;
  /// [B, 512], no autograd history.
  torch::Tensor encode_texts(const std::vector<std::string>& prompts) const;

  ClipEmbedding encode_image(const torch::Tensor& image) const;
  ClipTokenFeature encode_image_tokens(const torch::Tensor& image, std::string source_id = {}) const;

  /// Differentiable batch path: images [B, 3, H, W] in [0, 1] of any size.
  ImageEncoding encode_images(const torch::Tensor& images) const;

  /// Bicubic resize of the shorter side, center crop, channel normalization.
  torch::Tensor preprocess(const torch::Tensor& images) const;

  const ClipConfig& config() const { return model_->config(); }
  std::int64_t token_feature_dim() const { return config().vision_width; }
  /// True only when weights came from a checkpoint marked as pretrained.
  bool pretrained() const { return pretrained_; }
  const std::string& weights_hash() const { return weights_hash_; }
  const BpeTokenizer& tokenizer() const { return *tokenizer_; }

  /// Switches the embedder to float64 (for gradient checks).
  void to(torch::ScalarType dtype);
  torch::ScalarType dtype() const { return dtype_; }

 private:
  mutable ClipModel model_{nullptr};
  std::shared_ptr<const BpeTokenizer> tokenizer_;
  bool pretrained_ = false;
  std::string weights_hash_;
  torch::ScalarType dtype_ = torch::kFloat32;
};

/// Writes the adapter's weights in the archive format it loads from.
void save_clip_checkpoint(const ClipModel& model, bool pretrained, const std::filesystem::path& path);

double cosine_similarity(const torch::Tensor& a, const torch::Tensor& b);

/// Row-wise cosine similarity of two [B, D] tensors (differentiable).
/// Throws DegenerateInput if any row has zero norm.
torch::Tensor cosine_similarity_rows(const torch::Tensor& a, const torch::Tensor& b);

/// Fixed set of prompt templates, each containing one `{name}` placeholder.
class PromptTemplates {
 public:
  explicit PromptTemplates(std::vector<std::string> templates);
  static PromptTemplates load(const std::filesystem::path& path);

  /// Picks a template with a generator seeded by `seed`.
  std::string augment(std::string_view artist_name, std::uint64_t seed) const;
  std::string apply(std::size_t index, std::string_view artist_name) const;

  std::size_t size() const { return templates_.size(); }
  const std::vector<std::string>& templates() const { return templates_; }

 private:
  std::vector<std::string> templates_;
};

}  // namespace txst::clip
