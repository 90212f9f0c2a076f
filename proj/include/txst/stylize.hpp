#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "txst/model.hpp"

namespace txst {

enum class PromptKind { kText, kImage };

struct PromptComponent {
  PromptKind kind = PromptKind::kText;
  std::string text;    // kText
  torch::Tensor image;  // kImage, [3, H, W]
  double weight = 1.0;
};

/// One or more style indicators. A single component resolves to its own
/// embedding; several are blended by their normalized weights.
struct StylePrompt {
  std::vector<PromptComponent> components;
  /// With only text components, encode "a and b and c" as one string instead
  /// of averaging embeddings.
  bool combine_text = false;

  static StylePrompt from_text(std::string text);
  static StylePrompt from_image(torch::Tensor image);

  /// Weights divided by their sum. Throws DegenerateInput on an empty prompt,
  /// a negative weight or a zero sum.
  std::vector<double> normalized_weights() const;
  std::string combined_text() const;
  bool all_text() const;

  /// [512] embedding in the joint space.
  torch::Tensor resolve(const clip::ClipAdapter& clip) const;
};

/// Inference-only view of a trained checkpoint. Immutable after construction.
class Stylizer {
 public:
  /// `patch` is merged over the checkpoint's config snapshot (used to point at
  /// relocated frozen weights). Throws CheckpointError if the frozen weights
  /// found now differ from the ones the checkpoint was trained against.
  explicit Stylizer(const std::filesystem::path& checkpoint, const nlohmann::json& patch = nlohmann::json::object());

  /// content [3, H, W] in [0,1]. Output has the content's size:
  /// alpha * stylized + (1 - alpha) * content.
  torch::Tensor stylize(const torch::Tensor& content, const StylePrompt& prompt, double alpha = 1.0) const;
  torch::Tensor stylize_embedding(const torch::Tensor& content, const torch::Tensor& embedding,
                                  double alpha = 1.0) const;

  const clip::ClipAdapter& clip() const { return model_->clip(); }
  StyleTransferModel& model() const { return *model_; }
  const std::vector<std::string>& artists() const { return artists_; }
  const std::string& checkpoint_hash() const { return checkpoint_hash_; }
  std::int64_t fusion_order() const;
  /// {"checkpoint_hash", "fusion_order", "stage", "iteration", "clip_pretrained", ...}
  nlohmann::json info() const;

 private:
  std::unique_ptr<StyleTransferModel> model_;
  nlohmann::json meta_;
  std::vector<std::string> artists_;
  std::string checkpoint_hash_;
};

/// Scales an image down so that its longest side is at most `max_side`.
torch::Tensor limit_longest_side(const torch::Tensor& image, std::int64_t max_side);

}  // namespace txst
