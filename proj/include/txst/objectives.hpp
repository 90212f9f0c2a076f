#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "txst/backbone.hpp"

namespace txst {

/// Coefficients of the six training terms.
struct LossWeights {
  double clip = 100.0;
  double clip_f = 50.0;
  double sim = 10.0;
  double sty = 5.0;
  double con = 1.0;
  double id = 2.0;

  static LossWeights from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

enum class ContrastiveMode {
  /// Numerator is the anchor's paired positive.
  kNtXent,
  /// Every non-anchor element is treated as a target and the terms are averaged.
  kLiteral,
};

ContrastiveMode parse_contrastive_mode(const std::string& name);

struct ContrastiveConfig {
  double temperature = 0.1;
  ContrastiveMode mode = ContrastiveMode::kNtXent;
};

/// Reduction applied by the L1-style feature losses.
enum class Reduction {
  kSum,   // plain sums over all elements
  kMean,  // per-layer mean over elements, summed over layers
};

Reduction parse_reduction(const std::string& name);

/// 1 - cos(dI, dT) per row, averaged over the batch, where
/// dI = stylized - content image embeddings and dT = target - source text embeddings.
/// Throws DegenerateInput when either direction is zero.
torch::Tensor directional_clip_loss(const torch::Tensor& content_embedding, const torch::Tensor& stylized_embedding,
                                    const torch::Tensor& source_text_embedding,
                                    const torch::Tensor& target_text_embedding);

/// Temperature-scaled cross entropy over a cosine-similarity matrix.
/// `similarity` is [N, N]; `positive[i]` is the index of anchor i's partner.
/// For anchor i the denominator runs over every j != i. Averaged over anchors.
torch::Tensor contrastive_from_similarity(const torch::Tensor& similarity, std::span<const std::int64_t> positive,
                                          const ContrastiveConfig& cfg);

/// Contrastive term over one set of stylized-output features.
/// features: [N, D]; labels: artist id per row; partner: index of each row's
/// positive (must share the label). Throws DegenerateInput if a row lacks a valid positive.
torch::Tensor contrastive_term(const torch::Tensor& features, std::span<const std::int64_t> labels,
                               std::span<const std::int64_t> partner, const ContrastiveConfig& cfg);

/// Sum of the image-reference and text-reference contrastive terms.
torch::Tensor contrastive_similarity_loss(const torch::Tensor& image_styled, const torch::Tensor& text_styled,
                                          std::span<const std::int64_t> labels,
                                          std::span<const std::int64_t> partner, const ContrastiveConfig& cfg);

/// Mean over the batch of squared Euclidean distances between rows.
torch::Tensor clip_feature_loss(const torch::Tensor& a, const torch::Tensor& b);

/// Sum over the four style layers of L1 distances between channel means and
/// between channel standard deviations.
torch::Tensor style_loss(const FeaturePyramid& stylized, const FeaturePyramid& style,
                         Reduction reduction = Reduction::kSum);

/// Sum over relu2_2 and relu3_4 of elementwise L1 distances.
torch::Tensor content_loss(const FeaturePyramid& stylized, const FeaturePyramid& content,
                           Reduction reduction = Reduction::kSum);

/// L1 distance between a self-stylized feature map and the content feature map.
torch::Tensor identity_loss(const torch::Tensor& self_stylized, const torch::Tensor& content,
                            Reduction reduction = Reduction::kSum);

inline constexpr std::array<const char*, 6> kLossTermNames = {"l_clip", "l_clip_f", "l_sim",
                                                              "l_sty",  "l_con",    "l_id"};

/// The six scalar terms, in the order of kLossTermNames.
struct LossTerms {
  torch::Tensor clip, clip_f, sim, sty, con, id;
  std::array<torch::Tensor, 6> as_array() const { return {clip, clip_f, sim, sty, con, id}; }
};

struct LossReport {
  std::array<double, 6> values{};
  double total_value = 0.0;
  /// Weighted sum with autograd history.
  torch::Tensor total;

  nlohmann::json to_json() const;
};

/// Weighted combination. Throws NonFiniteLoss naming the first bad term.
LossReport total_loss(const LossTerms& terms, const LossWeights& weights);

}  // namespace txst
