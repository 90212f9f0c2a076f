#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace txst {

/// How the i-th style order is formed.
enum class PowerMode {
  /// Keys/values come from the elementwise i-th power of the normalized style map.
  kElementwise,
  /// Ablation: order i attends from the output of order i-1 onto the normalized style map.
  kRepeatedAttention,
};

PowerMode parse_power_mode(const std::string& name);

struct FusionOptions {
  static constexpr std::int64_t kMaxOrder = 5;

  /// Highest style order R used at run time; 0 reduces to AdaIN.
  std::int64_t order = 2;
  /// Number of per-order parameter blocks held (>= order).
  std::int64_t capacity = 2;
  std::int64_t channels = 512;
  PowerMode mode = PowerMode::kElementwise;
};

/// One cross-attention block: softmax(Q[c] K[s]^T / sqrt(d)) V[s] with 1x1
/// projections and d = channels.
class CrossAttentionImpl : public torch::nn::Module {
 public:
  explicit CrossAttentionImpl(std::int64_t channels);

  /// content: [B, C, Hc, Wc] (queries), style: [B, C, Hs, Ws] (keys/values) -> [B, C, Hc, Wc]
  torch::Tensor forward(const torch::Tensor& content, const torch::Tensor& style);
  /// Softmax weights [B, Hc*Wc, Hs*Ws].
  torch::Tensor attention_weights(const torch::Tensor& content, const torch::Tensor& style);

  torch::nn::Linear& query() { return query_; }
  torch::nn::Linear& key() { return key_; }
  torch::nn::Linear& value() { return value_; }

 private:
  void check(const torch::Tensor& content, const torch::Tensor& style) const;

  std::int64_t channels_;
  torch::nn::Linear query_{nullptr}, key_{nullptr}, value_{nullptr};
};
TORCH_MODULE(CrossAttention);

/// Polynomial attention fusion:
///   F_cs = sigma(F_s) * (norm(F_c) + sum_{i=1..R} Attn_i(norm(F_c), norm(F_s)^i)) + mu(F_s)
/// Parameters live in per-order blocks named `order_<i>`, so a model trained
/// with a smaller order is a prefix of one with a larger order.
class PolynomialAttentionImpl : public torch::nn::Module {
 public:
  explicit PolynomialAttentionImpl(const FusionOptions& options = {});

  torch::Tensor forward(const torch::Tensor& content, const torch::Tensor& style);
  /// Same as forward with an explicit order; throws ShapeError if `order` exceeds the capacity.
  torch::Tensor fuse(const torch::Tensor& content, const torch::Tensor& style, std::int64_t order);

  CrossAttention& block(std::int64_t order) { return blocks_.at(static_cast<std::size_t>(order - 1)); }
  std::int64_t capacity() const { return static_cast<std::int64_t>(blocks_.size()); }
  const FusionOptions& options() const { return options_; }

 private:
  FusionOptions options_;
  std::vector<CrossAttention> blocks_;
};
TORCH_MODULE(PolynomialAttention);

/// Free-function form of one attention term.
torch::Tensor cross_attention_term(const torch::Tensor& content_normalized, const torch::Tensor& style_power,
                                   CrossAttention& params);

}  // namespace txst
