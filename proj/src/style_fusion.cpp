#include "txst/style_fusion.hpp"

#include <cmath>

#include "txst/backbone.hpp"
#include "txst/errors.hpp"

namespace txst {

PowerMode parse_power_mode(const std::string& name) {
  if (name == "elementwise") return PowerMode::kElementwise;
  if (name == "repeated") return PowerMode::kRepeatedAttention;
  throw ConfigError("unknown fusion power mode '" + name + "'");
}

CrossAttentionImpl::CrossAttentionImpl(std::int64_t channels) : channels_(channels) {
  query_ = register_module("query", torch::nn::Linear(channels, channels));
  key_ = register_module("key", torch::nn::Linear(channels, channels));
  value_ = register_module("value", torch::nn::Linear(channels, channels));
}

void CrossAttentionImpl::check(const torch::Tensor& content, const torch::Tensor& style) const {
  if (content.dim() != 4 || style.dim() != 4) throw ShapeError("cross attention expects [B,C,H,W] maps");
  if (content.size(1) != channels_ || style.size(1) != channels_) {
    throw ShapeError("cross attention channel count does not match its projections");
  }
  if (content.size(0) != style.size(0)) throw ShapeError("content and style batch sizes differ");
}

torch::Tensor CrossAttentionImpl::attention_weights(const torch::Tensor& content, const torch::Tensor& style) {
  check(content, style);
  auto q = query_(content.flatten(2).transpose(1, 2));  // [B, Nc, C]
  auto k = key_(style.flatten(2).transpose(1, 2));      // [B, Ns, C]
  return (q.matmul(k.transpose(1, 2)) / std::sqrt(static_cast<double>(channels_))).softmax(-1);
}

torch::Tensor CrossAttentionImpl::forward(const torch::Tensor& content, const torch::Tensor& style) {
  auto weights = attention_weights(content, style);
  auto v = value_(style.flatten(2).transpose(1, 2));  // [B, Ns, C]
  auto out = weights.matmul(v);                        // [B, Nc, C]
  return out.transpose(1, 2).reshape(content.sizes());
}

torch::Tensor cross_attention_term(const torch::Tensor& content_normalized, const torch::Tensor& style_power,
                                   CrossAttention& params) {
  return params(content_normalized, style_power);
}

PolynomialAttentionImpl::PolynomialAttentionImpl(const FusionOptions& options) : options_(options) {
  if (options.order < 0 || options.order > FusionOptions::kMaxOrder) throw ConfigError("fusion order must lie in [0, 5]");
  if (options.capacity < options.order || options.capacity > FusionOptions::kMaxOrder) {
    throw ConfigError("fusion capacity must lie in [order, 5]");
  }
  for (std::int64_t i = 1; i <= options.capacity; ++i) {
    blocks_.push_back(register_module("order_" + std::to_string(i), CrossAttention(options.channels)));
  }
}

torch::Tensor PolynomialAttentionImpl::forward(const torch::Tensor& content, const torch::Tensor& style) {
  return fuse(content, style, options_.order);
}

torch::Tensor PolynomialAttentionImpl::fuse(const torch::Tensor& content, const torch::Tensor& style,
                                            std::int64_t order) {
  if (order < 0 || order > capacity()) {
    throw ShapeError("fusion order " + std::to_string(order) + " exceeds the " + std::to_string(capacity()) +
                     " available parameter blocks");
  }
  const auto style_stats = channel_stats(style);
  const auto content_norm = normalize(content);
  const auto style_norm = (style - style_stats.mean) / style_stats.std;
  auto mixed = content_norm;
  torch::Tensor previous = content_norm;
  for (std::int64_t i = 1; i <= order; ++i) {
    auto& attention = blocks_[static_cast<std::size_t>(i - 1)];
    torch::Tensor term;
    if (options_.mode == PowerMode::kElementwise) {
      term = attention(content_norm, i == 1 ? style_norm : style_norm.pow(static_cast<double>(i)));
    } else {
      term = attention(previous, style_norm);
      previous = term;
    }
    mixed = mixed + term;
  }
  return denormalize(mixed, style_stats);
}

}  // namespace txst
