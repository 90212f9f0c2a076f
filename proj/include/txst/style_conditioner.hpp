#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace txst {

struct MapperOptions {
  std::int64_t grid = 16;
  std::int64_t channels = 512;
  std::int64_t heads = 1;
  double init_std = 0.02;
};

/// R[i, j, :] = r_h[i, 0, :] + r_w[0, j, :] for r_h [G,1,C] and r_w [1,G,C].
torch::Tensor build_position_map(const torch::Tensor& r_h, const torch::Tensor& r_w);

/// Expands a 1-D style vector into a position-aware [B, C, G, G] style map.
///
/// The style vector is repeated over the G x G plane and the relative position
/// map R is added to every location. Three 1x1 projections give Q, K and V;
/// attention logits are (Q K^T + Q R^T) / sqrt(head_dim) with a softmax over
/// the G*G key positions. With R = 0 every location sees identical queries,
/// keys and values, so the output is spatially uniform.
class PositionalMapperImpl : public torch::nn::Module {
 public:
  explicit PositionalMapperImpl(const MapperOptions& options = {});

  /// style: [B, C] -> [B, C, G, G]
  torch::Tensor forward(const torch::Tensor& style);

  /// Softmax weights [B, heads, G*G, G*G] for the given style vectors.
  torch::Tensor attention_weights(const torch::Tensor& style);

  torch::Tensor position_map() const { return build_position_map(r_h_, r_w_); }
  torch::Tensor& r_h() { return r_h_; }
  torch::Tensor& r_w() { return r_w_; }
  const MapperOptions& options() const { return options_; }

 private:
  struct Projected {
    torch::Tensor q, k, v, r;  // [B, heads, G*G, head_dim]
  };
  Projected project(const torch::Tensor& style);
  torch::Tensor weights_from(const Projected& p) const;

  MapperOptions options_;
  torch::Tensor r_h_, r_w_;
  torch::nn::Linear query_{nullptr}, key_{nullptr}, value_{nullptr};
};
TORCH_MODULE(PositionalMapper);

}  // namespace txst
