#include "txst/style_conditioner.hpp"

#include <cmath>

#include "txst/errors.hpp"

namespace txst {

torch::Tensor build_position_map(const torch::Tensor& r_h, const torch::Tensor& r_w) {
  if (r_h.dim() != 3 || r_w.dim() != 3 || r_h.size(1) != 1 || r_w.size(0) != 1 || r_h.size(2) != r_w.size(2)) {
    throw ShapeError("position encodings must be [G,1,C] and [1,G,C]");
  }
  return r_h + r_w;
}

PositionalMapperImpl::PositionalMapperImpl(const MapperOptions& options) : options_(options) {
  if (options.channels % options.heads != 0) throw ShapeError("channels must divide evenly into heads");
  const auto g = options.grid;
  const auto c = options.channels;
  r_h_ = register_parameter("r_h", torch::randn({g, 1, c}) * options.init_std);
  r_w_ = register_parameter("r_w", torch::randn({1, g, c}) * options.init_std);
  query_ = register_module("query", torch::nn::Linear(c, c));
  key_ = register_module("key", torch::nn::Linear(c, c));
  value_ = register_module("value", torch::nn::Linear(c, c));
}

PositionalMapperImpl::Projected PositionalMapperImpl::project(const torch::Tensor& style) {
  if (style.dim() != 2 || style.size(1) != options_.channels) {
    throw ShapeError("style vector must have " + std::to_string(options_.channels) + " entries");
  }
  const auto batch = style.size(0);
  const auto positions = options_.grid * options_.grid;
  const auto heads = options_.heads;
  const auto head_dim = options_.channels / heads;
  auto r = position_map().reshape({1, positions, options_.channels});
  auto x = style.unsqueeze(1) + r;  // [B, P, C]
  auto split = [&](const torch::Tensor& t) {
    return t.reshape({t.size(0), positions, heads, head_dim}).transpose(1, 2);
  };
  return {split(query_(x)), split(key_(x)), split(value_(x)), split(r.expand({batch, positions, options_.channels}))};
}

torch::Tensor PositionalMapperImpl::weights_from(const Projected& p) const {
  const double scale = std::sqrt(static_cast<double>(options_.channels / options_.heads));
  auto logits = (p.q.matmul(p.k.transpose(-2, -1)) + p.q.matmul(p.r.transpose(-2, -1))) / scale;
  return logits.softmax(-1);
}

torch::Tensor PositionalMapperImpl::attention_weights(const torch::Tensor& style) { return weights_from(project(style)); }

torch::Tensor PositionalMapperImpl::forward(const torch::Tensor& style) {
  auto p = project(style);
  auto out = weights_from(p).matmul(p.v);  // [B, heads, P, head_dim]
  const auto batch = style.size(0);
  const auto g = options_.grid;
  return out.transpose(1, 2).reshape({batch, g, g, options_.channels}).permute({0, 3, 1, 2}).contiguous();
}

}  // namespace txst
