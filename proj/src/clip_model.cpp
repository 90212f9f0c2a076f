#include "txst/clip/model.hpp"

#include <cmath>

#include "txst/errors.hpp"

namespace txst::clip {

ClipConfig ClipConfig::vit_b32() { return ClipConfig{}; }

ClipConfig ClipConfig::desk() {
  ClipConfig cfg;
  cfg.name = "desk";
  cfg.image_resolution = 64;
  cfg.patch_size = 16;
  cfg.vision_width = 128;
  cfg.vision_layers = 2;
  cfg.vision_heads = 4;
  cfg.text_width = 128;
  cfg.text_layers = 2;
  cfg.text_heads = 4;
  return cfg;
}

ClipConfig ClipConfig::from_preset(const std::string& preset) {
  if (preset == "vit_b32" || preset == "ViT-B/32") return vit_b32();
  if (preset == "desk") return desk();
  throw ConfigError("unknown clip preset '" + preset + "'");
}

nlohmann::json ClipConfig::to_json() const {
  return {{"name", name},
          {"embed_dim", embed_dim},
          {"image_resolution", image_resolution},
          {"patch_size", patch_size},
          {"vision_width", vision_width},
          {"vision_layers", vision_layers},
          {"vision_heads", vision_heads},
          {"context_length", context_length},
          {"vocab_size", vocab_size},
          {"text_width", text_width},
          {"text_layers", text_layers},
          {"text_heads", text_heads}};
}

ClipConfig ClipConfig::from_json(const nlohmann::json& j) {
  ClipConfig cfg;
  cfg.name = j.at("name").get<std::string>();
  cfg.embed_dim = j.at("embed_dim");
  cfg.image_resolution = j.at("image_resolution");
  cfg.patch_size = j.at("patch_size");
  cfg.vision_width = j.at("vision_width");
  cfg.vision_layers = j.at("vision_layers");
  cfg.vision_heads = j.at("vision_heads");
  cfg.context_length = j.at("context_length");
  cfg.vocab_size = j.at("vocab_size");
  cfg.text_width = j.at("text_width");
  cfg.text_layers = j.at("text_layers");
  cfg.text_heads = j.at("text_heads");
  return cfg;
}

PackedAttentionImpl::PackedAttentionImpl(std::int64_t width, std::int64_t heads) : heads_(heads) {
  in_proj_weight_ = register_parameter("in_proj_weight", torch::empty({3 * width, width}));
  in_proj_bias_ = register_parameter("in_proj_bias", torch::zeros({3 * width}));
  out_proj_ = register_module("out_proj", torch::nn::Linear(width, width));
}

torch::Tensor PackedAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  const auto batch = x.size(0);
  const auto length = x.size(1);
  const auto width = x.size(2);
  const auto head_dim = width / heads_;
  auto qkv = torch::nn::functional::linear(x, in_proj_weight_, in_proj_bias_).chunk(3, -1);
  auto split = [&](const torch::Tensor& t) { return t.view({batch, length, heads_, head_dim}).transpose(1, 2); };
  auto q = split(qkv[0]);
  auto k = split(qkv[1]);
  auto v = split(qkv[2]);
  auto logits = q.matmul(k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim));
  if (mask.defined()) logits = logits + mask;
  auto out = logits.softmax(-1).matmul(v).transpose(1, 2).reshape({batch, length, width});
  return out_proj_(out);
}

namespace {

class QuickGeluImpl : public torch::nn::Module {
 public:
  torch::Tensor forward(const torch::Tensor& x) { return x * torch::sigmoid(1.702 * x); }
};
TORCH_MODULE(QuickGelu);

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(std::int64_t width, std::int64_t heads) {
  attn_ = register_module("attn", PackedAttention(width, heads));
  ln_1_ = register_module("ln_1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
  torch::nn::Sequential mlp;
  mlp->push_back("c_fc", torch::nn::Linear(width, 4 * width));
  mlp->push_back("gelu", QuickGelu());
  mlp->push_back("c_proj", torch::nn::Linear(4 * width, width));
  mlp_ = register_module("mlp", mlp);
  ln_2_ = register_module("ln_2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  auto h = x + attn_(ln_1_(x), mask);
  return h + mlp_->forward(ln_2_(h));
}

TransformerImpl::TransformerImpl(std::int64_t width, std::int64_t layers, std::int64_t heads) {
  torch::nn::Sequential holder;
  for (std::int64_t i = 0; i < layers; ++i) {
    blocks_.push_back(ResidualBlock(width, heads));
    holder->push_back(std::to_string(i), blocks_.back());
  }
  register_module("resblocks", holder);
}

torch::Tensor TransformerImpl::forward(torch::Tensor x, const torch::Tensor& mask) {
  for (auto& block : blocks_) x = block(x, mask);
  return x;
}

VisionTransformerImpl::VisionTransformerImpl(const ClipConfig& cfg) {
  if (cfg.image_resolution % cfg.patch_size != 0) throw ConfigError("image resolution must be a multiple of the patch size");
  const auto width = cfg.vision_width;
  const auto grid = cfg.image_resolution / cfg.patch_size;
  conv1_ = register_module(
      "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, width, cfg.patch_size).stride(cfg.patch_size).bias(false)));
  class_embedding_ = register_parameter("class_embedding", torch::zeros({width}));
  positional_embedding_ = register_parameter("positional_embedding", torch::zeros({grid * grid + 1, width}));
  ln_pre_ = register_module("ln_pre", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
  transformer_ = register_module("transformer", Transformer(width, cfg.vision_layers, cfg.vision_heads));
  ln_post_ = register_module("ln_post", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
  proj_ = register_parameter("proj", torch::zeros({width, cfg.embed_dim}));
}

torch::Tensor VisionTransformerImpl::pooled(const torch::Tensor& images) {
  auto x = conv1_(images);                       // [B, W, g, g]
  x = x.flatten(2).transpose(1, 2);              // [B, g*g, W]
  auto cls = class_embedding_.to(x.dtype()).expand({x.size(0), 1, x.size(2)});
  x = torch::cat({cls, x}, 1) + positional_embedding_;
  x = transformer_(ln_pre_(x));
  return ln_post_(x.select(1, 0));
}

ClipModelImpl::ClipModelImpl(const ClipConfig& cfg) : cfg_(cfg) {
  visual_ = register_module("visual", VisionTransformer(cfg));
  transformer_ = register_module("transformer", Transformer(cfg.text_width, cfg.text_layers, cfg.text_heads));
  token_embedding_ = register_module("token_embedding", torch::nn::Embedding(cfg.vocab_size, cfg.text_width));
  positional_embedding_ = register_parameter("positional_embedding", torch::zeros({cfg.context_length, cfg.text_width}));
  ln_final_ = register_module("ln_final", torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.text_width})));
  text_projection_ = register_parameter("text_projection", torch::zeros({cfg.text_width, cfg.embed_dim}));
  logit_scale_ = register_parameter("logit_scale", torch::full({}, std::log(1.0 / 0.07)));
  causal_mask_ = torch::full({cfg.context_length, cfg.context_length}, -std::numeric_limits<float>::infinity()).triu(1);
}

void ClipModelImpl::initialize() {
  torch::NoGradGuard no_grad;
  auto normal = [](torch::Tensor t, double std) { t.normal_(0.0, std); };
  const double vw = static_cast<double>(cfg_.vision_width);
  const double tw = static_cast<double>(cfg_.text_width);
  for (auto& item : named_parameters(true)) {
    const auto& name = item.key();
    auto p = item.value();
    const bool vision = name.rfind("visual.", 0) == 0;
    const double width = vision ? vw : tw;
    const double layers = static_cast<double>(vision ? cfg_.vision_layers : cfg_.text_layers);
    const double proj_std = std::pow(width, -0.5) * std::pow(2.0 * layers, -0.5);
    const double attn_std = std::pow(width, -0.5);
    const double fc_std = std::pow(2.0 * width, -0.5);
    auto ends_with = [&](const std::string& suffix) {
      return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (name == "logit_scale") continue;
    if (ends_with("bias")) {
      p.zero_();
    } else if (name.find("ln_") != std::string::npos) {
      p.fill_(1.0);
    } else if (name == "token_embedding.weight") {
      normal(p, 0.02);
    } else if (name == "positional_embedding") {
      normal(p, 0.01);
    } else if (name == "visual.class_embedding" || name == "visual.positional_embedding") {
      normal(p, std::pow(vw, -0.5));
    } else if (name == "visual.conv1.weight") {
      normal(p, std::pow(3.0 * cfg_.patch_size * cfg_.patch_size, -0.5));
    } else if (ends_with("attn.in_proj_weight")) {
      normal(p, attn_std);
    } else if (ends_with("attn.out_proj.weight") || ends_with("mlp.c_proj.weight")) {
      normal(p, proj_std);
    } else if (ends_with("mlp.c_fc.weight")) {
      normal(p, fc_std);
    } else if (name == "text_projection") {
      normal(p, std::pow(tw, -0.5));
    } else if (name == "visual.proj") {
      normal(p, std::pow(vw, -0.5));
    } else {
      throw Error("no initializer for CLIP parameter " + name);
    }
  }
}

torch::Tensor ClipModelImpl::encode_text(const torch::Tensor& tokens) {
  auto x = token_embedding_(tokens) + positional_embedding_;
  x = ln_final_(transformer_(x, causal_mask_.to(x.dtype())));
  // Features at the end-of-text position (highest token id in each row).
  auto eot = tokens.argmax(-1);
  auto rows = torch::arange(tokens.size(0), torch::kLong);
  return x.index({rows, eot}).matmul(text_projection_);
}

}  // namespace txst::clip
