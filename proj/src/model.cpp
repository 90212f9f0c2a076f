#include "txst/model.hpp"

#include "txst/config.hpp"
#include "txst/errors.hpp"

namespace txst {

MapperOptions mapper_options(const nlohmann::json& config) {
  const auto& m = config.at("mapper");
  MapperOptions o;
  o.grid = m.at("grid");
  o.channels = m.at("channels");
  o.heads = m.at("heads");
  o.init_std = m.at("init_std");
  return o;
}

FusionOptions fusion_options(const nlohmann::json& config) {
  const auto& f = config.at("fusion");
  FusionOptions o;
  o.order = f.at("order");
  o.capacity = std::max<std::int64_t>(f.at("capacity").get<std::int64_t>(), o.order);
  o.channels = f.at("channels");
  o.mode = parse_power_mode(f.at("power_mode"));
  return o;
}

clip::ClipAdapterOptions clip_options(const nlohmann::json& config) {
  const auto& c = config.at("clip");
  clip::ClipAdapterOptions o;
  o.checkpoint = c.at("checkpoint").get<std::string>();
  o.preset = c.at("preset");
  o.seed = c.at("seed");
  o.vocab = c.at("vocab").get<std::string>();
  return o;
}

StyleTransferModel::StyleTransferModel(const nlohmann::json& config) : config_(config) {
  clip_ = std::make_shared<clip::ClipAdapter>(clip_options(config));
  encoder_ = VggEncoder();
  const std::string vgg_ckpt = config.at("vgg").at("checkpoint");
  if (vgg_ckpt.empty()) {
    encoder_->initialize(config.at("vgg").at("seed").get<std::uint64_t>());
  } else {
    encoder_->load(vgg_ckpt);
  }
  encoder_hash_ = parameter_hash(*encoder_);

  const auto mapper = mapper_options(config);
  const auto fusion = fusion_options(config);
  if (mapper.channels != clip::kEmbeddingDim || fusion.channels != layer_channels(Layer::kRelu4_1)) {
    throw ConfigError("mapper and fusion must operate on 512 channels");
  }
  torch::manual_seed(config.at("train").at("init_seed").get<std::uint64_t>());
  decoder_ = Decoder();
  mapper_ = PositionalMapper(mapper);
  fusion_ = PolynomialAttention(fusion);
}

std::vector<std::pair<std::string, torch::Tensor>> StyleTransferModel::trainable_parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto add = [&](const torch::nn::Module& m, const std::string& ns) {
    for (const auto& item : m.named_parameters(true)) out.emplace_back(ns + "." + item.key(), item.value());
  };
  add(*decoder_, kDecoderNamespace);
  add(*mapper_, kMapperNamespace);
  add(*fusion_, kFusionNamespace);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

torch::Tensor StyleTransferModel::stylized_features(const torch::Tensor& content_features,
                                                    const torch::Tensor& embeddings) {
  return fusion_(content_features, mapper_(embeddings));
}

torch::Tensor StyleTransferModel::stylize(const torch::Tensor& content_images, const torch::Tensor& embeddings) {
  torch::Tensor features;
  {
    torch::NoGradGuard no_grad;
    features = encoder_->relu4_1(content_images);
  }
  return decoder_(stylized_features(features, embeddings));
}

void StyleTransferModel::export_parameters(Archive& archive) const {
  export_module(*decoder_, kDecoderNamespace, archive);
  export_module(*mapper_, kMapperNamespace, archive);
  export_module(*fusion_, kFusionNamespace, archive);
}

void StyleTransferModel::import_parameters(const Archive& archive, bool decoder_only) {
  import_module(*decoder_, kDecoderNamespace, archive);
  if (decoder_only) return;
  import_module(*mapper_, kMapperNamespace, archive);
  // Prefix loading: only the orders this model holds are read.
  for (std::int64_t i = 1; i <= fusion_->capacity(); ++i) {
    import_module(*fusion_->block(i), std::string(kFusionNamespace) + ".order_" + std::to_string(i), archive);
  }
}

nlohmann::json StyleTransferModel::frozen_identity() const {
  return {{"clip_hash", clip_->weights_hash()},
          {"clip_pretrained", clip_->pretrained()},
          {"clip_config", clip_->config().to_json()},
          {"vgg_hash", encoder_hash_},
          {"vgg_pretrained", encoder_->pretrained()}};
}

void StyleTransferModel::train_mode(bool on) {
  decoder_->train(on);
  mapper_->train(on);
  fusion_->train(on);
}

}  // namespace txst
