#include "txst/backbone.hpp"

#include "txst/archive.hpp"
#include "txst/errors.hpp"

namespace txst {
namespace {

// Index of the ReLU that closes each pyramid level inside `features`.
constexpr std::int64_t kRelu1_2Index = 3;
constexpr std::int64_t kRelu2_2Index = 8;
constexpr std::int64_t kRelu3_4Index = 17;
constexpr std::int64_t kRelu4_1Index = 20;

torch::nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, bool zero_pad) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(zero_pad ? 1 : 0));
}

void check_features(const torch::Tensor& f) {
  if (f.dim() != 4 || f.numel() == 0) throw ShapeError("feature maps must be non-empty [B,C,H,W] tensors");
}

}  // namespace

std::string layer_name(Layer layer) {
  switch (layer) {
    case Layer::kRelu1_2: return "relu1_2";
    case Layer::kRelu2_2: return "relu2_2";
    case Layer::kRelu3_4: return "relu3_4";
    case Layer::kRelu4_1: return "relu4_1";
  }
  return "?";
}

std::int64_t layer_channels(Layer layer) {
  switch (layer) {
    case Layer::kRelu1_2: return 64;
    case Layer::kRelu2_2: return 128;
    case Layer::kRelu3_4: return 256;
    case Layer::kRelu4_1: return 512;
  }
  return 0;
}

ChannelStats channel_stats(const torch::Tensor& features, double eps) {
  check_features(features);
  auto mean = features.mean({2, 3}, true);
  auto var = (features - mean).pow(2).mean({2, 3}, true);
  return {mean, (var + eps).sqrt()};
}

torch::Tensor normalize(const torch::Tensor& features, double eps) {
  auto stats = channel_stats(features, eps);
  return (features - stats.mean) / stats.std;
}

torch::Tensor denormalize(const torch::Tensor& normalized, const ChannelStats& stats) {
  return normalized * stats.std + stats.mean;
}

VggEncoderImpl::VggEncoderImpl() {
  torch::nn::Sequential f;
  auto relu = [] { return torch::nn::ReLU(); };
  auto pool = [] { return torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2).stride(2)); };
  f->push_back(conv3x3(3, 64, true));     // 0  conv1_1
  f->push_back(relu());                   // 1
  f->push_back(conv3x3(64, 64, true));    // 2  conv1_2
  f->push_back(relu());                   // 3  relu1_2
  f->push_back(pool());                   // 4
  f->push_back(conv3x3(64, 128, true));   // 5  conv2_1
  f->push_back(relu());                   // 6
  f->push_back(conv3x3(128, 128, true));  // 7  conv2_2
  f->push_back(relu());                   // 8  relu2_2
  f->push_back(pool());                   // 9
  f->push_back(conv3x3(128, 256, true));  // 10 conv3_1
  f->push_back(relu());                   // 11
  f->push_back(conv3x3(256, 256, true));  // 12 conv3_2
  f->push_back(relu());                   // 13
  f->push_back(conv3x3(256, 256, true));  // 14 conv3_3
  f->push_back(relu());                   // 15
  f->push_back(conv3x3(256, 256, true));  // 16 conv3_4
  f->push_back(relu());                   // 17 relu3_4
  f->push_back(pool());                   // 18
  f->push_back(conv3x3(256, 512, true));  // 19 conv4_1
  f->push_back(relu());                   // 20 relu4_1
  features_ = register_module("features", f);
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();
}

void VggEncoderImpl::initialize(std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  for (auto& item : named_parameters(true)) {
    auto p = item.value();
    if (p.dim() == 4) {
      const double fan_out = static_cast<double>(p.size(0) * p.size(2) * p.size(3));
      p.normal_(0.0, std::sqrt(2.0 / fan_out), gen);
    } else {
      p.zero_();
    }
  }
  pretrained_ = false;
}

void VggEncoderImpl::load(const std::filesystem::path& checkpoint) {
  auto archive = Archive::load(checkpoint);
  if (archive.meta.value("kind", "") != "vgg19") throw CheckpointError("not a vgg19 checkpoint: " + checkpoint.string());
  import_module(*this, "vgg", archive);
  pretrained_ = archive.meta.value("pretrained", false);
}

torch::Tensor VggEncoderImpl::prepare(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("encoder expects [B,3,H,W] images");
  if (images.size(2) < kMinInputSize || images.size(3) < kMinInputSize) {
    throw ShapeError("encoder input must be at least 32x32");
  }
  auto opts = torch::TensorOptions().dtype(images.scalar_type());
  auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
  auto std = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
  return (images - mean) / std;
}

FeaturePyramid VggEncoderImpl::forward(const torch::Tensor& images) {
  auto x = prepare(images);
  FeaturePyramid pyramid;
  std::int64_t i = 0;
  for (auto& module : *features_) {
    x = module.forward(x);
    switch (i) {
      case kRelu1_2Index: pyramid[Layer::kRelu1_2] = x; break;
      case kRelu2_2Index: pyramid[Layer::kRelu2_2] = x; break;
      case kRelu3_4Index: pyramid[Layer::kRelu3_4] = x; break;
      case kRelu4_1Index: pyramid[Layer::kRelu4_1] = x; break;
      default: break;
    }
    ++i;
  }
  return pyramid;
}

torch::Tensor VggEncoderImpl::relu4_1(const torch::Tensor& images) { return features_->forward(prepare(images)); }

DecoderImpl::DecoderImpl() {
  torch::nn::Sequential d;
  auto block = [&](std::int64_t in, std::int64_t out, bool activate) {
    d->push_back(torch::nn::ReflectionPad2d(1));
    d->push_back(conv3x3(in, out, false));
    if (activate) d->push_back(torch::nn::ReLU());
  };
  auto upsample = [&] {
    d->push_back(torch::nn::Upsample(
        torch::nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
  };
  block(512, 256, true);
  upsample();
  block(256, 256, true);
  block(256, 256, true);
  block(256, 256, true);
  block(256, 128, true);
  upsample();
  block(128, 128, true);
  block(128, 64, true);
  upsample();
  block(64, 64, true);
  block(64, 3, false);
  layers_ = register_module("layers", d);
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& features) {
  if (features.dim() != 4 || features.size(1) != layer_channels(Layer::kRelu4_1)) {
    throw ShapeError("decoder expects relu4_1 features with 512 channels");
  }
  return layers_->forward(features);
}

torch::Tensor DecoderImpl::decode(const torch::Tensor& features) { return forward(features).clamp(0.0, 1.0); }

}  // namespace txst
