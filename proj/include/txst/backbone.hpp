#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

namespace txst {

/// Pyramid levels of the perceptual encoder.
enum class Layer { kRelu1_2, kRelu2_2, kRelu3_4, kRelu4_1 };

inline constexpr std::array<Layer, 4> kStyleLayers = {Layer::kRelu1_2, Layer::kRelu2_2, Layer::kRelu3_4,
                                                      Layer::kRelu4_1};
inline constexpr std::array<Layer, 2> kContentLayers = {Layer::kRelu2_2, Layer::kRelu3_4};

std::string layer_name(Layer layer);
std::int64_t layer_channels(Layer layer);

/// Feature maps keyed by layer, each [B, C, H, W].
using FeaturePyramid = std::map<Layer, torch::Tensor>;

inline constexpr double kStatEpsilon = 1e-5;

/// Per-channel spatial statistics, each [B, C, 1, 1].
struct ChannelStats {
  torch::Tensor mean;
  torch::Tensor std;
};

/// Mean and sqrt(population variance + eps) over the spatial axes.
ChannelStats channel_stats(const torch::Tensor& features, double eps = kStatEpsilon);
/// Instance normalization: (f - mean) / std.
torch::Tensor normalize(const torch::Tensor& features, double eps = kStatEpsilon);
torch::Tensor denormalize(const torch::Tensor& normalized, const ChannelStats& stats);

/// VGG-19 convolutional trunk up to relu4_1, with torchvision parameter names
/// (`features.<index>.weight`). Inputs are RGB in [0,1]; ImageNet
/// normalization happens inside. Parameters never require gradients.
class VggEncoderImpl : public torch::nn::Module {
 public:
  static constexpr std::int64_t kMinInputSize = 32;

  VggEncoderImpl();

  /// Seeded He initialization, used when no pretrained weights are supplied.
  void initialize(std::uint64_t seed);
  void load(const std::filesystem::path& checkpoint);
  bool pretrained() const { return pretrained_; }

  FeaturePyramid forward(const torch::Tensor& images);
  /// Stops after relu4_1 without keeping the intermediate levels.
  torch::Tensor relu4_1(const torch::Tensor& images);

 private:
  torch::Tensor prepare(const torch::Tensor& images) const;

  torch::nn::Sequential features_{nullptr};
  bool pretrained_ = false;
};
TORCH_MODULE(VggEncoder);

/// Mirror of the encoder: relu4_1 features back to an RGB image with three
/// nearest-neighbour 2x upsampling stages and reflection-padded 3x3 convolutions.
class DecoderImpl : public torch::nn::Module {
 public:
  DecoderImpl();

  /// Unclamped output, used for training.
  torch::Tensor forward(const torch::Tensor& features);
  /// Output clamped to [0,1]. Throws ShapeError on a channel mismatch.
  torch::Tensor decode(const torch::Tensor& features);

 private:
  torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(Decoder);

}  // namespace txst
