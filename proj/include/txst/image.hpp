#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace txst {

// Images travel through the library as float tensors of shape [3, H, W]
// (or [B, 3, H, W]) holding RGB values in [0, 1].

torch::Tensor load_image(const std::filesystem::path& path);
torch::Tensor decode_image(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_png(const torch::Tensor& image);
void save_png(const std::filesystem::path& path, const torch::Tensor& image);

/// Bicubic resize so that the shorter side equals `size` (antialiased when shrinking).
torch::Tensor resize_shorter_side(const torch::Tensor& image, std::int64_t size);
torch::Tensor resize_to(const torch::Tensor& image, std::int64_t height, std::int64_t width);
torch::Tensor center_crop(const torch::Tensor& image, std::int64_t height, std::int64_t width);

/// Quantizes to 8-bit levels exactly as PNG encoding would.
torch::Tensor quantize_u8(const torch::Tensor& image);

double psnr(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace txst
