#include "txst/image.hpp"

#include <cmath>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "txst/errors.hpp"

namespace txst {
namespace {

torch::Tensor from_mat(const cv::Mat& bgr) {
  cv::Mat rgb;
  if (bgr.channels() == 1) {
    cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
  } else if (bgr.channels() == 4) {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  }
  if (rgb.depth() != CV_8U) rgb.convertTo(rgb, CV_8U, rgb.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).contiguous().to(torch::kFloat32).div_(255.0);
}

cv::Mat to_mat(const torch::Tensor& image) {
  auto t = image.detach().to(torch::kCPU);
  if (t.dim() == 4 && t.size(0) == 1) t = t.squeeze(0);
  if (t.dim() != 3 || t.size(0) != 3) throw ShapeError("expected a [3,H,W] image tensor");
  auto bytes = t.to(torch::kFloat64).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
  bytes = bytes.permute({1, 2, 0}).contiguous();
  cv::Mat rgb(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3, bytes.data_ptr());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

torch::Tensor as_batch(const torch::Tensor& image) { return image.dim() == 3 ? image.unsqueeze(0) : image; }

torch::Tensor like_input(const torch::Tensor& result, const torch::Tensor& input) {
  return input.dim() == 3 ? result.squeeze(0) : result;
}

}  // namespace

torch::Tensor load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptImage(path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const CorruptImage&) {
    throw CorruptImage(path.string());
  }
}

torch::Tensor decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw CorruptImage("<memory>");
  cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8U, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat decoded;
  try {
    decoded = cv::imdecode(raw, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception&) {
    throw CorruptImage("<memory>");
  }
  if (decoded.empty()) throw CorruptImage("<memory>");
  return from_mat(decoded);
}

std::vector<std::uint8_t> encode_png(const torch::Tensor& image) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", to_mat(image), out)) throw Error("PNG encoding failed");
  return out;
}

void save_png(const std::filesystem::path& path, const torch::Tensor& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write " + path.string());
}

torch::Tensor resize_to(const torch::Tensor& image, std::int64_t height, std::int64_t width) {
  auto batch = as_batch(image);
  if (batch.size(2) == height && batch.size(3) == width) return image;
  const bool shrinking = height < batch.size(2) || width < batch.size(3);
  namespace F = torch::nn::functional;
  auto out = F::interpolate(batch, F::InterpolateFuncOptions()
                                       .size(std::vector<std::int64_t>{height, width})
                                       .mode(torch::kBicubic)
                                       .align_corners(false)
                                       .antialias(shrinking));
  return like_input(out, image);
}

torch::Tensor resize_shorter_side(const torch::Tensor& image, std::int64_t size) {
  auto batch = as_batch(image);
  const auto h = batch.size(2);
  const auto w = batch.size(3);
  if (h <= w) {
    return resize_to(image, size, std::max<std::int64_t>(1, std::llround(double(w) * size / h)));
  }
  return resize_to(image, std::max<std::int64_t>(1, std::llround(double(h) * size / w)), size);
}

torch::Tensor center_crop(const torch::Tensor& image, std::int64_t height, std::int64_t width) {
  auto batch = as_batch(image);
  const auto h = batch.size(2);
  const auto w = batch.size(3);
  if (h < height || w < width) throw ShapeError("center crop larger than image");
  const auto top = (h - height) / 2;
  const auto left = (w - width) / 2;
  auto out = batch.slice(2, top, top + height).slice(3, left, left + width);
  return like_input(out, image);
}

torch::Tensor quantize_u8(const torch::Tensor& image) {
  return image.detach().clamp(0.0, 1.0).mul(255.0).round().div(255.0);
}

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  const double mse = (a.detach().to(torch::kFloat64) - b.detach().to(torch::kFloat64)).pow(2).mean().item<double>();
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace txst
