#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "txst/config.hpp"

namespace txst::test {

inline std::filesystem::path fixture_dir() { return TXST_TEST_FIXTURE_DIR; }

inline std::filesystem::path oracle_dir() {
  if (const char* env = std::getenv("TXST_ORACLE_DIR"); env != nullptr) return env;
  return {};
}

/// A fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("txst_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Default config pointed at the desk fixture corpus and shrunk for tests.
inline nlohmann::json desk_config(const std::filesystem::path& out_dir) {
  auto c = default_config();
  c["data"]["manifest"] = (fixture_dir() / "desk" / "manifest.json").string();
  c["data"]["load_size"] = 40;
  c["data"]["patch_size"] = 32;
  c["train"]["batch_size"] = 2;
  c["train"]["iterations"] = 3;
  c["train"]["checkpoint_every"] = 0;
  c["paths"]["output_dir"] = out_dir.string();
  return c;
}

/// Worst relative mismatch between autograd and central differences for
/// d f(inputs) / d inputs, over at most `max_entries` coordinates per input.
/// Inputs must be float64 leaves with requires_grad set.
inline double gradient_error(const std::function<torch::Tensor()>& f, const std::vector<torch::Tensor>& inputs,
                             double step = 1e-4, std::int64_t max_entries = 24) {
  for (const auto& t : inputs) {
    if (t.grad().defined()) t.mutable_grad().zero_();
  }
  auto y = f();
  auto grads = torch::autograd::grad({y}, inputs, {}, false, false, true);
  double worst = 0.0;
  torch::NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto flat = inputs[k].view({-1});
    auto g = grads[k].defined() ? grads[k].reshape({-1}) : torch::zeros_like(flat);
    const auto n = flat.numel();
    const auto stride = std::max<std::int64_t>(1, n / max_entries);
    for (std::int64_t i = 0; i < n; i += stride) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + step;
      const double up = f().item<double>();
      flat[i] = orig - step;
      const double down = f().item<double>();
      flat[i] = orig;
      const double numeric = (up - down) / (2 * step);
      const double analytic = g[i].item<double>();
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }
  return worst;
}

inline torch::Tensor leaf(torch::Tensor t) { return t.to(torch::kFloat64).detach().requires_grad_(true); }

}  // namespace txst::test
