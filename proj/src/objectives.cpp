#include "txst/objectives.hpp"

#include <cmath>

#include "txst/clip/adapter.hpp"
#include "txst/errors.hpp"

namespace txst {
namespace {

torch::Tensor l1(const torch::Tensor& a, const torch::Tensor& b, Reduction reduction) {
  if (a.sizes() != b.sizes()) throw ShapeError("L1 distance needs equal shapes");
  auto diff = (a - b).abs();
  return reduction == Reduction::kMean ? diff.mean() : diff.sum();
}

const torch::Tensor& layer_of(const FeaturePyramid& pyramid, Layer layer) {
  auto it = pyramid.find(layer);
  if (it == pyramid.end()) throw ShapeError("feature pyramid lacks layer " + layer_name(layer));
  return it->second;
}

}  // namespace

LossWeights LossWeights::from_json(const nlohmann::json& j) {
  LossWeights w;
  w.clip = j.at("clip");
  w.clip_f = j.at("clip_f");
  w.sim = j.at("sim");
  w.sty = j.at("sty");
  w.con = j.at("con");
  w.id = j.at("id");
  for (double v : {w.clip, w.clip_f, w.sim, w.sty, w.con, w.id}) {
    if (!(v >= 0.0)) throw ConfigError("loss weights must be non-negative");
  }
  return w;
}

nlohmann::json LossWeights::to_json() const {
  return {{"clip", clip}, {"clip_f", clip_f}, {"sim", sim}, {"sty", sty}, {"con", con}, {"id", id}};
}

ContrastiveMode parse_contrastive_mode(const std::string& name) {
  if (name == "nt_xent") return ContrastiveMode::kNtXent;
  if (name == "literal") return ContrastiveMode::kLiteral;
  throw ConfigError("unknown contrastive mode '" + name + "'");
}

Reduction parse_reduction(const std::string& name) {
  if (name == "sum") return Reduction::kSum;
  if (name == "mean") return Reduction::kMean;
  throw ConfigError("unknown loss reduction '" + name + "'");
}

torch::Tensor directional_clip_loss(const torch::Tensor& content_embedding, const torch::Tensor& stylized_embedding,
                                    const torch::Tensor& source_text_embedding,
                                    const torch::Tensor& target_text_embedding) {
  auto delta_i = stylized_embedding - content_embedding;
  auto delta_t = (target_text_embedding - source_text_embedding).expand_as(delta_i);
  if (delta_i.dim() == 1) {
    delta_i = delta_i.unsqueeze(0);
    delta_t = delta_t.unsqueeze(0);
  }
  torch::Tensor cos;
  try {
    cos = clip::cosine_similarity_rows(delta_i, delta_t);
  } catch (const DegenerateInput&) {
    throw DegenerateInput("directional loss: image or text direction is zero");
  }
  return (1.0 - cos).mean();
}

torch::Tensor contrastive_from_similarity(const torch::Tensor& similarity, std::span<const std::int64_t> positive,
                                          const ContrastiveConfig& cfg) {
  if (!(cfg.temperature > 0.0)) throw ConfigError("temperature must be positive");
  const auto n = similarity.size(0);
  if (similarity.dim() != 2 || similarity.size(1) != n) throw ShapeError("similarity matrix must be square");
  if (n < 2) throw DegenerateInput("contrastive loss needs at least two elements");
  if (static_cast<std::int64_t>(positive.size()) != n) throw ShapeError("one positive index per anchor required");
  auto logits = similarity / cfg.temperature;
  auto eye = torch::eye(n, torch::TensorOptions().dtype(torch::kBool));
  logits = logits.masked_fill(eye, -std::numeric_limits<double>::infinity());
  auto log_prob = logits.log_softmax(1);
  if (cfg.mode == ContrastiveMode::kNtXent) {
    std::vector<std::int64_t> pos(positive.begin(), positive.end());
    for (std::int64_t i = 0; i < n; ++i) {
      if (pos[i] < 0 || pos[i] >= n || pos[i] == i) throw DegenerateInput("anchor without a positive partner");
    }
    auto index = torch::tensor(pos, torch::kLong).unsqueeze(1);
    return -log_prob.gather(1, index).mean();
  }
  // Literal reading: every j != i contributes as a numerator.
  auto off_diag = log_prob.masked_fill(eye, 0.0);
  return -(off_diag.sum(1) / static_cast<double>(n - 1)).mean();
}

torch::Tensor contrastive_term(const torch::Tensor& features, std::span<const std::int64_t> labels,
                               std::span<const std::int64_t> partner, const ContrastiveConfig& cfg) {
  if (features.dim() != 2) throw ShapeError("contrastive features must be [N, D]");
  const auto n = features.size(0);
  if (static_cast<std::int64_t>(labels.size()) != n || static_cast<std::int64_t>(partner.size()) != n) {
    throw ShapeError("labels and partners must have one entry per feature row");
  }
  for (std::int64_t i = 0; i < n; ++i) {
    const auto p = partner[i];
    if (p < 0 || p >= n || p == i || labels[p] != labels[i]) {
      throw DegenerateInput("batch element " + std::to_string(i) + " has no same-artist positive");
    }
  }
  auto norms = features.norm(2, 1, true);
  if ((norms == 0).any().item<bool>()) throw DegenerateInput("zero-norm feature in contrastive batch");
  auto unit = features / norms;
  return contrastive_from_similarity(unit.matmul(unit.t()), partner, cfg);
}

torch::Tensor contrastive_similarity_loss(const torch::Tensor& image_styled, const torch::Tensor& text_styled,
                                          std::span<const std::int64_t> labels,
                                          std::span<const std::int64_t> partner, const ContrastiveConfig& cfg) {
  return contrastive_term(image_styled, labels, partner, cfg) + contrastive_term(text_styled, labels, partner, cfg);
}

torch::Tensor clip_feature_loss(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes() || a.dim() != 2) throw ShapeError("feature batches must both be [N, D]");
  return (a - b).pow(2).sum(1).mean();
}

torch::Tensor style_loss(const FeaturePyramid& stylized, const FeaturePyramid& style, Reduction reduction) {
  torch::Tensor total;
  for (auto layer : kStyleLayers) {
    const auto& a = layer_of(stylized, layer);
    const auto& b = layer_of(style, layer);
    if (a.size(0) != b.size(0) || a.size(1) != b.size(1)) throw ShapeError("style layers differ in batch or channels");
    auto sa = channel_stats(a);
    auto sb = channel_stats(b);
    auto term = l1(sa.mean, sb.mean, reduction) + l1(sa.std, sb.std, reduction);
    total = total.defined() ? total + term : term;
  }
  return total;
}

torch::Tensor content_loss(const FeaturePyramid& stylized, const FeaturePyramid& content, Reduction reduction) {
  torch::Tensor total;
  for (auto layer : kContentLayers) {
    auto term = l1(layer_of(stylized, layer), layer_of(content, layer), reduction);
    total = total.defined() ? total + term : term;
  }
  return total;
}

torch::Tensor identity_loss(const torch::Tensor& self_stylized, const torch::Tensor& content, Reduction reduction) {
  return l1(self_stylized, content, reduction);
}

nlohmann::json LossReport::to_json() const {
  nlohmann::json j;
  for (std::size_t i = 0; i < values.size(); ++i) j[kLossTermNames[i]] = values[i];
  j["total"] = total_value;
  return j;
}

LossReport total_loss(const LossTerms& terms, const LossWeights& weights) {
  const std::array<double, 6> w = {weights.clip, weights.clip_f, weights.sim, weights.sty, weights.con, weights.id};
  const auto parts = terms.as_array();
  LossReport report;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!parts[i].defined()) throw NonFiniteLoss(kLossTermNames[i]);
    const double v = parts[i].item<double>();
    if (!std::isfinite(v)) throw NonFiniteLoss(kLossTermNames[i]);
    report.values[i] = v;
    report.total_value += w[i] * v;
    auto weighted = parts[i] * w[i];
    report.total = report.total.defined() ? report.total + weighted : weighted;
  }
  return report;
}

}  // namespace txst
