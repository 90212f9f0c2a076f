#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "txst/backbone.hpp"
#include "txst/clip/adapter.hpp"
#include "txst/objectives.hpp"

namespace txst {

inline constexpr int kReportSchemaVersion = 1;

/// Per-painting softmax over artists, rows x cols.
struct AffinityMatrix {
  torch::Tensor scores;  // [rows, cols], float64
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;

  /// Fraction of rows whose argmax sits on the diagonal (square matrices).
  double diagonal_hit_rate() const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Softmax over raw (un-normalized) dot products of painting and artist-name
/// embeddings. image_embeddings: [P, D], text_embeddings: [C, D], C >= 2.
AffinityMatrix affinity_from_embeddings(const torch::Tensor& image_embeddings, const torch::Tensor& text_embeddings,
                                        std::vector<std::string> row_labels, std::vector<std::string> col_labels);
AffinityMatrix affinity_matrix(const clip::ClipAdapter& clip, const std::vector<torch::Tensor>& paintings,
                               std::vector<std::string> painting_labels, const std::vector<std::string>& artist_names);

/// Harmonic mean of the two scores; empty unless both are positive.
std::optional<double> f1_score(double content_score, double style_score);

struct MetricReport {
  double content_score = 0.0;
  double style_score = 0.0;
  std::optional<double> f1;
  std::optional<double> vgg_content;
  std::optional<double> vgg_style;
  std::optional<double> deception_rate;

  nlohmann::json to_json() const;
};

/// Cosine content score against the content image and cosine style score
/// against `style_embedding` (an image or a text embedding).
MetricReport clip_scores(const clip::ClipAdapter& clip, const torch::Tensor& content, const torch::Tensor& stylized,
                         const torch::Tensor& style_embedding);

struct VggScores {
  double style = 0.0;
  double content = 0.0;
};

/// The style and content losses evaluated as metrics on single [3,H,W] images.
VggScores vgg_scores(VggEncoder& encoder, const torch::Tensor& content, const torch::Tensor& style,
                     const torch::Tensor& stylized, Reduction reduction = Reduction::kMean);

/// Anything that assigns one of a fixed set of artist labels to images.
class ArtistPredictor {
 public:
  virtual ~ArtistPredictor() = default;
  virtual const std::vector<std::string>& labels() const = 0;
  /// images [B,3,H,W] -> index into labels() per image
  virtual std::vector<std::int64_t> predict(const torch::Tensor& images) = 0;
};

/// Fraction of images whose predicted artist equals its target. Throws
/// DegenerateInput when a target is not among the predictor's labels.
double deception_rate(ArtistPredictor& predictor, const torch::Tensor& images,
                      const std::vector<std::string>& target_artists);

/// Softmax regression over the channel statistics of the four style layers of
/// the perceptual encoder.
class StatsArtistClassifier : public ArtistPredictor {
 public:
  StatsArtistClassifier(VggEncoder encoder, std::vector<std::string> labels);

  /// Full-batch Adam on (images, label index) pairs.
  void fit(const torch::Tensor& images, const std::vector<std::int64_t>& targets, std::int64_t epochs = 300,
           double lr = 1e-2);
  const std::vector<std::string>& labels() const override { return labels_; }
  std::vector<std::int64_t> predict(const torch::Tensor& images) override;

 private:
  torch::Tensor features(const torch::Tensor& images);

  VggEncoder encoder_;
  std::vector<std::string> labels_;
  torch::nn::Linear head_{nullptr};
  torch::Tensor feature_mean_, feature_std_;
};

/// Labelled joint-space embeddings, one row per image or prompt.
struct EmbeddingTable {
  std::vector<std::string> labels;
  torch::Tensor values;  // [rows, 512]

  /// "# schema_version: 1" line, then header "label,e0,...,e511" and one row per entry.
  std::string to_csv() const;
  void save(const std::filesystem::path& path) const;
  static EmbeddingTable load(const std::filesystem::path& path);
};

EmbeddingTable export_embeddings(const clip::ClipAdapter& clip, const std::vector<torch::Tensor>& images,
                                 const std::vector<std::string>& image_labels,
                                 const std::vector<std::string>& prompts,
                                 const std::vector<std::string>& prompt_labels);

/// Mean Euclidean distance between the centroids of every pair of labels.
double centroid_separation(const torch::Tensor& values, const std::vector<std::string>& labels);

/// PSNR of decode(encode(x)) against x after 8-bit quantization, averaged over images.
double reconstruction_psnr(VggEncoder& encoder, Decoder& decoder, const std::vector<torch::Tensor>& images);

}  // namespace txst
