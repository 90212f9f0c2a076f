#include "txst/evaluator.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "txst/errors.hpp"
#include "txst/image.hpp"

namespace txst {

double AffinityMatrix::diagonal_hit_rate() const {
  const auto rows = scores.size(0);
  if (rows == 0 || rows != scores.size(1)) throw ShapeError("diagonal hit rate needs a square matrix");
  auto arg = scores.argmax(1);
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < rows; ++i) hits += arg[i].item<std::int64_t>() == i ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(rows);
}

nlohmann::json AffinityMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  auto s = scores.contiguous();
  for (std::int64_t i = 0; i < s.size(0); ++i) {
    std::vector<double> row(static_cast<std::size_t>(s.size(1)));
    for (std::int64_t j = 0; j < s.size(1); ++j) row[static_cast<std::size_t>(j)] = s[i][j].item<double>();
    rows.push_back(row);
  }
  nlohmann::json j = {{"schema_version", kReportSchemaVersion},
                      {"row_labels", row_labels},
                      {"col_labels", col_labels},
                      {"scores", rows}};
  if (s.size(0) == s.size(1)) j["diagonal_hit_rate"] = diagonal_hit_rate();
  return j;
}

std::string AffinityMatrix::to_csv() const {
  std::ostringstream out;
  out << "# schema_version: " << kReportSchemaVersion << "\npainting";
  for (const auto& c : col_labels) out << ',' << c;
  out << '\n' << std::setprecision(9);
  for (std::int64_t i = 0; i < scores.size(0); ++i) {
    out << row_labels[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < scores.size(1); ++j) out << ',' << scores[i][j].item<double>();
    out << '\n';
  }
  return out.str();
}

AffinityMatrix affinity_from_embeddings(const torch::Tensor& image_embeddings, const torch::Tensor& text_embeddings,
                                        std::vector<std::string> row_labels, std::vector<std::string> col_labels) {
  if (image_embeddings.dim() != 2 || text_embeddings.dim() != 2 ||
      image_embeddings.size(1) != text_embeddings.size(1)) {
    throw ShapeError("affinity inputs must be [P, D] and [C, D]");
  }
  if (text_embeddings.size(0) < 2) throw DegenerateInput("affinity needs at least two artists");
  if (static_cast<std::int64_t>(row_labels.size()) != image_embeddings.size(0) ||
      static_cast<std::int64_t>(col_labels.size()) != text_embeddings.size(0)) {
    throw ShapeError("label counts do not match the embeddings");
  }
  auto logits = torch::matmul(image_embeddings.to(torch::kFloat64), text_embeddings.to(torch::kFloat64).t());
  return {torch::softmax(logits, 1), std::move(row_labels), std::move(col_labels)};
}

AffinityMatrix affinity_matrix(const clip::ClipAdapter& clip, const std::vector<torch::Tensor>& paintings,
                               std::vector<std::string> painting_labels, const std::vector<std::string>& artist_names) {
  std::vector<torch::Tensor> rows;
  for (const auto& p : paintings) rows.push_back(clip.encode_image(p).values());
  return affinity_from_embeddings(torch::stack(rows), clip.encode_texts(artist_names), std::move(painting_labels),
                                  artist_names);
}

std::optional<double> f1_score(double content_score, double style_score) {
  if (!(content_score > 0.0) || !(style_score > 0.0)) return std::nullopt;
  return 2.0 * content_score * style_score / (content_score + style_score);
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = {{"schema_version", kReportSchemaVersion},
                      {"s_cont", content_score},
                      {"s_style", style_score},
                      {"f1", optional_json(f1)}};
  if (vgg_content) j["vgg_content"] = *vgg_content;
  if (vgg_style) j["vgg_style"] = *vgg_style;
  if (deception_rate) j["deception_rate"] = *deception_rate;
  return j;
}

MetricReport clip_scores(const clip::ClipAdapter& clip, const torch::Tensor& content, const torch::Tensor& stylized,
                         const torch::Tensor& style_embedding) {
  const auto ec = clip.encode_image(content).values();
  const auto ecs = clip.encode_image(stylized).values();
  MetricReport r;
  r.content_score = clip::cosine_similarity(ec, ecs);
  r.style_score = clip::cosine_similarity(style_embedding, ecs);
  r.f1 = f1_score(r.content_score, r.style_score);
  return r;
}

VggScores vgg_scores(VggEncoder& encoder, const torch::Tensor& content, const torch::Tensor& style,
                     const torch::Tensor& stylized, Reduction reduction) {
  torch::NoGradGuard no_grad;
  auto pc = encoder(content.unsqueeze(0));
  auto ps = encoder(style.unsqueeze(0));
  auto pcs = encoder(stylized.unsqueeze(0));
  return {style_loss(pcs, ps, reduction).item<double>(), content_loss(pcs, pc, reduction).item<double>()};
}

double deception_rate(ArtistPredictor& predictor, const torch::Tensor& images,
                      const std::vector<std::string>& target_artists) {
  if (images.size(0) != static_cast<std::int64_t>(target_artists.size())) {
    throw ShapeError("one target artist per image is required");
  }
  if (target_artists.empty()) throw DegenerateInput("no images to classify");
  const auto& labels = predictor.labels();
  std::vector<std::int64_t> targets;
  for (const auto& t : target_artists) {
    auto it = std::find(labels.begin(), labels.end(), t);
    if (it == labels.end()) throw DegenerateInput("artist '" + t + "' is unknown to the classifier");
    targets.push_back(it - labels.begin());
  }
  const auto predicted = predictor.predict(images);
  if (predicted.size() != targets.size()) throw ShapeError("classifier returned the wrong number of predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) hits += predicted[i] == targets[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(targets.size());
}

StatsArtistClassifier::StatsArtistClassifier(VggEncoder encoder, std::vector<std::string> labels)
    : encoder_(std::move(encoder)), labels_(std::move(labels)) {
  if (labels_.size() < 2) throw DegenerateInput("a classifier needs at least two artists");
  std::int64_t dim = 0;
  for (auto layer : kStyleLayers) dim += 2 * layer_channels(layer);
  head_ = torch::nn::Linear(dim, static_cast<std::int64_t>(labels_.size()));
}

torch::Tensor StatsArtistClassifier::features(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  auto pyr = encoder_(images);
  std::vector<torch::Tensor> parts;
  for (auto layer : kStyleLayers) {
    auto s = channel_stats(pyr.at(layer));
    parts.push_back(s.mean.flatten(1));
    parts.push_back(s.std.flatten(1));
  }
  return torch::cat(parts, 1);
}

void StatsArtistClassifier::fit(const torch::Tensor& images, const std::vector<std::int64_t>& targets,
                                std::int64_t epochs, double lr) {
  auto x = features(images);
  feature_mean_ = x.mean(0, true);
  feature_std_ = x.std(0, true, true) + 1e-6;
  x = (x - feature_mean_) / feature_std_;
  auto y = torch::tensor(targets, torch::kLong);
  torch::optim::Adam opt(head_->parameters(), torch::optim::AdamOptions(lr));
  for (std::int64_t e = 0; e < epochs; ++e) {
    opt.zero_grad();
    auto loss = torch::nn::functional::cross_entropy(head_(x), y);
    loss.backward();
    opt.step();
  }
}

std::vector<std::int64_t> StatsArtistClassifier::predict(const torch::Tensor& images) {
  if (!feature_mean_.defined()) throw DegenerateInput("classifier has not been fitted");
  auto x = (features(images) - feature_mean_) / feature_std_;
  torch::NoGradGuard no_grad;
  auto arg = head_(x).argmax(1).contiguous();
  return {arg.data_ptr<std::int64_t>(), arg.data_ptr<std::int64_t>() + arg.numel()};
}

std::string EmbeddingTable::to_csv() const {
  std::ostringstream out;
  out << "# schema_version: " << kReportSchemaVersion << "\nlabel";
  for (std::int64_t j = 0; j < values.size(1); ++j) out << ",e" << j;
  out << '\n' << std::setprecision(9);
  auto v = values.to(torch::kFloat64).contiguous();
  const double* p = v.data_ptr<double>();
  for (std::int64_t i = 0; i < v.size(0); ++i) {
    const auto& label = labels[static_cast<std::size_t>(i)];
    if (label.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : label) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      out << quoted << '"';
    } else {
      out << label;
    }
    for (std::int64_t j = 0; j < v.size(1); ++j) out << ',' << p[i * v.size(1) + j];
    out << '\n';
  }
  return out.str();
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_csv();
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "# schema_version: 1") throw Error(path.string() + ": unsupported embedding table schema");
  std::getline(in, line);  // header
  EmbeddingTable t;
  std::vector<double> flat;
  std::int64_t cols = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t pos = 0;
    std::string label;
    if (line[0] == '"') {
      pos = 1;
      while (pos < line.size()) {
        if (line[pos] == '"' && pos + 1 < line.size() && line[pos + 1] == '"') {
          label += '"';
          pos += 2;
        } else if (line[pos] == '"') {
          ++pos;
          break;
        } else {
          label += line[pos++];
        }
      }
    } else {
      pos = line.find(',');
      label = line.substr(0, pos);
    }
    t.labels.push_back(label);
    std::int64_t n = 0;
    std::istringstream rest(line.substr(pos == std::string::npos ? line.size() : pos));
    char comma;
    double v;
    while (rest >> comma >> v) {
      flat.push_back(v);
      ++n;
    }
    if (cols >= 0 && n != cols) throw Error(path.string() + ": ragged embedding table");
    cols = n;
  }
  t.values = torch::tensor(flat, torch::kFloat64).view({static_cast<std::int64_t>(t.labels.size()), std::max<std::int64_t>(cols, 0)});
  return t;
}

EmbeddingTable export_embeddings(const clip::ClipAdapter& clip, const std::vector<torch::Tensor>& images,
                                 const std::vector<std::string>& image_labels,
                                 const std::vector<std::string>& prompts,
                                 const std::vector<std::string>& prompt_labels) {
  if (images.size() != image_labels.size() || prompts.size() != prompt_labels.size()) {
    throw ShapeError("every image and prompt needs a label");
  }
  if (images.empty() && prompts.empty()) throw DegenerateInput("nothing to export");
  EmbeddingTable t;
  std::vector<torch::Tensor> rows;
  for (std::size_t i = 0; i < images.size(); ++i) {
    rows.push_back(clip.encode_image(images[i]).values());
    t.labels.push_back(image_labels[i]);
  }
  if (!prompts.empty()) {
    auto text = clip.encode_texts(prompts);
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      rows.push_back(text[static_cast<std::int64_t>(i)]);
      t.labels.push_back(prompt_labels[i]);
    }
  }
  t.values = torch::stack(rows);
  return t;
}

double centroid_separation(const torch::Tensor& values, const std::vector<std::string>& labels) {
  if (values.size(0) != static_cast<std::int64_t>(labels.size())) throw ShapeError("one label per row is required");
  std::map<std::string, std::vector<std::int64_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<std::int64_t>(i));
  if (groups.size() < 2) throw DegenerateInput("centroid separation needs at least two labels");
  auto v = values.to(torch::kFloat64);
  std::vector<torch::Tensor> centroids;
  for (const auto& [label, idx] : groups) centroids.push_back(v.index_select(0, torch::tensor(idx)).mean(0));
  double total = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    for (std::size_t j = i + 1; j < centroids.size(); ++j) {
      total += (centroids[i] - centroids[j]).norm().item<double>();
      ++pairs;
    }
  }
  return total / pairs;
}

double reconstruction_psnr(VggEncoder& encoder, Decoder& decoder, const std::vector<torch::Tensor>& images) {
  if (images.empty()) throw DegenerateInput("no images to reconstruct");
  torch::NoGradGuard no_grad;
  double sum = 0.0;
  for (const auto& img : images) {
    auto out = decoder->decode(encoder->relu4_1(img.unsqueeze(0))).squeeze(0);
    sum += psnr(quantize_u8(out), quantize_u8(img));
  }
  return sum / static_cast<double>(images.size());
}

}  // namespace txst
