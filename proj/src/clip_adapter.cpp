#include "txst/clip/adapter.hpp"

#include <fstream>
#include <random>

#include "txst/archive.hpp"
#include "txst/errors.hpp"
#include "txst/image.hpp"

namespace txst::clip {
namespace {

const double kMean[3] = {0.48145466, 0.4578275, 0.40821073};
const double kStd[3] = {0.26862954, 0.26130258, 0.27577711};

constexpr const char* kNamespace = "clip";

}  // namespace

ClipEmbedding::ClipEmbedding(torch::Tensor values) : values_(std::move(values)) {
  if (values_.dim() != 1 || values_.size(0) != kEmbeddingDim) {
    throw ShapeError("a joint embedding must be a vector of length 512");
  }
  if (!torch::isfinite(values_).all().item<bool>()) throw ShapeError("embedding has non-finite entries");
}

ClipAdapter::ClipAdapter(const ClipAdapterOptions& options) {
  tokenizer_ = std::make_shared<const BpeTokenizer>(options.vocab);
  if (!options.checkpoint.empty()) {
    auto archive = Archive::load(options.checkpoint);
    if (archive.meta.value("kind", "") != "clip") throw CheckpointError("not a clip checkpoint: " + options.checkpoint.string());
    model_ = ClipModel(ClipConfig::from_json(archive.meta.at("config")));
    import_module(*model_, kNamespace, archive);
    pretrained_ = archive.meta.value("pretrained", false);
  } else {
    model_ = ClipModel(ClipConfig::from_preset(options.preset));
    torch::manual_seed(options.seed);
    model_->initialize();
  }
  if (model_->config().embed_dim != kEmbeddingDim) throw ConfigError("embedder must produce 512-dim vectors");
  if (model_->config().vocab_size != tokenizer_->vocab_size()) throw ConfigError("tokenizer and embedder vocabularies differ");
  model_->eval();
  for (auto& p : model_->parameters()) p.set_requires_grad(false);
  weights_hash_ = parameter_hash(*model_);
}

void ClipAdapter::to(torch::ScalarType dtype) {
  model_->to(dtype);
  dtype_ = dtype;
}

torch::Tensor ClipAdapter::encode_texts(const std::vector<std::string>& prompts) const {
  if (prompts.empty()) throw DegenerateInput("no prompts to encode");
  const auto ctx = config().context_length;
  std::vector<std::int64_t> ids;
  ids.reserve(prompts.size() * static_cast<std::size_t>(ctx));
  for (const auto& p : prompts) {
    if (p.empty()) throw DegenerateInput("empty prompt");
    const auto row = tokenizer_->tokenize(p, ctx);
    ids.insert(ids.end(), row.begin(), row.end());
  }
  auto tokens = torch::tensor(ids, torch::kLong).view({static_cast<std::int64_t>(prompts.size()), ctx});
  torch::NoGradGuard no_grad;
  return model_->encode_text(tokens);
}

ClipEmbedding ClipAdapter::encode_text(std::string_view prompt) const {
  return ClipEmbedding(encode_texts({std::string(prompt)}).squeeze(0));
}

torch::Tensor ClipAdapter::preprocess(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("expected [B,3,H,W] images with 3 channels");
  const auto res = config().image_resolution;
  auto x = center_crop(resize_shorter_side(images, res), res, res);
  auto opts = torch::TensorOptions().dtype(x.scalar_type());
  auto mean = torch::tensor({kMean[0], kMean[1], kMean[2]}, opts).view({1, 3, 1, 1});
  auto std = torch::tensor({kStd[0], kStd[1], kStd[2]}, opts).view({1, 3, 1, 1});
  return (x - mean) / std;
}

ImageEncoding ClipAdapter::encode_images(const torch::Tensor& images) const {
  auto features = model_->image_features(preprocess(images.to(dtype_)));
  return {model_->project_image(features), features};
}

ClipEmbedding ClipAdapter::encode_image(const torch::Tensor& image) const {
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("expected a [3,H,W] image with 3 channels");
  torch::NoGradGuard no_grad;
  return ClipEmbedding(encode_images(image.unsqueeze(0)).embedding.squeeze(0));
}

ClipTokenFeature ClipAdapter::encode_image_tokens(const torch::Tensor& image, std::string source_id) const {
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("expected a [3,H,W] image with 3 channels");
  torch::NoGradGuard no_grad;
  return {encode_images(image.unsqueeze(0)).tokens.squeeze(0), std::move(source_id)};
}

void save_clip_checkpoint(const ClipModel& model, bool pretrained, const std::filesystem::path& path) {
  Archive archive;
  archive.meta = {{"kind", "clip"}, {"config", model->config().to_json()}, {"pretrained", pretrained}};
  export_module(*model, kNamespace, archive);
  archive.save(path);
}

double cosine_similarity(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw ShapeError("cosine similarity needs equal dimensions");
  auto x = a.detach().to(torch::kFloat64).flatten();
  auto y = b.detach().to(torch::kFloat64).flatten();
  const double nx = x.norm().item<double>();
  const double ny = y.norm().item<double>();
  if (nx == 0.0 || ny == 0.0) throw DegenerateInput("cosine similarity of a zero-norm vector");
  return std::clamp(x.dot(y).item<double>() / (nx * ny), -1.0, 1.0);
}

torch::Tensor cosine_similarity_rows(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw ShapeError("cosine similarity needs equal dimensions");
  auto na = a.norm(2, -1);
  auto nb = b.norm(2, -1);
  if ((na == 0).any().item<bool>() || (nb == 0).any().item<bool>()) {
    throw DegenerateInput("cosine similarity of a zero-norm vector");
  }
  return (a * b).sum(-1) / (na * nb);
}

PromptTemplates::PromptTemplates(std::vector<std::string> templates) : templates_(std::move(templates)) {
  if (templates_.empty()) throw ConfigError("prompt template set is empty");
  for (const auto& t : templates_) {
    if (t.find("{name}") == std::string::npos) throw ConfigError("template lacks {name}: " + t);
  }
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open prompt templates " + path.string());
  std::vector<std::string> templates;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    templates.push_back(line);
  }
  return PromptTemplates(std::move(templates));
}

std::string PromptTemplates::apply(std::size_t index, std::string_view artist_name) const {
  auto out = templates_.at(index);
  out.replace(out.find("{name}"), 6, artist_name);
  return out;
}

std::string PromptTemplates::augment(std::string_view artist_name, std::uint64_t seed) const {
  if (artist_name.empty()) throw DegenerateInput("artist name is empty");
  std::mt19937_64 rng(seed);
  const auto index = static_cast<std::size_t>(rng() % templates_.size());
  return apply(index, artist_name);
}

}  // namespace txst::clip
