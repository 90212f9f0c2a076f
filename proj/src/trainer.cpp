#include "txst/trainer.hpp"

#include <fstream>
#include <sstream>

#include "txst/errors.hpp"
#include "txst/log.hpp"

namespace txst {

namespace fs = std::filesystem;

Stage parse_stage(const std::string& name) {
  if (name == "reconstruction") return Stage::kReconstruction;
  if (name == "style") return Stage::kStyle;
  throw ConfigError("unknown training stage '" + name + "'");
}

std::string stage_name(Stage stage) { return stage == Stage::kReconstruction ? "reconstruction" : "style"; }

std::string config_hash(const nlohmann::json& config) {
  auto relevant = config;
  relevant.erase("paths");
  relevant.erase("service");
  relevant["train"].erase("iterations");
  relevant["train"].erase("checkpoint_every");
  for (const char* key : {"manifest", "skip_list"}) relevant["data"].erase(key);
  // Frozen weights are checked by their own hashes, not by file location.
  for (const char* key : {"checkpoint", "templates", "vocab"}) relevant["clip"].erase(key);
  relevant["vgg"].erase("checkpoint");
  return sha256_hex(relevant.dump());
}

std::pair<torch::Tensor, torch::Tensor> reconstruction_terms(VggEncoder& encoder, Decoder& decoder,
                                                             const torch::Tensor& images, Reduction reduction) {
  FeaturePyramid target;
  {
    torch::NoGradGuard no_grad;
    target = encoder(images);
  }
  auto out = decoder(target.at(Layer::kRelu4_1));
  auto pixel = (out - images).abs().mean();
  auto content = content_loss(encoder(out), target, reduction);
  return {pixel, content};
}

namespace {

PatchOptions patch_options(const nlohmann::json& config) {
  const auto& d = config.at("data");
  PatchOptions o;
  o.load_size = d.at("load_size");
  o.patch_size = d.at("patch_size");
  o.resize = parse_resize_mode(d.at("resize"));
  return o;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

torch::Tensor repeat_batch(const torch::Tensor& t, std::int64_t times) {
  std::vector<std::int64_t> reps(static_cast<std::size_t>(t.dim()), 1);
  reps[0] = times;
  return t.repeat(reps);
}

FeaturePyramid repeat_pyramid(const FeaturePyramid& p, std::int64_t times) {
  FeaturePyramid out;
  for (const auto& [layer, t] : p) out[layer] = repeat_batch(t, times);
  return out;
}

FeaturePyramid cat_pyramids(const FeaturePyramid& a, const FeaturePyramid& b) {
  FeaturePyramid out;
  for (const auto& [layer, t] : a) out[layer] = torch::cat({t, b.at(layer)});
  return out;
}

}  // namespace

Trainer::Trainer(nlohmann::json config, Manifest manifest)
    : config_(std::move(config)),
      manifest_(std::move(manifest)),
      stage_(parse_stage(config_.at("train").at("stage"))),
      weights_(LossWeights::from_json(config_.at("loss").at("weights"))),
      reduction_(parse_reduction(config_.at("loss").at("reduce"))),
      rng_(config_.at("train").at("seed").get<std::uint64_t>()) {
  const auto& train = config_.at("train");
  if (train.at("lr").get<double>() <= 0.0) throw ConfigError("train.lr must be positive");
  if (train.at("iterations").get<std::int64_t>() <= 0) throw ConfigError("train.iterations must be positive");
  if (train.at("batch_size").get<std::int64_t>() < (stage_ == Stage::kStyle ? 2 : 1)) {
    throw ConfigError("train.batch_size is too small for this stage");
  }
  contrastive_.temperature = config_.at("loss").at("temperature");
  contrastive_.mode = parse_contrastive_mode(config_.at("loss").at("contrastive_mode"));
  if (contrastive_.temperature <= 0.0) throw ConfigError("loss.temperature must be positive");

  if (train.at("deterministic").get<bool>()) {
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, false);
  }

  model_ = std::make_unique<StyleTransferModel>(config_);
  const std::string stage1 = config_.at("paths").at("stage1_checkpoint");
  if (stage_ == Stage::kStyle && !stage1.empty()) {
    model_->import_parameters(Archive::load(stage1), /*decoder_only=*/true);
  }
  store_ = std::make_unique<ImageStore>(patch_options(config_), config_.at("data").at("skip_list").get<std::string>());
  templates_ = std::make_unique<clip::PromptTemplates>(
      clip::PromptTemplates::load(config_.at("clip").at("templates").get<std::string>()));
  named_params_ = model_->trainable_parameters();
  if (stage_ == Stage::kStyle) {
    source_text_ = model_->clip().encode_texts({config_.at("loss").at("source_text").get<std::string>()});
  }
  optimizer_ = std::make_unique<torch::optim::Adam>(optimized_parameters(),
                                                    torch::optim::AdamOptions(train.at("lr").get<double>()));
  model_->train_mode(true);
}

std::vector<torch::Tensor> Trainer::optimized_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& [name, p] : named_params_) {
    if (stage_ == Stage::kReconstruction && name.rfind(std::string(kDecoderNamespace) + ".", 0) != 0) continue;
    out.push_back(p);
  }
  return out;
}

torch::Tensor Trainer::load_batch(const std::vector<fs::path>& paths) {
  std::vector<torch::Tensor> patches;
  patches.reserve(paths.size());
  for (const auto& p : paths) patches.push_back(store_->patch(p, rng_));
  return torch::stack(patches);
}

StepResult Trainer::step() {
  // A file that fails to decode is recorded and the batch redrawn.
  for (int attempt = 0;; ++attempt) {
    try {
      return stage_ == Stage::kReconstruction ? reconstruction_step() : style_step();
    } catch (const CorruptImage& e) {
      log_event("warn", "skipped_image", {{"path", e.path()}});
      if (attempt >= 16) throw;
    }
  }
}

StepResult Trainer::reconstruction_step() {
  const auto n = config_.at("train").at("batch_size").get<std::size_t>();
  const auto skipped = store_->skip_list();
  const std::set<std::string> excluded(skipped.begin(), skipped.end());
  std::vector<fs::path> paths;
  for (auto i : sample_contents(manifest_, n, rng_, excluded)) paths.push_back(manifest_.content_path(i));
  auto images = load_batch(paths);

  auto [pixel, content] = reconstruction_terms(model_->encoder(), model_->decoder(), images, reduction_);
  const double pv = pixel.item<double>();
  const double cv = content.item<double>();
  if (!std::isfinite(pv)) throw NonFiniteLoss("l_pix");
  if (!std::isfinite(cv)) throw NonFiniteLoss("l_con");
  auto total = pixel + content * weights_.con;

  optimizer_->zero_grad();
  total.backward();
  StepResult r;
  const double clip = config_.at("train").at("grad_clip");
  r.grad_norm = torch::nn::utils::clip_grad_norm_(optimized_parameters(), clip);
  r.clipped = r.grad_norm > clip;
  optimizer_->step();
  r.iteration = ++iteration_;
  r.total = pv + weights_.con * cv;
  r.record = {{"iter", r.iteration}, {"l_pix", pv}, {"l_con", cv}, {"total", r.total}};
  return r;
}

StepResult Trainer::style_step() {
  const auto n = config_.at("train").at("batch_size").get<std::size_t>();
  const auto skipped = store_->skip_list();
  const std::set<std::string> excluded(skipped.begin(), skipped.end());
  const auto batch = sample_minibatch(manifest_, n, rng_, *templates_, excluded);
  std::vector<fs::path> cp, sa, sb;
  for (std::size_t i = 0; i < n; ++i) {
    cp.push_back(manifest_.content_path(batch.content[i]));
    sa.push_back(manifest_.painting_path(batch.artist[i], batch.style_a[i]));
    sb.push_back(manifest_.painting_path(batch.artist[i], batch.style_b[i]));
  }
  auto content = load_batch(cp);
  auto style_a = load_batch(sa);
  auto style_b = load_batch(sb);

  const auto& clip = model_->clip();
  auto& encoder = model_->encoder();
  const auto N = static_cast<std::int64_t>(n);
  FeaturePyramid content_pyr, style_pyr;
  clip::ImageEncoding content_enc, ref_enc;
  torch::Tensor text_emb;
  {
    torch::NoGradGuard no_grad;
    content_pyr = encoder(content);
    auto styles = torch::cat({style_a, style_b});
    style_pyr = encoder(styles);
    content_enc = clip.encode_images(content);
    ref_enc = clip.encode_images(styles);
    text_emb = torch::cat({clip.encode_texts(batch.prompts_a), clip.encode_texts(batch.prompts_b)});
  }

  // Four stylizations per slot: painting a, painting b, prompt a, prompt b.
  auto embeddings = torch::cat({ref_enc.embedding, text_emb});
  const auto& fc = content_pyr.at(Layer::kRelu4_1);
  auto outputs = model_->decoder()(model_->stylized_features(repeat_batch(fc, 4), embeddings));
  auto out_pyr = encoder(outputs);
  auto out_enc = clip.encode_images(outputs);

  LossTerms terms;
  auto targets = repeat_batch(text_emb, 2);
  terms.clip = directional_clip_loss(repeat_batch(content_enc.embedding, 4), out_enc.embedding,
                                     source_text_.expand({4 * N, source_text_.size(1)}), targets);

  std::vector<std::int64_t> labels, partner;
  for (std::int64_t k = 0; k < 2 * N; ++k) {
    labels.push_back(static_cast<std::int64_t>(batch.artist[static_cast<std::size_t>(k % N)]));
    partner.push_back(k < N ? k + N : k - N);
  }
  auto nu_image = out_enc.tokens.slice(0, 0, 2 * N);
  auto nu_text = out_enc.tokens.slice(0, 2 * N, 4 * N);
  terms.sim = contrastive_similarity_loss(nu_image, nu_text, labels, partner, contrastive_);
  terms.clip_f = clip_feature_loss(nu_image, ref_enc.tokens);
  terms.sty = style_loss(out_pyr, cat_pyramids(style_pyr, style_pyr), reduction_);
  terms.con = content_loss(out_pyr, repeat_pyramid(content_pyr, 4), reduction_);
  auto self_stylized = model_->stylized_features(fc, content_enc.embedding);
  terms.id = identity_loss(self_stylized, fc, reduction_);

  auto report = total_loss(terms, weights_);
  optimizer_->zero_grad();
  report.total.backward();
  StepResult r;
  const double max_norm = config_.at("train").at("grad_clip");
  r.grad_norm = torch::nn::utils::clip_grad_norm_(optimized_parameters(), max_norm);
  r.clipped = r.grad_norm > max_norm;
  optimizer_->step();
  r.iteration = ++iteration_;
  r.total = report.total_value;
  r.record = report.to_json();
  r.record["iter"] = r.iteration;
  return r;
}

fs::path Trainer::run(const std::function<void(const StepResult&)>& on_step) {
  const fs::path out_dir = config_.at("paths").at("output_dir").get<std::string>();
  fs::create_directories(out_dir);
  const auto target = config_.at("train").at("iterations").get<std::int64_t>();
  const auto every = config_.at("train").at("checkpoint_every").get<std::int64_t>();
  std::ofstream metrics(out_dir / "metrics.jsonl", std::ios::app);
  const auto latest = out_dir / "latest.txst";
  log_event("info", "train_start", {{"stage", stage_name(stage_)}, {"from", iteration_}, {"to", target}});
  while (iteration_ < target) {
    StepResult r;
    try {
      r = step();
    } catch (const NonFiniteLoss& e) {
      // The last periodic checkpoint is left untouched.
      log_event("error", "non_finite_loss", {{"term", e.term()}, {"iteration", iteration_ + 1}});
      throw;
    }
    if (r.clipped) log_event("info", "grad_clipped", {{"iteration", r.iteration}, {"norm", r.grad_norm}});
    metrics << r.record.dump() << '\n';
    metrics.flush();
    if (on_step) on_step(r);
    if (every > 0 && r.iteration % every == 0) save_checkpoint(latest);
  }
  save_checkpoint(latest);
  log_event("info", "train_done", {{"iteration", iteration_}, {"checkpoint", latest.string()}});
  return latest;
}

Archive Trainer::checkpoint() const {
  Archive a;
  model_->export_parameters(a);
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& [name, p] : named_params_) {
    auto it = optimizer_->state().find(p.unsafeGetTensorImpl());
    if (it == optimizer_->state().end()) continue;
    const auto& st = static_cast<const torch::optim::AdamParamState&>(*it->second);
    a.tensors["optim." + name + ".exp_avg"] = st.exp_avg();
    a.tensors["optim." + name + ".exp_avg_sq"] = st.exp_avg_sq();
    steps[name] = st.step();
  }
  a.meta = {{"kind", "txst"},
            {"stage", stage_name(stage_)},
            {"iteration", iteration_},
            {"config", config_},
            {"config_hash", config_hash(config_)},
            {"rng", rng_state(rng_)},
            {"optimizer_steps", steps},
            {"frozen", model_->frozen_identity()},
            {"artists", manifest_.artist_names()},
            {"skip_list", store_->skip_list()}};
  return a;
}

fs::path Trainer::save_checkpoint(const fs::path& path) const {
  checkpoint().save(path);
  return path;
}

void Trainer::restore(const Archive& a) {
  model_->import_parameters(a);
  iteration_ = a.meta.at("iteration");
  std::istringstream in(a.meta.at("rng").get<std::string>());
  in >> rng_;
  if (!in) throw CheckpointError("corrupt generator state in checkpoint");
  const auto& steps = a.meta.at("optimizer_steps");
  for (const auto& [name, p] : named_params_) {
    if (!steps.contains(name)) continue;
    auto st = std::make_unique<torch::optim::AdamParamState>();
    st->step(steps.at(name).get<std::int64_t>());
    st->exp_avg(a.at("optim." + name + ".exp_avg").clone());
    st->exp_avg_sq(a.at("optim." + name + ".exp_avg_sq").clone());
    optimizer_->state()[p.unsafeGetTensorImpl()] = std::move(st);
  }
}

std::unique_ptr<Trainer> Trainer::resume(const fs::path& checkpoint, nlohmann::json config, Manifest manifest) {
  auto archive = Archive::load(checkpoint);
  if (archive.meta.value("kind", "") != "txst") throw CheckpointError(checkpoint.string() + " is not a training checkpoint");
  if (archive.meta.at("config_hash") != config_hash(config)) {
    throw ConfigError("config differs from the one " + checkpoint.string() + " was trained with");
  }
  auto trainer = std::make_unique<Trainer>(std::move(config), std::move(manifest));
  if (trainer->model().frozen_identity() != archive.meta.at("frozen")) {
    throw CheckpointError("frozen encoder or embedder weights differ from the checkpoint's");
  }
  trainer->restore(archive);
  log_event("info", "resumed", {{"checkpoint", checkpoint.string()}, {"iteration", trainer->iteration()}});
  return trainer;
}

}  // namespace txst
