#include <cstdlib>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "txst/config.hpp"
#include "txst/data.hpp"
#include "txst/errors.hpp"
#include "txst/evaluator.hpp"
#include "txst/image.hpp"
#include "txst/log.hpp"
#include "txst/service.hpp"
#include "txst/stylize.hpp"
#include "txst/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kCheckpoint = 3, kBadInput = 4 };

struct Settings {
  json config;
  // Only the keys given on the command line, nested; merged over checkpoint snapshots.
  json patch = json::object();
};

// Turns trailing "--dotted.key value" / "--dotted.key=value" pairs into config overrides.
Settings build_settings(const std::string& config_path, const std::vector<std::string>& extras) {
  Settings s;
  s.config = config_path.empty() ? txst::default_config() : txst::load_config(config_path);
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string key = extras[i];
    if (key.rfind("--", 0) != 0) throw CLI::ExtrasError({key});
    key = key.substr(2);
    std::string value;
    if (auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else if (i + 1 < extras.size()) {
      value = extras[++i];
    } else {
      throw txst::ConfigError("missing value for --" + key);
    }
    if (key == "train.preset") txst::apply_preset(s.config, value);
    txst::apply_override(s.config, key, value);
    json* node = &s.patch;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (dot == std::string::npos) {
        (*node)[part] = txst::config_at(s.config, key);
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  return s;
}

fs::path checkpoint_or_env(const std::string& given) {
  if (!given.empty()) return given;
  if (const char* env = std::getenv("TXST_CHECKPOINT"); env != nullptr && *env != '\0') return env;
  throw txst::CheckpointError("no checkpoint given (use --checkpoint or TXST_CHECKPOINT)");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw txst::Error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw txst::Error("cannot read " + path.string());
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

std::vector<fs::path> image_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

int run_manifest(const std::string& content, const std::string& style, const std::string& out) {
  auto m = txst::build_manifest(content, style);
  for (const auto& w : m.warnings) txst::log_event("warn", "manifest", {{"message", w}});
  m.save(out);
  std::cout << json{{"manifest", out},
                    {"contents", m.contents.size()},
                    {"artists", m.artist_names()},
                    {"paintings", m.painting_count()}}
                   .dump()
            << '\n';
  return kOk;
}

int run_train(const Settings& s, const std::string& resume) {
  auto manifest = txst::Manifest::load(s.config.at("data").at("manifest").get<std::string>());
  auto trainer = resume.empty() ? std::make_unique<txst::Trainer>(s.config, std::move(manifest))
                                : txst::Trainer::resume(resume, s.config, std::move(manifest));
  const auto every = std::max<std::int64_t>(1, s.config.at("train").at("iterations").get<std::int64_t>() / 20);
  const auto path = trainer->run([&](const txst::StepResult& r) {
    if (r.iteration % every == 0) txst::log_event("info", "step", r.record);
  });
  std::cout << json{{"checkpoint", path.string()}, {"iteration", trainer->iteration()}}.dump() << '\n';
  return kOk;
}

struct StylizeArgs {
  std::string content, out = "stylized.png", checkpoint;
  std::vector<std::string> texts, images;
  std::vector<double> weights;
  bool combine = false, metrics = false;
  double alpha = 1.0;
  std::int64_t max_side = 0;
};

int run_stylize(const Settings& s, const StylizeArgs& a) {
  txst::StylePrompt prompt;
  for (const auto& t : a.texts) prompt.components.push_back({txst::PromptKind::kText, t, {}, 1.0});
  for (const auto& i : a.images) prompt.components.push_back({txst::PromptKind::kImage, {}, txst::load_image(i), 1.0});
  if (prompt.components.empty()) throw txst::DegenerateInput("give at least one --text or --image");
  if (!a.weights.empty()) {
    if (a.weights.size() != prompt.components.size()) {
      throw txst::DegenerateInput("--weight must be given once per prompt (texts first, then images)");
    }
    for (std::size_t i = 0; i < a.weights.size(); ++i) prompt.components[i].weight = a.weights[i];
  }
  prompt.combine_text = a.combine;
  const txst::Stylizer stylizer(checkpoint_or_env(a.checkpoint), s.patch);
  auto content = txst::limit_longest_side(txst::load_image(a.content), a.max_side);
  const auto embedding = prompt.resolve(stylizer.clip());
  auto out = stylizer.stylize_embedding(content, embedding, a.alpha);
  txst::save_png(a.out, out);
  json result = {{"output", a.out}, {"model", stylizer.info()}};
  if (a.metrics) result["metrics"] = txst::clip_scores(stylizer.clip(), content, out, embedding).to_json();
  std::cout << result.dump() << '\n';
  return kOk;
}

// Pairs directory: <id>.content.png, <id>.stylized.png and either <id>.style.png or <id>.style.txt.
int run_evaluate(const Settings& s, const std::string& pairs, const std::string& checkpoint, const std::string& out,
                 const std::string& embeddings_out) {
  json config = s.config;
  if (!checkpoint.empty()) {
    config = txst::Archive::load(checkpoint).meta.at("config");
    txst::merge_config(config, s.patch);
  }
  txst::StyleTransferModel frozen(config);
  const auto& clip = frozen.clip();
  std::set<std::string> ids;
  for (const auto& e : fs::directory_iterator(pairs)) {
    const auto name = e.path().filename().string();
    const std::string suffix = ".stylized.png";
    if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      ids.insert(name.substr(0, name.size() - suffix.size()));
    }
  }
  if (ids.empty()) throw txst::DegenerateInput("no <id>.stylized.png files in " + pairs);
  json items = json::array();
  double sum_cont = 0.0, sum_style = 0.0;
  std::vector<torch::Tensor> emb_images;
  std::vector<std::string> emb_labels;
  for (const auto& id : ids) {
    const fs::path dir = pairs;
    auto content = txst::load_image(dir / (id + ".content.png"));
    auto stylized = txst::load_image(dir / (id + ".stylized.png"));
    torch::Tensor style_embedding;
    json item = {{"id", id}};
    std::string style_label;
    if (fs::exists(dir / (id + ".style.png"))) {
      auto style = txst::load_image(dir / (id + ".style.png"));
      style_embedding = clip.encode_image(style).values();
      auto vgg = txst::vgg_scores(frozen.encoder(), content, style, stylized);
      item["vgg_style"] = vgg.style;
      item["vgg_content"] = vgg.content;
      style_label = id;
    } else {
      style_label = read_text(dir / (id + ".style.txt"));
      style_embedding = clip.encode_text(style_label).values();
      item["style_text"] = style_label;
    }
    auto report = txst::clip_scores(clip, content, stylized, style_embedding);
    const auto scores = report.to_json();
    for (const auto& [k, v] : scores.items()) {
      if (k != "schema_version") item[k] = v;
    }
    sum_cont += report.content_score;
    sum_style += report.style_score;
    items.push_back(item);
    emb_images.push_back(content);
    emb_labels.push_back("content");
    emb_images.push_back(stylized);
    emb_labels.push_back(style_label);
  }
  txst::MetricReport mean;
  mean.content_score = sum_cont / static_cast<double>(ids.size());
  mean.style_score = sum_style / static_cast<double>(ids.size());
  mean.f1 = txst::f1_score(mean.content_score, mean.style_score);
  json report = mean.to_json();
  report["pairs"] = items;
  report["frozen"] = frozen.frozen_identity();
  if (!out.empty()) write_text(out, report.dump(2) + "\n");
  if (!embeddings_out.empty()) {
    txst::export_embeddings(clip, emb_images, emb_labels, {}, {}).save(embeddings_out);
  }
  std::cout << report.dump() << '\n';
  return kOk;
}

// Paintings directory: one sub-directory per artist (underscores read as spaces).
int run_affinity(const Settings& s, const std::string& paintings, const std::string& out, const std::string& csv) {
  txst::StyleTransferModel frozen(s.config);
  std::vector<std::string> artists, labels;
  std::vector<torch::Tensor> images;
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(paintings)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    auto name = d.filename().string();
    std::replace(name.begin(), name.end(), '_', ' ');
    artists.push_back(name);
    for (const auto& f : image_files(d)) {
      images.push_back(txst::load_image(f));
      labels.push_back(d.filename().string() + "/" + f.filename().string());
    }
  }
  auto m = txst::affinity_matrix(frozen.clip(), images, labels, artists);
  auto j = m.to_json();
  j["clip_pretrained"] = frozen.clip().pretrained();
  if (!out.empty()) write_text(out, j.dump(2) + "\n");
  if (!csv.empty()) write_text(csv, m.to_csv());
  std::cout << json{{"rows", labels.size()},
                    {"artists", artists.size()},
                    {"diagonal_hit_rate", j.value("diagonal_hit_rate", json())}}
                   .dump()
            << '\n';
  return kOk;
}

txst::Service* g_service = nullptr;

int run_serve(const Settings& s, const std::string& checkpoint) {
  const auto path = checkpoint_or_env(checkpoint);
  txst::Service service(txst::ServiceOptions::from_config(s.config));
  const int port = service.bind();
  g_service = &service;
  std::signal(SIGINT, [](int) { g_service->stop(); });
  std::signal(SIGTERM, [](int) { g_service->stop(); });
  txst::log_event("info", "listening", {{"port", port}});
  std::thread loader([&] {
    try {
      service.load(std::make_shared<const txst::Stylizer>(path, s.patch));
      txst::log_event("info", "model_loaded", {{"checkpoint", path.string()}});
    } catch (const std::exception& e) {
      txst::log_event("error", "model_load_failed", {{"message", e.what()}});
      service.stop();
    }
  });
  service.serve();
  loader.join();
  return service.ready() ? kOk : kCheckpoint;
}

int report_failure(const std::exception& e, const char* type, int code) {
  txst::log_event("error", "failed", {{"error_type", type}, {"message", e.what()}});
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-driven artist-aware style transfer"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file merged over the defaults")->check(CLI::ExistingFile);

  auto* manifest = app.add_subcommand("manifest", "Index a content tree and an artist-grouped style tree");
  std::string m_content, m_style, m_out = "manifest.json";
  manifest->add_option("--content", m_content, "content image directory")->required();
  manifest->add_option("--style", m_style, "style root with one directory per artist")->required();
  manifest->add_option("--out", m_out, "manifest file to write");

  auto* train = app.add_subcommand("train", "Run a training stage; config keys are accepted as --key value");
  std::string resume;
  train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  train->allow_extras();

  auto* stylize = app.add_subcommand("stylize", "Stylize one image with text and/or image prompts");
  StylizeArgs sa;
  stylize->add_option("--content", sa.content, "content image")->required()->check(CLI::ExistingFile);
  stylize->add_option("--text", sa.texts, "text prompt (repeatable)");
  stylize->add_option("--image", sa.images, "style image prompt (repeatable)")->check(CLI::ExistingFile);
  stylize->add_option("--weight", sa.weights, "blend weight per prompt, texts first then images");
  stylize->add_flag("--combine", sa.combine, "encode all text prompts as one 'a and b' string");
  stylize->add_option("--alpha", sa.alpha, "style strength in [0,1]")->check(CLI::Range(0.0, 1.0));
  stylize->add_option("--out", sa.out, "output PNG");
  stylize->add_option("--checkpoint", sa.checkpoint, "trained checkpoint (default: $TXST_CHECKPOINT)");
  stylize->add_option("--max-side", sa.max_side, "downscale so the longest side is at most this (0 = off)");
  stylize->add_flag("--metrics", sa.metrics, "print content/style scores");
  stylize->allow_extras();

  auto* evaluate = app.add_subcommand("evaluate", "Score stylized images against their contents and styles");
  std::string e_pairs, e_ckpt, e_out, e_emb;
  evaluate->add_option("--pairs", e_pairs, "directory of <id>.content/.stylized/.style files")->required();
  evaluate->add_option("--checkpoint", e_ckpt, "take frozen-model settings from this checkpoint");
  evaluate->add_option("--out", e_out, "report JSON to write");
  evaluate->add_option("--embeddings", e_emb, "also write a CSV of joint-space embeddings");
  evaluate->allow_extras();

  auto* affinity = app.add_subcommand("affinity", "Painting-to-artist-name affinity of the frozen embedder");
  std::string a_dir, a_out, a_csv;
  affinity->add_option("--paintings", a_dir, "directory with one sub-directory per artist")->required();
  affinity->add_option("--out", a_out, "JSON output");
  affinity->add_option("--csv", a_csv, "CSV output");
  affinity->allow_extras();

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  std::string s_ckpt;
  serve->add_option("--checkpoint", s_ckpt, "trained checkpoint (default: $TXST_CHECKPOINT)");
  serve->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    auto* sub = app.get_subcommands().front();
    const auto s = build_settings(config_path, sub->remaining());
    if (sub == manifest) return run_manifest(m_content, m_style, m_out);
    if (sub == train) return run_train(s, resume);
    if (sub == stylize) return run_stylize(s, sa);
    if (sub == evaluate) return run_evaluate(s, e_pairs, e_ckpt, e_out, e_emb);
    if (sub == affinity) return run_affinity(s, a_dir, a_out, a_csv);
    if (sub == serve) return run_serve(s, s_ckpt);
  } catch (const CLI::ParseError& e) {
    return report_failure(e, "usage", kUsage);
  } catch (const txst::ConfigError& e) {
    return report_failure(e, "config", kUsage);
  } catch (const txst::CheckpointError& e) {
    return report_failure(e, "checkpoint", kCheckpoint);
  } catch (const txst::CorruptImage& e) {
    return report_failure(e, "corrupt_image", kBadInput);
  } catch (const txst::PromptTooLong& e) {
    return report_failure(e, "prompt_too_long", kBadInput);
  } catch (const txst::DegenerateInput& e) {
    return report_failure(e, "degenerate_input", kBadInput);
  } catch (const txst::ShapeError& e) {
    return report_failure(e, "shape", kBadInput);
  } catch (const std::exception& e) {
    return report_failure(e, "error", kFailure);
  }
  return kUsage;
}
