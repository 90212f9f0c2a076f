#include "txst/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "txst/archive.hpp"
#include "txst/errors.hpp"
#include "txst/image.hpp"

namespace txst {
namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

std::vector<ImageEntry> scan_images(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  std::vector<ImageEntry> out;
  for (const auto& name : names) out.push_back({name, file_hash(dir / name)});
  return out;
}

std::size_t draw_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace

std::size_t Manifest::painting_count() const {
  std::size_t n = 0;
  for (const auto& a : artists) n += a.paintings.size();
  return n;
}

fs::path Manifest::content_path(std::size_t index) const { return fs::path(content_root) / contents.at(index).path; }

fs::path Manifest::painting_path(std::size_t artist, std::size_t painting) const {
  const auto& a = artists.at(artist);
  return fs::path(style_root) / a.directory / a.paintings.at(painting).path;
}

std::vector<std::string> Manifest::artist_names() const {
  std::vector<std::string> names;
  for (const auto& a : artists) names.push_back(a.name);
  return names;
}

nlohmann::json Manifest::to_json() const {
  using nlohmann::json;
  auto images = [](const std::vector<ImageEntry>& v) {
    json arr = json::array();
    for (const auto& e : v) arr.push_back({{"path", e.path}, {"sha256", e.sha256}});
    return arr;
  };
  json artist_list = json::array();
  for (const auto& a : artists) {
    artist_list.push_back({{"name", a.name}, {"directory", a.directory}, {"paintings", images(a.paintings)}});
  }
  return {{"schema_version", kSchemaVersion},
          {"content_root", content_root},
          {"style_root", style_root},
          {"contents", images(contents)},
          {"artists", artist_list},
          {"counts",
           {{"contents", contents.size()}, {"artists", artists.size()}, {"paintings", painting_count()}}},
          {"warnings", warnings}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) throw ConfigError("unsupported manifest schema version");
  Manifest m;
  m.content_root = j.at("content_root");
  m.style_root = j.at("style_root");
  for (const auto& e : j.at("contents")) m.contents.push_back({e.at("path"), e.at("sha256")});
  for (const auto& a : j.at("artists")) {
    ArtistEntry artist{a.at("name"), a.at("directory"), {}};
    for (const auto& e : a.at("paintings")) artist.paintings.push_back({e.at("path"), e.at("sha256")});
    if (artist.paintings.size() < 2) throw ConfigError("artist '" + artist.name + "' has fewer than two paintings");
    m.artists.push_back(std::move(artist));
  }
  m.warnings = j.value("warnings", std::vector<std::string>{});
  return m;
}

std::string Manifest::dump() const { return to_json().dump(2) + "\n"; }

void Manifest::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Roots are stored relative to the manifest so the tree can move as a whole.
  const auto base = fs::absolute(path).parent_path();
  Manifest rel = *this;
  rel.content_root = fs::absolute(content_root).lexically_relative(base).generic_string();
  rel.style_root = fs::absolute(style_root).lexically_relative(base).generic_string();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << rel.dump();
  if (!out) throw Error("cannot write manifest " + path.string());
}

Manifest Manifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("manifest " + path.string() + " is not valid JSON");
  auto m = from_json(j);
  const auto base = path.parent_path();
  for (auto* root : {&m.content_root, &m.style_root}) {
    if (fs::path(*root).is_relative()) *root = (base / *root).lexically_normal().generic_string();
  }
  return m;
}

Manifest build_manifest(const fs::path& content_root, const fs::path& style_root) {
  if (!fs::is_directory(content_root)) throw DegenerateInput("content root is not a directory: " + content_root.string());
  if (!fs::is_directory(style_root)) throw DegenerateInput("style root is not a directory: " + style_root.string());
  Manifest m;
  m.content_root = content_root.lexically_normal().generic_string();
  m.style_root = style_root.lexically_normal().generic_string();
  m.contents = scan_images(content_root);
  if (m.contents.empty()) throw DegenerateInput("no content images under " + content_root.string());

  std::vector<std::string> dirs;
  for (const auto& entry : fs::directory_iterator(style_root)) {
    if (entry.is_directory()) dirs.push_back(entry.path().filename().string());
  }
  std::sort(dirs.begin(), dirs.end());
  std::set<std::string> seen;
  for (const auto& dir : dirs) {
    std::string name = dir;
    std::replace(name.begin(), name.end(), '_', ' ');
    auto paintings = scan_images(style_root / dir);
    if (paintings.size() < 2) {
      m.warnings.push_back("excluded artist '" + name + "': " + std::to_string(paintings.size()) +
                           " painting(s), need at least 2");
      continue;
    }
    if (!seen.insert(name).second) {
      m.warnings.push_back("excluded artist directory '" + dir + "': duplicate name '" + name + "'");
      continue;
    }
    m.artists.push_back({name, dir, std::move(paintings)});
  }
  if (m.artists.empty()) throw DegenerateInput("no artist under " + style_root.string() + " has two or more paintings");
  return m;
}

ResizeMode parse_resize_mode(const std::string& name) {
  if (name == "shorter_side") return ResizeMode::kShorterSide;
  if (name == "squash") return ResizeMode::kSquash;
  throw ConfigError("unknown resize mode '" + name + "'");
}

PatchGeometry draw_patch_geometry(std::int64_t height, std::int64_t width, std::int64_t patch, std::mt19937_64& rng) {
  if (height < patch || width < patch) throw ShapeError("image smaller than the training patch");
  PatchGeometry g;
  g.top = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(height - patch + 1));
  g.left = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(width - patch + 1));
  g.flip = (rng() >> 63) != 0;
  return g;
}

torch::Tensor resize_for_training(const torch::Tensor& image, const PatchOptions& options) {
  if (options.patch_size > options.load_size) throw ConfigError("patch size exceeds load size");
  if (options.resize == ResizeMode::kSquash) return resize_to(image, options.load_size, options.load_size);
  return resize_shorter_side(image, options.load_size);
}

torch::Tensor training_patch(const torch::Tensor& resized, const PatchOptions& options, std::mt19937_64& rng) {
  const auto p = options.patch_size;
  const auto g = draw_patch_geometry(resized.size(-2), resized.size(-1), p, rng);
  auto out = resized.slice(-2, g.top, g.top + p).slice(-1, g.left, g.left + p);
  if (g.flip) out = out.flip({-1});
  return out.contiguous();
}

torch::Tensor load_training_patch(const fs::path& path, std::uint64_t seed, const PatchOptions& options) {
  std::mt19937_64 rng(seed);
  return training_patch(resize_for_training(load_image(path), options), options, rng);
}

ImageStore::ImageStore(PatchOptions options, fs::path skip_list)
    : options_(options), skip_list_path_(std::move(skip_list)) {
  if (!skip_list_path_.empty() && fs::exists(skip_list_path_)) {
    std::ifstream in(skip_list_path_);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) skipped_.insert(line);
    }
  }
}

torch::Tensor ImageStore::resized(const fs::path& path) {
  const auto key = path.generic_string();
  {
    std::lock_guard lock(mutex_);
    if (skipped_.count(key)) throw CorruptImage(key);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  torch::Tensor image;
  try {
    image = resize_for_training(load_image(path), options_);
  } catch (const CorruptImage&) {
    std::lock_guard lock(mutex_);
    if (skipped_.insert(key).second && !skip_list_path_.empty()) {
      if (skip_list_path_.has_parent_path()) fs::create_directories(skip_list_path_.parent_path());
      std::ofstream out(skip_list_path_, std::ios::app);
      out << key << "\n";
    }
    throw;
  }
  std::lock_guard lock(mutex_);
  return cache_.emplace(key, image).first->second;
}

torch::Tensor ImageStore::patch(const fs::path& path, std::mt19937_64& rng) {
  return training_patch(resized(path), options_, rng);
}

bool ImageStore::skipped(const fs::path& path) const {
  std::lock_guard lock(mutex_);
  return skipped_.count(path.generic_string()) != 0;
}

std::vector<std::string> ImageStore::skip_list() const {
  std::lock_guard lock(mutex_);
  return {skipped_.begin(), skipped_.end()};
}

std::vector<std::size_t> sample_contents(const Manifest& manifest, std::size_t n, std::mt19937_64& rng,
                                         const std::set<std::string>& excluded, bool* with_replacement) {
  std::vector<std::size_t> contents;
  for (std::size_t i = 0; i < manifest.contents.size(); ++i) {
    if (!excluded.count(manifest.content_path(i).generic_string())) contents.push_back(i);
  }
  if (contents.empty()) throw DegenerateInput("no usable content images");
  std::vector<std::size_t> out;
  const bool replace = n > contents.size();
  if (with_replacement != nullptr) *with_replacement = replace;
  if (!replace) {
    // Partial Fisher-Yates: distinct contents.
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = i + draw_index(rng, contents.size() - i);
      std::swap(contents[i], contents[j]);
      out.push_back(contents[i]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) out.push_back(contents[draw_index(rng, contents.size())]);
  }
  return out;
}

TrainBatch sample_minibatch(const Manifest& manifest, std::size_t n, std::mt19937_64& rng,
                            const clip::PromptTemplates& templates, const std::set<std::string>& excluded) {
  if (n < 2) throw DegenerateInput("minibatch size must be at least 2");
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> artists;
  for (std::size_t a = 0; a < manifest.artists.size(); ++a) {
    std::vector<std::size_t> usable;
    for (std::size_t p = 0; p < manifest.artists[a].paintings.size(); ++p) {
      if (!excluded.count(manifest.painting_path(a, p).generic_string())) usable.push_back(p);
    }
    if (usable.size() >= 2) artists.emplace_back(a, std::move(usable));
  }
  if (artists.empty()) throw DegenerateInput("no artist has two usable paintings");

  TrainBatch batch;
  batch.content = sample_contents(manifest, n, rng, excluded, &batch.with_replacement);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [artist, usable] = artists[draw_index(rng, artists.size())];
    const auto first = draw_index(rng, usable.size());
    auto second = draw_index(rng, usable.size() - 1);
    if (second >= first) ++second;
    const auto& name = manifest.artists[artist].name;
    batch.artist.push_back(artist);
    batch.style_a.push_back(usable[first]);
    batch.style_b.push_back(usable[second]);
    batch.prompts_a.push_back(templates.augment(name, rng()));
    batch.prompts_b.push_back(templates.augment(name, rng()));
  }
  return batch;
}

TrainBatch sample_minibatch(const Manifest& manifest, std::size_t n, std::uint64_t seed,
                            const clip::PromptTemplates& templates) {
  std::mt19937_64 rng(seed);
  return sample_minibatch(manifest, n, rng, templates);
}

}  // namespace txst
