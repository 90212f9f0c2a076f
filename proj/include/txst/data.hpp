#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "txst/clip/adapter.hpp"

namespace txst {

struct ImageEntry {
  std::string path;  // relative to its root
  std::string sha256;
};

struct ArtistEntry {
  std::string name;       // prompt form: directory name with '_' mapped to ' '
  std::string directory;  // directory name under the style root
  std::vector<ImageEntry> paintings;
};

/// Index of content images and an artist-grouped style corpus.
/// Every listed artist has at least two paintings and artist names are unique.
struct Manifest {
  static constexpr int kSchemaVersion = 1;

  std::string content_root;
  std::string style_root;
  std::vector<ImageEntry> contents;
  std::vector<ArtistEntry> artists;
  /// Artists left out of the corpus and why.
  std::vector<std::string> warnings;

  std::size_t painting_count() const;
  std::filesystem::path content_path(std::size_t index) const;
  std::filesystem::path painting_path(std::size_t artist, std::size_t painting) const;
  std::vector<std::string> artist_names() const;

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
  /// Pretty-printed JSON followed by a newline.
  std::string dump() const;
  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);
};

/// Scans `content/*.{jpg,png}` and `style/<artist>/*.{jpg,png}`. Output order
/// is lexicographic, so the manifest is a pure function of the two trees.
/// Throws DegenerateInput when either root yields nothing usable.
Manifest build_manifest(const std::filesystem::path& content_root, const std::filesystem::path& style_root);

enum class ResizeMode { kShorterSide, kSquash };
ResizeMode parse_resize_mode(const std::string& name);

struct PatchOptions {
  std::int64_t load_size = 512;
  std::int64_t patch_size = 256;
  ResizeMode resize = ResizeMode::kShorterSide;
};

struct PatchGeometry {
  std::int64_t top = 0;
  std::int64_t left = 0;
  bool flip = false;
};

/// Draws crop offsets and the horizontal flip for an image of the given size.
PatchGeometry draw_patch_geometry(std::int64_t height, std::int64_t width, std::int64_t patch, std::mt19937_64& rng);

/// Resize per `options` (before cropping).
torch::Tensor resize_for_training(const torch::Tensor& image, const PatchOptions& options);

/// Resize, random patch_size x patch_size crop, random horizontal flip.
torch::Tensor training_patch(const torch::Tensor& resized, const PatchOptions& options, std::mt19937_64& rng);
torch::Tensor load_training_patch(const std::filesystem::path& path, std::uint64_t seed, const PatchOptions& options);

/// Thread-safe cache of resized training images. Files that fail to decode are
/// recorded in the skip list instead of aborting the run.
class ImageStore {
 public:
  explicit ImageStore(PatchOptions options, std::filesystem::path skip_list = {});

  /// Throws CorruptImage (after recording it) for unreadable files.
  torch::Tensor resized(const std::filesystem::path& path);
  torch::Tensor patch(const std::filesystem::path& path, std::mt19937_64& rng);

  bool skipped(const std::filesystem::path& path) const;
  std::vector<std::string> skip_list() const;
  const PatchOptions& options() const { return options_; }

 private:
  PatchOptions options_;
  std::filesystem::path skip_list_path_;
  mutable std::mutex mutex_;
  std::map<std::string, torch::Tensor> cache_;
  std::set<std::string> skipped_;
};

/// One minibatch of Algorithm-style pairs: for slot i, two distinct paintings
/// of artist[i] and two augmented prompts naming that artist.
struct TrainBatch {
  std::vector<std::size_t> content;
  std::vector<std::size_t> artist;
  std::vector<std::size_t> style_a;
  std::vector<std::size_t> style_b;
  std::vector<std::string> prompts_a;
  std::vector<std::string> prompts_b;
  /// Set when n exceeded the number of contents and slots were drawn with replacement.
  bool with_replacement = false;

  std::size_t size() const { return content.size(); }
};

/// Draws `n` content indices: distinct when enough are usable, otherwise with replacement.
std::vector<std::size_t> sample_contents(const Manifest& manifest, std::size_t n, std::mt19937_64& rng,
                                         const std::set<std::string>& excluded = {},
                                         bool* with_replacement = nullptr);

/// Draws `n >= 2` slots. Excluded entries (by path) are never chosen.
TrainBatch sample_minibatch(const Manifest& manifest, std::size_t n, std::mt19937_64& rng,
                            const clip::PromptTemplates& templates, const std::set<std::string>& excluded = {});
TrainBatch sample_minibatch(const Manifest& manifest, std::size_t n, std::uint64_t seed,
                            const clip::PromptTemplates& templates);

}  // namespace txst
