#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "txst/archive.hpp"
#include "txst/data.hpp"
#include "txst/model.hpp"
#include "txst/objectives.hpp"

namespace txst {

enum class Stage { kReconstruction, kStyle };
Stage parse_stage(const std::string& name);
std::string stage_name(Stage stage);

/// Hash of the configuration entries that shape the loss trajectory. Run
/// length, checkpoint cadence and file locations are left out so that a run
/// can be resumed with a longer budget or from a moved directory.
std::string config_hash(const nlohmann::json& config);

struct StepResult {
  std::int64_t iteration = 0;
  /// Metrics record: {"iter", per-term values, "total"}.
  nlohmann::json record;
  double total = 0.0;
  double grad_norm = 0.0;
  bool clipped = false;
};

/// Owns the trainable parameters, the optimizer and the sampling generator.
/// Stage "reconstruction" trains the decoder alone on pixel L1 plus the
/// content feature loss; stage "style" trains decoder, mapper and fusion on
/// the six-term objective.
class Trainer {
 public:
  Trainer(nlohmann::json config, Manifest manifest);

  /// Rebuilds a trainer from a checkpoint. Refuses a config whose hash differs
  /// from the one stored in the checkpoint, or frozen weights that changed.
  static std::unique_ptr<Trainer> resume(const std::filesystem::path& checkpoint, nlohmann::json config,
                                         Manifest manifest);

  StepResult step();
  /// Steps until `train.iterations` is reached, appending to metrics.jsonl and
  /// writing checkpoints into `paths.output_dir`. Returns the final checkpoint path.
  std::filesystem::path run(const std::function<void(const StepResult&)>& on_step = {});

  Archive checkpoint() const;
  std::filesystem::path save_checkpoint(const std::filesystem::path& path) const;

  std::int64_t iteration() const { return iteration_; }
  Stage stage() const { return stage_; }
  StyleTransferModel& model() { return *model_; }
  const nlohmann::json& config() const { return config_; }
  const Manifest& manifest() const { return manifest_; }
  ImageStore& store() { return *store_; }

 private:
  void restore(const Archive& archive);
  std::vector<torch::Tensor> optimized_parameters() const;
  torch::Tensor load_batch(const std::vector<std::filesystem::path>& paths);
  StepResult reconstruction_step();
  StepResult style_step();

  nlohmann::json config_;
  Manifest manifest_;
  Stage stage_;
  std::unique_ptr<StyleTransferModel> model_;
  std::unique_ptr<ImageStore> store_;
  std::unique_ptr<clip::PromptTemplates> templates_;
  std::unique_ptr<torch::optim::Adam> optimizer_;
  std::vector<std::pair<std::string, torch::Tensor>> named_params_;
  LossWeights weights_;
  ContrastiveConfig contrastive_;
  Reduction reduction_;
  torch::Tensor source_text_;
  std::mt19937_64 rng_;
  std::int64_t iteration_ = 0;
};

/// Reconstruction objective of the first stage: mean pixel L1 + weighted content loss.
/// Returns {pixel term, content term}.
std::pair<torch::Tensor, torch::Tensor> reconstruction_terms(VggEncoder& encoder, Decoder& decoder,
                                                             const torch::Tensor& images, Reduction reduction);

}  // namespace txst
