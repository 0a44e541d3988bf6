#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "mcrc/model.hpp"
#include "mcrc/optim.hpp"

namespace mcrc {

enum class StageOneMode { kJoint, kSeparate };

/// Hyperparameters of both training stages. The defaults are the full-size
/// settings; the toy runs override them from a config file.
struct TrainConfig {
  double lr = 0.005;
  double clip_norm = 10.0;
  std::size_t batch_size = 32;
  std::size_t vocab_cap = 65000;
  std::size_t embed_dim = 300;
  std::size_t hidden = 128;
  double dropout = 0.45;
  std::size_t max_epochs = 80;
  std::size_t selection_epochs = 80;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  bool finetune_embeddings = false;
  bool train_option_encoder = true;
  StageOneMode stage_one = StageOneMode::kJoint;
  double span_loss_weight = 1.0;
  std::size_t max_span = kDefaultMaxSpan;
  std::size_t max_answer = kDefaultMaxAnswer;
  std::size_t char_dim = 16;
  std::size_t char_hidden = 25;
  OptionPooling option_pooling = OptionPooling::kFinalState;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t workers = 1;

  /// Throws ConfigError unless every size and rate is in range.
  void validate() const;

  ModelConfig model() const;
  AdamOptions adam() const;
};

/// Applies one key=value setting. Unknown keys and unparsable values throw.
void apply_setting(TrainConfig& config, std::string_view key, std::string_view value);

/// Flat key=value text; '#' starts a comment, blank lines are ignored.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

/// Every field as key=value lines, in a fixed order; parse_config reads it back.
std::string format_config(const TrainConfig& config);

}  // namespace mcrc
