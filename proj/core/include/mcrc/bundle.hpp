#pragma once

#include <filesystem>
#include <memory>

#include "mcrc/config.hpp"
#include "mcrc/model.hpp"

namespace mcrc {

// A model directory holds config.txt, vocab.txt (one token per line, in id
// order), chars.txt (one byte value per line), synthesis.ckpt and
// selection.ckpt.
struct LoadedModel {
  TrainConfig config;
  std::unique_ptr<ReaderModel> model;
};

void save_model(const ReaderModel& model, const TrainConfig& config, const std::filesystem::path& dir);

/// Throws CheckpointError when the directory or any of its files is missing
/// or unreadable.
LoadedModel load_model(const std::filesystem::path& dir);

}  // namespace mcrc
