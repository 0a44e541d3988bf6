#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "mcrc/config.hpp"
#include "mcrc/corpus.hpp"
#include "mcrc/extractor.hpp"
#include "mcrc/model.hpp"

namespace mcrc {

/// Instances with their id form and distant-supervision span, index-aligned.
struct Dataset {
  std::vector<Instance> instances;
  std::vector<IndexedInstance> indexed;
  std::vector<std::optional<EvidenceSpan>> oracle;

  std::size_t size() const noexcept { return instances.size(); }
  bool empty() const noexcept { return instances.empty(); }
};

Dataset make_dataset(std::vector<Instance> instances, const Vocabulary& vocab, std::size_t max_span);

struct CorpusSplits {
  std::vector<Instance> train;
  std::vector<Instance> dev;
  std::vector<Instance> test;
};

/// Reads <dir>/train, <dir>/dev and <dir>/test; a missing dev or test
/// directory leaves that split empty. A missing train directory throws.
CorpusSplits load_splits(const std::filesystem::path& dir);

/// Counts passage and question tokens of `instances`, each passage once.
Vocabulary build_vocabulary(std::span<const Instance> instances, std::size_t cap);

/// Everything needed to build a model and train it on one corpus.
struct Experiment {
  Vocabulary vocab;
  CharVocabulary chars;
  std::optional<EmbeddingTable> embeddings;
  Dataset train;
  Dataset dev;
  Dataset test;
};

/// Vocabulary from the training split, optional pretrained vectors, and the
/// three indexed splits.
Experiment prepare_experiment(CorpusSplits splits, const TrainConfig& config,
                              const std::optional<std::filesystem::path>& embeddings = std::nullopt);

struct EpochRecord {
  int stage = 1;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_accuracy = 0.0;
  /// Largest post-clipping global gradient norm seen during the epoch.
  double max_grad_norm = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  /// epochs[0] is the untrained model's dev measurement.
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

struct TrainOptions {
  /// One JSON object per epoch when set.
  std::ostream* jsonl = nullptr;
  /// Stage parameters are written here every time the dev metric improves.
  std::optional<std::filesystem::path> checkpoint;
};

/// Stage one: extraction and synthesis on oracle-span features, early
/// stopping on dev loss. The best-dev parameters are restored on return.
TrainLog train_synthesis_stage(ReaderModel& model, const TrainConfig& config, const Dataset& train,
                               const Dataset& dev, const TrainOptions& options = {});

/// Stage two: freezes stage one, seeds the option encoder from the question
/// encoder, zeroes the bilinear weight and trains selection on the model's
/// own greedy answers. The best-dev-accuracy parameters, epoch 0 included,
/// are restored on return.
TrainLog train_selection_stage(ReaderModel& model, const TrainConfig& config, const Dataset& train,
                               const Dataset& dev, const TrainOptions& options = {});

/// Eval-mode stage-one loss averaged over instances.
double stage_one_dev_loss(const ReaderModel& model, const Dataset& data, std::size_t batch_size,
                          double span_weight = 1.0);

/// Greedy answer surfaces for every instance, in dataset order.
std::vector<TokenIds> generate_all(const ReaderModel& model, const Dataset& data, std::size_t batch_size);

/// Fraction of instances whose greedy answer equals the gold option exactly.
double exact_generation_rate(const ReaderModel& model, const Dataset& data, std::size_t batch_size);

}  // namespace mcrc
