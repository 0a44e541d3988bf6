#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcrc/corpus.hpp"
#include "mcrc/model.hpp"
#include "mcrc/trainer.hpp"

namespace mcrc {

struct InstancePrediction {
  std::string key;
  std::string subset;
  std::size_t predicted = 0;
  std::size_t gold = 0;
  /// Generated answer surface; empty for baselines.
  std::string answer;
};

struct SubsetCount {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const noexcept { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct EvalReport {
  std::string system;
  std::string checkpoint;  // which checkpoint produced the numbers
  std::size_t correct = 0;
  std::size_t total = 0;
  std::map<std::string, SubsetCount> subsets;
  std::vector<InstancePrediction> predictions;
  /// Published full-data accuracy for this system, in percent.
  std::optional<double> reference_accuracy;
  std::string reference_note;

  double accuracy() const noexcept { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }

  /// Machine-readable form; byte-identical for identical reports.
  std::string to_json() const;
  /// Human-readable summary table.
  std::string to_table() const;

  /// Rebuilds counts from `predictions`.
  static EvalReport from_predictions(std::string system, std::vector<InstancePrediction> predictions);
};

/// Full pipeline in eval mode. `workers` > 1 splits the batches into that
/// many contiguous shards evaluated concurrently; the merged report does not
/// depend on the worker count.
EvalReport evaluate(const ReaderModel& model, const Dataset& data, std::size_t batch_size = 32,
                    std::size_t workers = 1);

/// Uniform choice among the four options under `seed`.
EvalReport random_baseline(std::span<const Instance> instances, std::uint64_t seed);

/// Best window score of one bag of words: the maximum over all passage
/// windows of `window` consecutive tokens (the whole passage when shorter) of
/// the summed log(1 + N / count(token)) of window tokens in `bag`, with N the
/// passage length and count the token's passage frequency.
double window_score(std::span<const std::string> passage, std::span<const std::string> bag, std::size_t window);

/// Window scores of the four options, bag = question tokens plus option tokens.
std::array<double, kNumOptions> sliding_window_scores(const Instance& instance, std::size_t window);

/// Highest window score wins; ties go to the lowest option index.
EvalReport sliding_window_baseline(std::span<const Instance> instances, std::size_t window = 10);

inline constexpr char kLetters[kNumOptions] = {'A', 'B', 'C', 'D'};

}  // namespace mcrc
