#include "mcrc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "mcrc/error.hpp"

namespace mcrc {

EvalReport EvalReport::from_predictions(std::string system, std::vector<InstancePrediction> predictions) {
  EvalReport r;
  r.system = std::move(system);
  for (const auto& p : predictions) {
    const bool ok = p.predicted == p.gold;
    r.correct += ok;
    ++r.total;
    auto& s = r.subsets[p.subset];
    s.correct += ok;
    ++s.total;
  }
  r.predictions = std::move(predictions);
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["system"] = system;
  if (!checkpoint.empty()) j["checkpoint"] = checkpoint;
  j["correct"] = correct;
  j["total"] = total;
  j["accuracy"] = accuracy();
  if (reference_accuracy) {
    j["reference_accuracy"] = *reference_accuracy;
    j["reference_note"] = reference_note;
  }
  nlohmann::ordered_json subs = nlohmann::ordered_json::object();
  for (const auto& [name, c] : subsets) {
    subs[name.empty() ? "(none)" : name] = {{"correct", c.correct}, {"total", c.total}, {"accuracy", c.accuracy()}};
  }
  j["subsets"] = subs;
  nlohmann::ordered_json preds = nlohmann::ordered_json::array();
  for (const auto& p : predictions) {
    preds.push_back({{"id", p.key},
                     {"subset", p.subset},
                     {"predicted", p.predicted},
                     {"gold", p.gold},
                     {"answer", p.answer}});
  }
  j["predictions"] = preds;
  return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  o << "system: " << system << '\n';
  if (!checkpoint.empty()) o << "checkpoint: " << checkpoint << '\n';
  if (reference_accuracy) o << "reference: " << *reference_accuracy << "% (" << reference_note << ")\n";
  o << std::left << std::setw(16) << "subset" << std::right << std::setw(10) << "correct" << std::setw(10)
    << "total" << std::setw(12) << "accuracy" << '\n';
  for (const auto& [name, c] : subsets) {
    o << std::left << std::setw(16) << (name.empty() ? "(none)" : name) << std::right << std::setw(10) << c.correct
      << std::setw(10) << c.total << std::setw(11) << 100.0 * c.accuracy() << "%\n";
  }
  o << std::left << std::setw(16) << "overall" << std::right << std::setw(10) << correct << std::setw(10) << total
    << std::setw(11) << 100.0 * accuracy() << "%\n";
  return o.str();
}

EvalReport evaluate(const ReaderModel& model, const Dataset& data, std::size_t batch_size, std::size_t workers) {
  if (batch_size == 0 || workers == 0) throw ConfigError("batch size and worker count must be positive");
  const std::vector<Batch> batches = make_batches(data.indexed, batch_size);
  std::vector<InstancePrediction> preds(data.size());
  std::vector<std::exception_ptr> failures(workers);

  auto run = [&](std::size_t shard) {
    try {
      const std::size_t lo = batches.size() * shard / workers, hi = batches.size() * (shard + 1) / workers;
      for (std::size_t k = lo; k < hi; ++k) {
        const Batch& batch = batches[k];
        Prediction p = model.predict(batch);
        for (std::size_t b = 0; b < batch.size(); ++b) {
          const std::size_t i = batch.indices[b];
          const Instance& inst = data.instances[i];
          preds[i] = {inst.key(), inst.subset, p.choices[b], inst.gold,
                      model.vocabulary().decode(p.answers[b].surface())};
        }
      }
    } catch (...) {
      failures[shard] = std::current_exception();
    }
  };

  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  EvalReport r = EvalReport::from_predictions("generate-then-match", std::move(preds));
  r.checkpoint = "best-dev";
  r.reference_accuracy = 77.3;
  r.reference_note = "full RACE test accuracy of the original model; not reproducible at toy scale";
  return r;
}

EvalReport random_baseline(std::span<const Instance> instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, kNumOptions - 1);
  std::vector<InstancePrediction> preds;
  preds.reserve(instances.size());
  for (const Instance& inst : instances) preds.push_back({inst.key(), inst.subset, pick(rng), inst.gold, ""});
  EvalReport r = EvalReport::from_predictions("random", std::move(preds));
  r.reference_accuracy = 24.9;
  r.reference_note = "full RACE test accuracy";
  return r;
}

double window_score(std::span<const std::string> passage, std::span<const std::string> bag, std::size_t window) {
  if (window == 0) throw ConfigError("window size must be positive");
  if (passage.empty()) return 0.0;
  std::unordered_map<std::string_view, std::size_t> count;
  for (const auto& t : passage) ++count[t];
  const std::unordered_set<std::string_view> in_bag(bag.begin(), bag.end());
  const double n = static_cast<double>(passage.size());

  std::vector<double> weight(passage.size(), 0.0);
  for (std::size_t i = 0; i < passage.size(); ++i) {
    if (in_bag.count(passage[i])) weight[i] = std::log1p(n / static_cast<double>(count[passage[i]]));
  }
  const std::size_t w = std::min(window, passage.size());
  // Sums are recomputed per window rather than slid, so every window's score
  // is an exact left-to-right sum independent of its neighbours.
  double best = 0.0;
  for (std::size_t s = 0; s + w <= passage.size(); ++s) {
    double total = 0.0;
    for (std::size_t i = s; i < s + w; ++i) total += weight[i];
    best = std::max(best, total);
  }
  return best;
}

std::array<double, kNumOptions> sliding_window_scores(const Instance& instance, std::size_t window) {
  std::array<double, kNumOptions> out{};
  for (std::size_t i = 0; i < kNumOptions; ++i) {
    Tokens bag = instance.question;
    bag.insert(bag.end(), instance.options[i].begin(), instance.options[i].end());
    out[i] = window_score(instance.passage, bag, window);
  }
  return out;
}

EvalReport sliding_window_baseline(std::span<const Instance> instances, std::size_t window) {
  std::vector<InstancePrediction> preds;
  preds.reserve(instances.size());
  for (const Instance& inst : instances) {
    const auto scores = sliding_window_scores(inst, window);
    const std::size_t best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    preds.push_back({inst.key(), inst.subset, best, inst.gold, ""});
  }
  EvalReport r = EvalReport::from_predictions("sliding-window", std::move(preds));
  r.reference_accuracy = 32.2;
  r.reference_note = "full RACE test accuracy";
  return r;
}

}  // namespace mcrc
