#include "mcrc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <set>

#include "json.hpp"
#include "mcrc/checkpoint.hpp"
#include "mcrc/error.hpp"
#include "mcrc/optim.hpp"

namespace mcrc {
namespace {

using Clock = std::chrono::steady_clock;

std::vector<Tensor> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const std::vector<Parameter*>& params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

std::vector<const Parameter*> const_view(const std::vector<Parameter*>& params) {
  return {params.begin(), params.end()};
}

std::vector<Parameter*> trainable_only(const std::vector<Parameter*>& params) {
  std::vector<Parameter*> out;
  for (Parameter* p : params) {
    if (p->trainable) out.push_back(p);
  }
  return out;
}

void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

// Clips, returns the post-clipping norm.
double clip(const std::vector<Parameter*>& params, double threshold) {
  clip_global_norm(params, threshold);
  return global_grad_norm(params);
}

void write_record(std::ostream* out, const EpochRecord& r) {
  if (!out) return;
  nlohmann::ordered_json j = {{"stage", r.stage}, {"epoch", r.epoch}};
  if (r.epoch > 0) j["train_loss"] = r.train_loss;
  if (r.stage == 1) {
    j["dev_loss"] = r.dev_loss;
  } else {
    j["dev_accuracy"] = r.dev_accuracy;
  }
  if (r.epoch > 0) {
    j["max_grad_norm"] = r.max_grad_norm;
    j["seconds"] = r.seconds;
  }
  *out << j.dump() << '\n';
  out->flush();
}

std::vector<std::optional<EvidenceSpan>> oracle_of(const Dataset& data, const Batch& batch) {
  std::vector<std::optional<EvidenceSpan>> out;
  out.reserve(batch.size());
  for (std::size_t i : batch.indices) out.push_back(data.oracle[i]);
  return out;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double selection_accuracy(const ReaderModel& model, const Dataset& data, const std::vector<TokenIds>& answers,
                          std::size_t batch_size) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const Batch& batch : make_batches(data.indexed, batch_size)) {
    std::vector<TokenIds> a;
    for (std::size_t i : batch.indices) a.push_back(answers[i]);
    Tape tape;
    Var scores = model.selection_scores(tape, batch, a, ForwardMode::eval());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      if (select_option(scores.value().row(b)) == batch.gold[b]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

Dataset make_dataset(std::vector<Instance> instances, const Vocabulary& vocab, std::size_t max_span) {
  Dataset d;
  d.indexed.reserve(instances.size());
  d.oracle.reserve(instances.size());
  for (const Instance& inst : instances) {
    d.indexed.push_back(index_instance(inst, vocab));
    d.oracle.push_back(oracle_span<std::string>(inst.passage, inst.options[inst.gold], max_span));
  }
  d.instances = std::move(instances);
  return d;
}

CorpusSplits load_splits(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir / "train")) throw DataError("no train directory under " + dir.string());
  CorpusSplits s;
  s.train = load_race_directory(dir / "train");
  if (fs::is_directory(dir / "dev")) s.dev = load_race_directory(dir / "dev");
  if (fs::is_directory(dir / "test")) s.test = load_race_directory(dir / "test");
  return s;
}

Vocabulary build_vocabulary(std::span<const Instance> instances, std::size_t cap) {
  std::vector<Tokens> streams;
  std::set<std::string> seen_passages;
  for (const Instance& inst : instances) {
    if (seen_passages.insert(inst.id).second) streams.push_back(inst.passage);
    streams.push_back(inst.question);
  }
  return Vocabulary::build(streams, cap);
}

Experiment prepare_experiment(CorpusSplits splits, const TrainConfig& config,
                              const std::optional<std::filesystem::path>& embeddings) {
  config.validate();
  if (splits.train.empty()) throw DataError("empty training set");
  Experiment e{build_vocabulary(splits.train, config.vocab_cap), {}, std::nullopt, {}, {}, {}};
  e.chars = CharVocabulary::build(e.vocab);
  if (embeddings) {
    e.embeddings = load_embeddings(*embeddings, e.vocab, config.embed_dim, config.seed, config.finetune_embeddings);
  }
  e.train = make_dataset(std::move(splits.train), e.vocab, config.max_span);
  e.dev = make_dataset(std::move(splits.dev), e.vocab, config.max_span);
  e.test = make_dataset(std::move(splits.test), e.vocab, config.max_span);
  return e;
}

double stage_one_dev_loss(const ReaderModel& model, const Dataset& data, std::size_t batch_size,
                          double span_weight) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const Batch& batch : make_batches(data.indexed, batch_size)) {
    Tape tape;
    auto oracle = oracle_of(data, batch);
    Var loss = model.stage_one_loss(tape, batch, oracle, ForwardMode::eval(), span_weight);
    total += loss.value()[0] * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(data.size());
}

std::vector<TokenIds> generate_all(const ReaderModel& model, const Dataset& data, std::size_t batch_size) {
  std::vector<TokenIds> out(data.size());
  for (const Batch& batch : make_batches(data.indexed, batch_size)) {
    auto answers = model.generate_answers(batch);
    for (std::size_t b = 0; b < batch.size(); ++b) out[batch.indices[b]] = answers[b].surface();
  }
  return out;
}

double exact_generation_rate(const ReaderModel& model, const Dataset& data, std::size_t batch_size) {
  if (data.empty()) return 0.0;
  auto answers = generate_all(model, data, batch_size);
  std::size_t exact = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const IndexedInstance& x = data.indexed[i];
    if (answers[i] == x.options[x.gold]) ++exact;
  }
  return static_cast<double>(exact) / static_cast<double>(data.size());
}

TrainLog train_synthesis_stage(ReaderModel& model, const TrainConfig& config, const Dataset& train,
                               const Dataset& dev, const TrainOptions& options) {
  config.validate();
  if (train.empty()) throw DataError("empty training set");
  const Dataset& held_out = dev.empty() ? train : dev;

  const std::vector<Parameter*> stage = trainable_only(model.synthesis_parameters());
  if (stage.empty()) throw ConfigError("stage one has no trainable parameters");
  std::vector<Parameter*> extraction, synthesis;
  for (Parameter* p : stage) (p->name.rfind("extract.", 0) == 0 ? extraction : synthesis).push_back(p);

  const bool joint = config.stage_one == StageOneMode::kJoint;
  Adam joint_opt(stage, config.adam());
  std::optional<Adam> extraction_opt, synthesis_opt;
  if (!joint) {
    if (!extraction.empty()) extraction_opt.emplace(extraction, config.adam());
    synthesis_opt.emplace(synthesis, config.adam());
  }

  std::mt19937_64 rng(config.seed);
  const ForwardMode mode{true, config.dropout, &rng};
  TrainLog log;
  EpochRecord initial;
  initial.dev_loss = stage_one_dev_loss(model, held_out, config.batch_size, config.span_loss_weight);
  log.epochs.push_back(initial);
  write_record(options.jsonl, initial);
  double best = initial.dev_loss;
  std::vector<Tensor> best_values = snapshot(stage);
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = Clock::now();
    EpochRecord rec;
    rec.stage = 1;
    rec.epoch = epoch;
    double total = 0.0;
    for (const Batch& batch : make_batches(train.indexed, config.batch_size, config.seed + epoch)) {
      auto oracle = oracle_of(train, batch);
      double step_loss = 0.0;
      if (joint) {
        Tape tape;
        Var loss = model.stage_one_loss(tape, batch, oracle, mode, config.span_loss_weight);
        zero_grads(stage);
        tape.backward(loss);
        rec.max_grad_norm = std::max(rec.max_grad_norm, clip(stage, config.clip_norm));
        joint_opt.step();
        step_loss = loss.value()[0];
      } else {
        // Extraction first, on its own span loss, then synthesis alone.
        std::vector<EvidenceSpan> targets(batch.size());
        std::vector<double> weights(batch.size(), 0.0);
        for (std::size_t b = 0; b < batch.size(); ++b) {
          if (oracle[b]) {
            targets[b] = *oracle[b];
            weights[b] = config.span_loss_weight / static_cast<double>(batch.size());
          }
        }
        if (extraction_opt && config.span_loss_weight > 0 &&
            std::any_of(weights.begin(), weights.end(), [](double w) { return w > 0; })) {
          Tape tape;
          CharFeatures chars = model.char_features(tape, batch);
          auto x = model.extract(tape, chars, batch, mode);
          Var loss = span_loss(x.scores, targets, weights);
          zero_grads(stage);
          tape.backward(loss);
          rec.max_grad_norm = std::max(rec.max_grad_norm, clip(extraction, config.clip_norm));
          extraction_opt->step();
          step_loss += loss.value()[0];
        }
        Tape tape;
        Var loss = model.stage_one_loss(tape, batch, oracle, mode, 0.0);
        zero_grads(stage);
        tape.backward(loss);
        rec.max_grad_norm = std::max(rec.max_grad_norm, clip(synthesis, config.clip_norm));
        synthesis_opt->step();
        step_loss += loss.value()[0];
      }
      log.step_losses.push_back(step_loss);
      total += step_loss * static_cast<double>(batch.size());
    }
    rec.train_loss = total / static_cast<double>(train.size());
    rec.dev_loss = stage_one_dev_loss(model, held_out, config.batch_size, config.span_loss_weight);
    rec.seconds = seconds_since(start);
    log.epochs.push_back(rec);
    write_record(options.jsonl, rec);

    if (rec.dev_loss < best) {
      best = rec.dev_loss;
      best_values = snapshot(stage);
      log.best_epoch = epoch;
      stale = 0;
      if (options.checkpoint) save_checkpoint(const_view(model.synthesis_parameters()), *options.checkpoint);
    } else if (++stale >= config.patience) {
      log.stopped_early = true;
      break;
    }
  }
  restore(stage, best_values);
  return log;
}

TrainLog train_selection_stage(ReaderModel& model, const TrainConfig& config, const Dataset& train,
                               const Dataset& dev, const TrainOptions& options) {
  config.validate();
  if (train.empty()) throw DataError("empty training set");
  const Dataset& held_out = dev.empty() ? train : dev;

  for (Parameter* p : model.synthesis_parameters()) p->trainable = false;
  model.reset_option_encoder();
  model.parameters().set_trainable(kOptionEncoderPrefix, config.train_option_encoder);
  Parameter& bilinear = model.parameters().at(std::string(kSelectionPrefix) + "bilinear");
  bilinear.value.fill(0.0);
  bilinear.trainable = true;

  const std::vector<Parameter*> all_selection = model.selection_parameters();
  const std::vector<Parameter*> stage = trainable_only(all_selection);
  Adam opt(stage, config.adam());

  // Stage one is frozen and decoding is deterministic, so each instance's
  // generated answer is fixed for the whole stage.
  const auto train_answers = generate_all(model, train, config.batch_size);
  const auto dev_answers = &held_out == &train ? train_answers : generate_all(model, held_out, config.batch_size);

  TrainLog log;
  EpochRecord first;
  first.stage = 2;
  first.dev_accuracy = selection_accuracy(model, held_out, dev_answers, config.batch_size);
  log.epochs.push_back(first);
  write_record(options.jsonl, first);
  double best = first.dev_accuracy;
  std::vector<Tensor> best_values = snapshot(all_selection);
  if (options.checkpoint) save_checkpoint(const_view(all_selection), *options.checkpoint);
  std::size_t stale = 0;

  std::mt19937_64 rng(config.seed + 7919);
  const ForwardMode mode{true, config.dropout, &rng};
  for (std::size_t epoch = 1; epoch <= config.selection_epochs; ++epoch) {
    const auto start = Clock::now();
    EpochRecord rec;
    rec.stage = 2;
    rec.epoch = epoch;
    double total = 0.0;
    for (const Batch& batch : make_batches(train.indexed, config.batch_size, config.seed + 104729 + epoch)) {
      std::vector<TokenIds> answers;
      for (std::size_t i : batch.indices) answers.push_back(train_answers[i]);
      Tape tape;
      Var loss = model.stage_two_loss(tape, batch, answers, mode);
      zero_grads(stage);
      tape.backward(loss);
      rec.max_grad_norm = std::max(rec.max_grad_norm, clip(stage, config.clip_norm));
      opt.step();
      log.step_losses.push_back(loss.value()[0]);
      total += loss.value()[0] * static_cast<double>(batch.size());
    }
    rec.train_loss = total / static_cast<double>(train.size());
    rec.dev_accuracy = selection_accuracy(model, held_out, dev_answers, config.batch_size);
    rec.seconds = seconds_since(start);
    log.epochs.push_back(rec);
    write_record(options.jsonl, rec);

    if (rec.dev_accuracy > best) {
      best = rec.dev_accuracy;
      best_values = snapshot(all_selection);
      log.best_epoch = epoch;
      stale = 0;
      if (options.checkpoint) save_checkpoint(const_view(all_selection), *options.checkpoint);
    } else if (++stale >= config.patience) {
      log.stopped_early = true;
      break;
    }
  }
  restore(all_selection, best_values);
  return log;
}

}  // namespace mcrc
