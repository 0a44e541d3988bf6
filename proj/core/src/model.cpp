#include "mcrc/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mcrc/error.hpp"
#include "mcrc/ops.hpp"

namespace mcrc {

TokenIds answer_target(const TokenIds& option) {
  TokenIds t = option;
  t.push_back(Vocabulary::kEos);
  return t;
}

ReaderModel::ReaderModel(const ModelConfig& config, Vocabulary vocab, CharVocabulary chars,
                         const EmbeddingTable* embeddings, std::uint64_t seed)
    : config_(config), vocab_(std::move(vocab)), chars_(std::move(chars)) {
  if (config_.hidden == 0 || config_.embed_dim == 0 || config_.char_dim == 0 || config_.char_hidden == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  const std::size_t H = config_.hidden;
  const std::size_t enc = 2 * H;

  EmbeddingTable table = embeddings ? *embeddings : random_embeddings(vocab_, config_.embed_dim, seed);
  if (table.vectors.rows() != vocab_.size() || table.dim() != config_.embed_dim) {
    throw ShapeError("embedding table " + to_string(table.vectors.shape()) + " does not match vocabulary size " +
                     std::to_string(vocab_.size()) + " and dimension " + std::to_string(config_.embed_dim));
  }
  Parameter& words = params_.add("embedding.words", std::move(table.vectors), config_.finetune_embeddings);
  CharEncoder char_encoder =
      CharEncoder::create(params_, "chars", chars_.size(), config_.char_dim, config_.char_hidden, rng);
  embedder_ = WordEmbedder(&words, std::move(char_encoder), vocab_, chars_);

  const std::size_t in = embedder_.output_dim();
  extract_passage_ = BiGruEncoder::create(params_, "extract.passage", in, H, rng);
  question_ = BiGruEncoder::create(params_, kQuestionEncoderPrefix, in, H, rng);
  extractor_ = EvidenceExtractor::create(params_, "extract.span", enc, H, rng);
  synth_passage_ = BiGruEncoder::create(params_, "synth.passage", in + 2, H, rng);
  synth_question_ = BiGruEncoder::create(params_, "synth.question", in, H, rng);
  decoder_ = AnswerDecoder::create(params_, "synth.decoder", config_.embed_dim, enc, H, H, vocab_.size(), rng);
  option_encoder_ = BiGruEncoder::create(params_, kOptionEncoderPrefix, in, H, rng);
  matcher_ = BilinearMatcher::create(params_, "select.bilinear", enc);
  reset_option_encoder();
}

std::vector<Parameter*> ReaderModel::synthesis_parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : params_.all()) {
    if (p->name.rfind(kSelectionPrefix, 0) != 0) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> ReaderModel::synthesis_parameters() const {
  std::vector<const Parameter*> out;
  for (const Parameter* p : params_.all()) {
    if (p->name.rfind(kSelectionPrefix, 0) != 0) out.push_back(p);
  }
  return out;
}

std::vector<Parameter*> ReaderModel::selection_parameters() { return params_.with_prefix(kSelectionPrefix); }

void ReaderModel::reset_option_encoder() {
  const std::string from = kQuestionEncoderPrefix;
  const std::string to = kOptionEncoderPrefix;
  for (Parameter* src : params_.with_prefix(from + ".")) {
    Parameter& dst = params_.at(to + src->name.substr(from.size()));
    dst.value = src->value;
    dst.zero_grad();
  }
}

CharFeatures ReaderModel::char_features(Tape& tape, const Batch& batch, std::span<const TokenIds> extra) const {
  std::vector<std::size_t> ids;
  ids.insert(ids.end(), batch.passage.ids.begin(), batch.passage.ids.end());
  ids.insert(ids.end(), batch.question.ids.begin(), batch.question.ids.end());
  ids.insert(ids.end(), batch.options.ids.begin(), batch.options.ids.end());
  // Answer batches are padded separately, and empty answers become EOS.
  ids.push_back(Vocabulary::kPad);
  ids.push_back(Vocabulary::kEos);
  for (const auto& e : extra) ids.insert(ids.end(), e.begin(), e.end());
  return embedder_.char_features(tape, ids);
}

ReaderModel::Extraction ReaderModel::extract(Tape& tape, const CharFeatures& chars, const Batch& batch,
                                             const ForwardMode& mode) const {
  Extraction x;
  auto drop_states = [&mode](Encoding e) {
    e.states = mode.drop(e.states);
    return e;
  };
  x.passage = drop_states(extract_passage_.encode(embedder_.embed(tape, chars, batch.passage, mode), batch.passage.mask));
  x.question = drop_states(question_.encode(embedder_.embed(tape, chars, batch.question, mode), batch.question.mask));
  x.question_vector = extractor_.pool_question(x.question);
  x.scores = extractor_.score(x.passage, x.question_vector);
  return x;
}

ReaderModel::Synthesis ReaderModel::prepare_synthesis(Tape& tape, const CharFeatures& chars, const Batch& batch,
                                                      std::span<const EvidenceSpan> spans,
                                                      const ForwardMode& mode) const {
  std::vector<EvidenceFeatures> features;
  features.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    features.push_back(EvidenceFeatures::from_span(batch.passage.lengths[b], spans[b].start, spans[b].end));
  }
  Synthesis s;
  s.passage = encode_passage_with_features(synth_passage_, embedder_.embed(tape, chars, batch.passage, mode),
                                           batch.passage.mask, features);
  s.question = synth_question_.encode(embedder_.embed(tape, chars, batch.question, mode), batch.question.mask);
  s.passage.states = mode.drop(s.passage.states);
  s.question.states = mode.drop(s.question.states);
  s.memory = decoder_.memory(s.passage, s.question);
  std::vector<std::size_t> bos(batch.size(), Vocabulary::kBos);
  s.start = decoder_.initial_state(masked_time_mean(s.question.states, s.question.mask),
                                   masked_time_mean(s.passage.states, s.passage.mask),
                                   embedder_.word_vectors(tape, bos));
  return s;
}

Var ReaderModel::synthesis_loss(Tape& tape, const Synthesis& synthesis, std::span<const TokenIds> targets) const {
  const std::size_t B = synthesis.memory.batch;
  if (targets.size() != B) throw ShapeError("one decoder target per instance is required");
  std::size_t steps = 0;
  for (const auto& t : targets) {
    if (t.empty()) throw Error("empty decoder target");
    steps = std::max(steps, t.size());
  }
  DecoderState state = synthesis.start;
  Var total;
  for (std::size_t s = 0; s < steps; ++s) {
    DecoderStep step = decoder_.step(state, synthesis.memory);
    std::vector<std::size_t> gold(B, Vocabulary::kPad);
    std::vector<double> w(B, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      if (s < targets[b].size()) {
        gold[b] = targets[b][s];
        w[b] = 1.0 / (static_cast<double>(targets[b].size()) * static_cast<double>(B));
      }
    }
    Var l = cross_entropy(step.logits, gold, w);
    total = total.valid() ? add(total, l) : l;
    state = step.next;
    if (s + 1 < steps) state.prev_word = embedder_.word_vectors(tape, gold);
  }
  return total;
}

std::vector<GeneratedAnswer> ReaderModel::generate(Tape& tape, const Synthesis& synthesis) const {
  const std::size_t B = synthesis.memory.batch;
  std::vector<GeneratedAnswer> out(B);
  std::vector<bool> done(B, false);
  DecoderState state = synthesis.start;
  for (std::size_t s = 0; s < config_.max_answer; ++s) {
    DecoderStep step = decoder_.step(state, synthesis.memory);
    const Tensor& logits = step.logits.value();
    std::vector<std::size_t> emitted(B, Vocabulary::kEos);
    bool all_done = true;
    for (std::size_t b = 0; b < B; ++b) {
      if (done[b]) continue;
      auto row = logits.row(b);
      const std::size_t best = select_option(row);
      const double mx = row[best];
      double z = 0.0;
      for (double v : row) z += std::exp(v - mx);
      out[b].raw.push_back(best);
      out[b].log_probs.push_back(-std::log(z));
      emitted[b] = best;
      if (best == Vocabulary::kEos) {
        done[b] = true;
      } else {
        all_done = false;
      }
    }
    if (all_done) break;
    state = step.next;
    state.prev_word = embedder_.word_vectors(tape, emitted);
  }
  return out;
}

Var ReaderModel::stage_one_loss(Tape& tape, const Batch& batch, std::span<const std::optional<EvidenceSpan>> oracle,
                                const ForwardMode& mode, double span_weight) const {
  const std::size_t B = batch.size();
  if (oracle.size() != B) throw ShapeError("one oracle span slot per instance is required");
  CharFeatures chars = char_features(tape, batch);
  Extraction x = extract(tape, chars, batch, mode);

  std::vector<EvidenceSpan> targets(B);
  std::vector<double> weights(B, 0.0);
  bool any_missing = false;
  for (std::size_t b = 0; b < B; ++b) {
    if (oracle[b]) {
      targets[b] = *oracle[b];
      weights[b] = span_weight / static_cast<double>(B);
    } else {
      any_missing = true;
    }
  }
  if (any_missing) {
    auto predicted = extractor_.predict(x.scores, config_.max_span);
    for (std::size_t b = 0; b < B; ++b) {
      if (!oracle[b]) targets[b] = predicted[b];
    }
  }
  std::vector<TokenIds> answer_targets;
  for (std::size_t b = 0; b < B; ++b) {
    TokenIds option;
    for (std::size_t t = 0; t < batch.options.lengths[batch.gold[b] * B + b]; ++t) {
      option.push_back(batch.options.id(batch.gold[b] * B + b, t));
    }
    answer_targets.push_back(answer_target(option));
  }
  Synthesis s = prepare_synthesis(tape, chars, batch, targets, mode);
  Var loss = synthesis_loss(tape, s, answer_targets);
  if (span_weight > 0.0 && std::any_of(weights.begin(), weights.end(), [](double w) { return w > 0; })) {
    loss = add(loss, span_loss(x.scores, targets, weights));
  }
  return loss;
}

Var ReaderModel::encode_answers(Tape& tape, const CharFeatures& chars, std::span<const TokenIds> answers,
                                const ForwardMode& mode) const {
  std::vector<TokenIds> seqs;
  seqs.reserve(answers.size());
  for (const auto& a : answers) seqs.push_back(a.empty() ? TokenIds{Vocabulary::kEos} : a);
  SequenceBatch batch = pad_sequences(seqs);
  Encoding e = option_encoder_.encode(embedder_.embed(tape, chars, batch, mode), batch.mask);
  return config_.option_pooling == OptionPooling::kMean ? masked_time_mean(e.states, e.mask) : e.final_states();
}

Var ReaderModel::encode_options(Tape& tape, const CharFeatures& chars, const Batch& batch,
                                const ForwardMode& mode) const {
  Encoding e = option_encoder_.encode(embedder_.embed(tape, chars, batch.options, mode), batch.options.mask);
  return config_.option_pooling == OptionPooling::kMean ? masked_time_mean(e.states, e.mask) : e.final_states();
}

Var ReaderModel::selection_scores(Tape& tape, const Batch& batch, std::span<const TokenIds> answers,
                                  const ForwardMode& mode) const {
  if (answers.size() != batch.size()) throw ShapeError("one generated answer per instance is required");
  CharFeatures chars = char_features(tape, batch, answers);
  return matcher_.scores(encode_answers(tape, chars, answers, mode), encode_options(tape, chars, batch, mode));
}

Var ReaderModel::stage_two_loss(Tape& tape, const Batch& batch, std::span<const TokenIds> answers,
                                const ForwardMode& mode) const {
  return selection_loss(selection_scores(tape, batch, answers, mode), batch.gold);
}

std::vector<GeneratedAnswer> ReaderModel::generate_answers(const Batch& batch, std::vector<EvidenceSpan>* spans) const {
  Tape tape;
  const ForwardMode eval = ForwardMode::eval();
  CharFeatures chars = char_features(tape, batch);
  Extraction x = extract(tape, chars, batch, eval);
  std::vector<EvidenceSpan> predicted = extractor_.predict(x.scores, config_.max_span);
  Synthesis s = prepare_synthesis(tape, chars, batch, predicted, eval);
  auto answers = generate(tape, s);
  if (spans) *spans = std::move(predicted);
  return answers;
}

Prediction ReaderModel::predict(const Batch& batch) const {
  Prediction p;
  p.answers = generate_answers(batch, &p.spans);
  std::vector<TokenIds> surfaces;
  for (const auto& a : p.answers) surfaces.push_back(a.surface());
  Tape tape;
  Var scores = selection_scores(tape, batch, surfaces, ForwardMode::eval());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::array<double, kNumOptions> row{};
    for (std::size_t i = 0; i < kNumOptions; ++i) row[i] = scores.value().at(b, i);
    p.scores.push_back(row);
    p.choices.push_back(select_option(row));
  }
  return p;
}

}  // namespace mcrc
