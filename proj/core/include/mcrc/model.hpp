#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcrc/autodiff.hpp"
#include "mcrc/corpus.hpp"
#include "mcrc/encoders.hpp"
#include "mcrc/extractor.hpp"
#include "mcrc/selector.hpp"
#include "mcrc/synthesizer.hpp"

namespace mcrc {

enum class OptionPooling { kFinalState, kMean };

struct ModelConfig {
  std::size_t embed_dim = 300;
  std::size_t char_dim = 16;
  std::size_t char_hidden = 25;
  std::size_t hidden = 128;
  std::size_t max_span = kDefaultMaxSpan;
  std::size_t max_answer = kDefaultMaxAnswer;
  OptionPooling option_pooling = OptionPooling::kFinalState;
  bool finetune_embeddings = false;
};

// Parameter groups, by name prefix.
inline constexpr const char* kSelectionPrefix = "select.";
inline constexpr const char* kOptionEncoderPrefix = "select.options";
inline constexpr const char* kQuestionEncoderPrefix = "extract.question";

/// Everything the pipeline produces for one batch at inference time.
struct Prediction {
  std::vector<EvidenceSpan> spans;
  std::vector<GeneratedAnswer> answers;
  std::vector<std::array<double, kNumOptions>> scores;
  std::vector<std::size_t> choices;
};

/// The generate-then-match reader.
///
/// Stage one (extraction + synthesis): a featureless passage BiGRU and the
/// shared question encoder feed the span extractor; a second passage BiGRU
/// with evidence channels and a question BiGRU form the decoder memory.
/// Stage two (selection): answers and options are encoded by a BiGRU that
/// starts as a copy of the question encoder, and scored bilinearly.
class ReaderModel {
 public:
  ReaderModel(const ModelConfig& config, Vocabulary vocab, CharVocabulary chars,
              const EmbeddingTable* embeddings, std::uint64_t seed);

  ReaderModel(const ReaderModel&) = delete;
  ReaderModel& operator=(const ReaderModel&) = delete;

  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  const ModelConfig& config() const noexcept { return config_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  const CharVocabulary& char_vocabulary() const noexcept { return chars_; }

  /// Stage-one parameters (everything outside the selection group).
  std::vector<Parameter*> synthesis_parameters();
  std::vector<Parameter*> selection_parameters();
  std::vector<const Parameter*> synthesis_parameters() const;

  const WordEmbedder& embedder() const noexcept { return embedder_; }
  const BiGruEncoder& extraction_passage_encoder() const noexcept { return extract_passage_; }
  const BiGruEncoder& question_encoder() const noexcept { return question_; }
  const BiGruEncoder& synthesis_passage_encoder() const noexcept { return synth_passage_; }
  const BiGruEncoder& synthesis_question_encoder() const noexcept { return synth_question_; }
  const BiGruEncoder& option_encoder() const noexcept { return option_encoder_; }
  const EvidenceExtractor& extractor() const noexcept { return extractor_; }
  const AnswerDecoder& decoder() const noexcept { return decoder_; }
  const BilinearMatcher& matcher() const noexcept { return matcher_; }

  /// Character features for every id the batch (and `extra`) can touch.
  CharFeatures char_features(Tape& tape, const Batch& batch, std::span<const TokenIds> extra = {}) const;

  struct Extraction {
    Encoding passage;
    Encoding question;
    Var question_vector;
    SpanScores scores;
  };
  Extraction extract(Tape& tape, const CharFeatures& chars, const Batch& batch, const ForwardMode& mode) const;

  struct Synthesis {
    Encoding passage;
    Encoding question;
    DecoderMemory memory;
    DecoderState start;
  };
  Synthesis prepare_synthesis(Tape& tape, const CharFeatures& chars, const Batch& batch,
                              std::span<const EvidenceSpan> spans, const ForwardMode& mode) const;

  /// Teacher-forced mean per-token cross-entropy of `targets` (each ending
  /// in EOS), averaged over the batch.
  Var synthesis_loss(Tape& tape, const Synthesis& synthesis, std::span<const TokenIds> targets) const;

  /// Greedy decoding until EOS or `max_answer` tokens.
  std::vector<GeneratedAnswer> generate(Tape& tape, const Synthesis& synthesis) const;

  /// Joint stage-one objective: span_weight * span loss + synthesis loss.
  /// Instances without an oracle span contribute only synthesis loss and
  /// are encoded with their predicted span.
  Var stage_one_loss(Tape& tape, const Batch& batch, std::span<const std::optional<EvidenceSpan>> oracle,
                     const ForwardMode& mode, double span_weight = 1.0) const;

  /// Answer vectors a_t from the option encoder, [B x 2H]. Empty answers are
  /// encoded as the EOS token alone.
  Var encode_answers(Tape& tape, const CharFeatures& chars, std::span<const TokenIds> answers,
                     const ForwardMode& mode) const;
  /// Option vectors z_i, [4B x 2H].
  Var encode_options(Tape& tape, const CharFeatures& chars, const Batch& batch, const ForwardMode& mode) const;

  /// Raw bilinear scores from already generated answer surfaces, [B x 4].
  Var selection_scores(Tape& tape, const Batch& batch, std::span<const TokenIds> answers,
                       const ForwardMode& mode) const;
  Var stage_two_loss(Tape& tape, const Batch& batch, std::span<const TokenIds> answers,
                     const ForwardMode& mode) const;

  /// Stage-one half of inference: predicted span, then greedy generation.
  std::vector<GeneratedAnswer> generate_answers(const Batch& batch,
                                                std::vector<EvidenceSpan>* spans = nullptr) const;
  /// Full pipeline in eval mode.
  Prediction predict(const Batch& batch) const;

  /// Copies the question encoder into the option encoder.
  void reset_option_encoder();

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  CharVocabulary chars_;
  ParameterSet params_;

  WordEmbedder embedder_;
  BiGruEncoder extract_passage_;
  BiGruEncoder question_;
  EvidenceExtractor extractor_;
  BiGruEncoder synth_passage_;
  BiGruEncoder synth_question_;
  AnswerDecoder decoder_;
  BiGruEncoder option_encoder_;
  BilinearMatcher matcher_;
};

/// End-of-sequence terminated decoder target for an option.
TokenIds answer_target(const TokenIds& option);

}  // namespace mcrc
