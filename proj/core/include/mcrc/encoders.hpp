#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcrc/autodiff.hpp"
#include "mcrc/corpus.hpp"
#include "mcrc/gru.hpp"

namespace mcrc {

/// Dropout policy for one forward pass. Eval passes leave `rng` null.
struct ForwardMode {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  Var drop(Var v) const;
  static ForwardMode eval() { return {}; }
};

/// Per-position BiGRU outputs of a time-major padded batch.
struct Encoding {
  Var states;          // [T*B x 2H], forward half first
  Var final_forward;   // [B x H], state after the last real token
  Var final_backward;  // [B x H], state after the first real token
  Tensor mask;         // [B x T]
  std::size_t steps = 0;
  std::size_t batch = 0;
  std::size_t hidden = 0;

  /// [final forward ; final backward], [B x 2H].
  Var final_states() const;
};

class BiGruEncoder {
 public:
  BiGruEncoder() = default;
  static BiGruEncoder create(ParameterSet& params, const std::string& prefix, std::size_t input_dim,
                             std::size_t hidden, std::mt19937_64& rng);
  static BiGruEncoder bind(ParameterSet& params, const std::string& prefix);

  /// `inputs` is [T*B x in]. Steps whose mask entry is 0 leave the state of
  /// that sequence unchanged, so padding never leaks into real positions.
  Encoding encode(Var inputs, const Tensor& mask) const;

  std::size_t input_dim() const noexcept { return forward_.input_dim; }
  std::size_t hidden() const noexcept { return forward_.hidden; }
  const GruWeights& forward_weights() const noexcept { return forward_; }
  const GruWeights& backward_weights() const noexcept { return backward_; }

 private:
  GruWeights forward_;
  GruWeights backward_;
};

/// Character-level word features: final states of a BiGRU over the
/// embedded characters of each word.
class CharEncoder {
 public:
  CharEncoder() = default;
  static CharEncoder create(ParameterSet& params, const std::string& prefix, std::size_t num_chars,
                            std::size_t char_dim, std::size_t hidden, std::mt19937_64& rng);
  static CharEncoder bind(ParameterSet& params, const std::string& prefix);

  /// One [2 * hidden] row per word. Throws on an empty word.
  Var encode(Tape& tape, std::span<const TokenIds> words) const;
  std::size_t output_dim() const noexcept { return 2 * gru_.hidden(); }

 private:
  Parameter* table_ = nullptr;
  BiGruEncoder gru_;
};

/// Character features for the distinct words of one forward pass.
struct CharFeatures {
  Var rows;
  std::unordered_map<std::size_t, std::size_t> row_of;
};

/// Word vectors concatenated with character features.
class WordEmbedder {
 public:
  WordEmbedder() = default;
  WordEmbedder(Parameter* words, CharEncoder chars, const Vocabulary& vocab, const CharVocabulary& char_vocab);

  /// Runs the character encoder once over the distinct ids in `ids`.
  CharFeatures char_features(Tape& tape, std::span<const std::size_t> ids) const;

  /// [T*B x (word dim + char dim)]; padded positions are exactly zero.
  Var embed(Tape& tape, const CharFeatures& chars, const SequenceBatch& seq, const ForwardMode& mode) const;
  /// Plain word vectors, [n x word dim].
  Var word_vectors(Tape& tape, std::span<const std::size_t> ids) const;

  std::size_t word_dim() const noexcept { return words_->value.cols(); }
  std::size_t output_dim() const noexcept { return word_dim() + chars_.output_dim(); }
  const TokenIds& spelling(std::size_t id) const { return spelling_.at(id); }

 private:
  Parameter* words_ = nullptr;
  CharEncoder chars_;
  std::vector<TokenIds> spelling_;
};

/// Indicator channels marking an evidence span: exactly one start and one
/// end position, start <= end.
struct EvidenceFeatures {
  std::vector<double> start;
  std::vector<double> end;

  static EvidenceFeatures from_span(std::size_t length, std::size_t start, std::size_t end);
};

/// Time-major [T*B x 2] feature matrix for a padded batch.
Tensor evidence_feature_matrix(std::span<const EvidenceFeatures> features, std::size_t steps);

/// Passage input with the two evidence channels appended, fed to `encoder`.
Encoding encode_passage_with_features(const BiGruEncoder& encoder, Var embedded, const Tensor& mask,
                                      std::span<const EvidenceFeatures> features);

}  // namespace mcrc
