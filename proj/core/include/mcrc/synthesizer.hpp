#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mcrc/autodiff.hpp"
#include "mcrc/encoders.hpp"

namespace mcrc {

inline constexpr std::size_t kDefaultMaxAnswer = 30;

/// Attention memory of the decoder: passage states followed by question
/// states, stacked along time.
struct DecoderMemory {
  Var states;     // [(Tp+Tq)*B x 2H]
  Var keys;       // states projected into attention space
  Tensor mask;    // [B x (Tp+Tq)]
  std::size_t steps = 0;
  std::size_t batch = 0;
};

struct DecoderState {
  Var hidden;        // [B x H_dec]
  Var prev_word;     // [B x word dim]
  Var prev_context;  // [B x 2H]; zero at step 0
};

struct DecoderStep {
  Var logits;     // [B x |V|]
  Var weights;    // attention weights, [B x (Tp+Tq)]
  DecoderState next;  // prev_word is left for the caller to fill
};

/// Token sequence produced by greedy decoding.
struct GeneratedAnswer {
  /// Emitted ids including the terminating EOS when one was produced.
  TokenIds raw;
  std::vector<double> log_probs;  // one per emitted id

  /// Emitted ids without BOS/EOS.
  TokenIds surface() const;
};

/// GRU decoder with additive attention over a DecoderMemory.
///
///   h_t   = GRU([w_{t-1} ; c_{t-1}], h_{t-1})
///   e_tj  = v . tanh(m_j K + h_t Q + b)
///   c_t   = sum_j softmax_j(e_tj) m_j
///   logit = [h_t ; c_t] O + o
/// h_0 = tanh([pooled question ; pooled passage] I + i), w_0 = BOS, c_0 = 0.
class AnswerDecoder {
 public:
  AnswerDecoder() = default;
  static AnswerDecoder create(ParameterSet& params, const std::string& prefix, std::size_t word_dim,
                              std::size_t memory_dim, std::size_t hidden, std::size_t attention_dim,
                              std::size_t vocab_size, std::mt19937_64& rng);
  static AnswerDecoder bind(ParameterSet& params, const std::string& prefix);

  DecoderMemory memory(const Encoding& passage, const Encoding& question) const;
  DecoderState initial_state(Var pooled_question, Var pooled_passage, Var bos_vectors) const;

  Var attention_weights(Var hidden, const DecoderMemory& memory) const;
  /// c_t for a hidden state, [B x 2H].
  Var attention_context(Var hidden, const DecoderMemory& memory) const;

  DecoderStep step(const DecoderState& state, const DecoderMemory& memory) const;

  std::size_t hidden() const noexcept { return cell_.hidden; }
  std::size_t memory_dim() const noexcept { return memory_keys_->value.rows(); }
  std::size_t vocab_size() const noexcept { return output_->value.cols(); }

 private:
  GruWeights cell_;
  Parameter* memory_keys_ = nullptr;
  Parameter* state_query_ = nullptr;
  Parameter* attention_bias_ = nullptr;
  Parameter* attention_out_ = nullptr;
  Parameter* init_weight_ = nullptr;
  Parameter* init_bias_ = nullptr;
  Parameter* output_ = nullptr;
  Parameter* output_bias_ = nullptr;
};

}  // namespace mcrc
