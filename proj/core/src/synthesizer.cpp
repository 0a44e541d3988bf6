#include "mcrc/synthesizer.hpp"

#include "mcrc/corpus.hpp"
#include "mcrc/error.hpp"
#include "mcrc/ops.hpp"

namespace mcrc {

TokenIds GeneratedAnswer::surface() const {
  TokenIds out;
  for (std::size_t id : raw) {
    if (id == Vocabulary::kEos) break;
    if (id != Vocabulary::kBos && id != Vocabulary::kPad) out.push_back(id);
  }
  return out;
}

AnswerDecoder AnswerDecoder::create(ParameterSet& params, const std::string& prefix, std::size_t word_dim,
                                    std::size_t memory_dim, std::size_t hidden, std::size_t attention_dim,
                                    std::size_t vocab_size, std::mt19937_64& rng) {
  AnswerDecoder d;
  d.cell_ = GruWeights::create(params, prefix + ".cell", word_dim + memory_dim, hidden, rng);
  d.memory_keys_ = &params.add(prefix + ".memory_keys", xavier_tensor(memory_dim, attention_dim, rng));
  d.state_query_ = &params.add(prefix + ".state_query", xavier_tensor(hidden, attention_dim, rng));
  d.attention_bias_ = &params.add(prefix + ".attention_bias", Tensor({1, attention_dim}));
  d.attention_out_ = &params.add(prefix + ".attention_out", xavier_tensor(attention_dim, 1, rng));
  d.init_weight_ = &params.add(prefix + ".init", xavier_tensor(2 * memory_dim, hidden, rng));
  d.init_bias_ = &params.add(prefix + ".init_bias", Tensor({1, hidden}));
  d.output_ = &params.add(prefix + ".output", xavier_tensor(hidden + memory_dim, vocab_size, rng));
  d.output_bias_ = &params.add(prefix + ".output_bias", Tensor({1, vocab_size}));
  return d;
}

AnswerDecoder AnswerDecoder::bind(ParameterSet& params, const std::string& prefix) {
  AnswerDecoder d;
  d.cell_ = GruWeights::bind(params, prefix + ".cell");
  d.memory_keys_ = &params.at(prefix + ".memory_keys");
  d.state_query_ = &params.at(prefix + ".state_query");
  d.attention_bias_ = &params.at(prefix + ".attention_bias");
  d.attention_out_ = &params.at(prefix + ".attention_out");
  d.init_weight_ = &params.at(prefix + ".init");
  d.init_bias_ = &params.at(prefix + ".init_bias");
  d.output_ = &params.at(prefix + ".output");
  d.output_bias_ = &params.at(prefix + ".output_bias");
  return d;
}

DecoderMemory AnswerDecoder::memory(const Encoding& passage, const Encoding& question) const {
  if (passage.batch != question.batch) throw ShapeError("passage and question batches differ");
  Tape& t = passage.states.tape();
  const std::size_t B = passage.batch, Tp = passage.steps, Tq = question.steps;
  DecoderMemory m;
  m.states = stack_rows({passage.states, question.states});
  if (m.states.cols() != memory_dim()) throw ShapeError("decoder memory width does not match its weights");
  m.keys = matmul(m.states, t.parameter(*memory_keys_));
  m.mask = Tensor({B, Tp + Tq});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t s = 0; s < Tp; ++s) m.mask.at(b, s) = passage.mask.at(b, s);
    for (std::size_t s = 0; s < Tq; ++s) m.mask.at(b, Tp + s) = question.mask.at(b, s);
  }
  m.steps = Tp + Tq;
  m.batch = B;
  return m;
}

DecoderState AnswerDecoder::initial_state(Var pooled_question, Var pooled_passage, Var bos_vectors) const {
  Tape& t = pooled_question.tape();
  DecoderState s;
  s.hidden = tanh(add(matmul(concat({pooled_question, pooled_passage}), t.parameter(*init_weight_)),
                      t.parameter(*init_bias_)));
  s.prev_word = bos_vectors;
  s.prev_context = t.constant(Tensor({pooled_question.rows(), memory_dim()}));
  return s;
}

Var AnswerDecoder::attention_weights(Var hidden, const DecoderMemory& memory) const {
  if (memory.steps == 0) throw ShapeError("decoder attention over an empty memory");
  Tape& t = hidden.tape();
  Var query = add(matmul(hidden, t.parameter(*state_query_)), t.parameter(*attention_bias_));
  Var energy = matmul(tanh(add(memory.keys, tile_rows(query, memory.steps))), t.parameter(*attention_out_));
  return softmax(time_to_batch(energy, memory.steps, memory.batch), &memory.mask);
}

Var AnswerDecoder::attention_context(Var hidden, const DecoderMemory& memory) const {
  return weighted_time_sum(attention_weights(hidden, memory), memory.states);
}

DecoderStep AnswerDecoder::step(const DecoderState& state, const DecoderMemory& memory) const {
  Tape& t = state.hidden.tape();
  DecoderStep out;
  Var hidden = gru_cell(concat({state.prev_word, state.prev_context}), state.hidden, cell_);
  out.weights = attention_weights(hidden, memory);
  Var context = weighted_time_sum(out.weights, memory.states);
  out.logits = add(matmul(concat({hidden, context}), t.parameter(*output_)), t.parameter(*output_bias_));
  out.next.hidden = hidden;
  out.next.prev_context = context;
  return out;
}

}  // namespace mcrc
