#include "mcrc/encoders.hpp"

#include <algorithm>

#include "mcrc/error.hpp"
#include "mcrc/ops.hpp"

namespace mcrc {

Var ForwardMode::drop(Var v) const {
  if (!training || dropout <= 0.0) return v;
  if (!rng) throw Error("training forward pass without a random generator");
  return mcrc::dropout(v, dropout, *rng, true);
}

Var Encoding::final_states() const { return concat({final_forward, final_backward}); }

BiGruEncoder BiGruEncoder::create(ParameterSet& params, const std::string& prefix, std::size_t input_dim,
                                  std::size_t hidden, std::mt19937_64& rng) {
  BiGruEncoder e;
  e.forward_ = GruWeights::create(params, prefix + ".fwd", input_dim, hidden, rng);
  e.backward_ = GruWeights::create(params, prefix + ".bwd", input_dim, hidden, rng);
  return e;
}

BiGruEncoder BiGruEncoder::bind(ParameterSet& params, const std::string& prefix) {
  BiGruEncoder e;
  e.forward_ = GruWeights::bind(params, prefix + ".fwd");
  e.backward_ = GruWeights::bind(params, prefix + ".bwd");
  return e;
}

Encoding BiGruEncoder::encode(Var inputs, const Tensor& mask) const {
  Tape& tape = inputs.tape();
  const std::size_t B = mask.rows(), T = mask.cols(), H = hidden();
  if (inputs.rows() != T * B) {
    throw ShapeError("encoder input has " + std::to_string(inputs.rows()) + " rows, mask implies " +
                     std::to_string(T * B));
  }
  Var proj_f = gru_input_projection(inputs, forward_);
  Var proj_b = gru_input_projection(inputs, backward_);

  std::vector<std::vector<double>> keep(T, std::vector<double>(B));
  std::vector<bool> full(T, true);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      keep[t][b] = mask.at(b, t);
      if (keep[t][b] == 0.0) full[t] = false;
    }
  }
  auto advance = [&](Var proj, std::size_t t, Var h, const GruWeights& w) {
    Var next = gru_step(slice_rows(proj, t * B, B), h, w);
    return full[t] ? next : blend_rows(keep[t], next, h);
  };

  std::vector<Var> fwd(T), bwd(T);
  Var h = tape.constant(Tensor({B, H}));
  for (std::size_t t = 0; t < T; ++t) fwd[t] = h = advance(proj_f, t, h, forward_);
  Var final_forward = h;
  h = tape.constant(Tensor({B, H}));
  for (std::size_t t = T; t-- > 0;) bwd[t] = h = advance(proj_b, t, h, backward_);

  Encoding out;
  out.states = concat({stack_rows(fwd), stack_rows(bwd)});
  out.final_forward = final_forward;
  out.final_backward = h;
  out.mask = mask;
  out.steps = T;
  out.batch = B;
  out.hidden = H;
  return out;
}

CharEncoder CharEncoder::create(ParameterSet& params, const std::string& prefix, std::size_t num_chars,
                                std::size_t char_dim, std::size_t hidden, std::mt19937_64& rng) {
  CharEncoder c;
  c.table_ = &params.add(prefix + ".table", uniform_tensor(num_chars, char_dim, 0.1, rng));
  c.gru_ = BiGruEncoder::create(params, prefix + ".gru", char_dim, hidden, rng);
  return c;
}

CharEncoder CharEncoder::bind(ParameterSet& params, const std::string& prefix) {
  CharEncoder c;
  c.table_ = &params.at(prefix + ".table");
  c.gru_ = BiGruEncoder::bind(params, prefix + ".gru");
  return c;
}

Var CharEncoder::encode(Tape& tape, std::span<const TokenIds> words) const {
  for (const auto& w : words) {
    if (w.empty()) throw ShapeError("character encoder got an empty token");
  }
  SequenceBatch chars = pad_sequences(words);
  Var embedded = gather_rows(tape.parameter(*table_), chars.ids);
  return gru_.encode(embedded, chars.mask).final_states();
}

WordEmbedder::WordEmbedder(Parameter* words, CharEncoder chars, const Vocabulary& vocab,
                           const CharVocabulary& char_vocab)
    : words_(words), chars_(std::move(chars)) {
  if (words_->value.rows() != vocab.size()) {
    throw ShapeError("embedding table has " + std::to_string(words_->value.rows()) + " rows for a vocabulary of " +
                     std::to_string(vocab.size()));
  }
  spelling_.reserve(vocab.size());
  for (const auto& tok : vocab.tokens()) spelling_.push_back(char_vocab.encode(tok));
}

CharFeatures WordEmbedder::char_features(Tape& tape, std::span<const std::size_t> ids) const {
  std::vector<std::size_t> unique(ids.begin(), ids.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  CharFeatures out;
  std::vector<TokenIds> words;
  words.reserve(unique.size());
  for (std::size_t i = 0; i < unique.size(); ++i) {
    out.row_of.emplace(unique[i], i);
    words.push_back(spelling_.at(unique[i]));
  }
  out.rows = chars_.encode(tape, words);
  return out;
}

Var WordEmbedder::embed(Tape& tape, const CharFeatures& chars, const SequenceBatch& seq,
                        const ForwardMode& mode) const {
  std::vector<std::size_t> char_rows(seq.ids.size());
  std::vector<double> real(seq.ids.size());
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    auto it = chars.row_of.find(seq.ids[i]);
    if (it == chars.row_of.end()) throw Error("word id missing from character features");
    char_rows[i] = it->second;
    real[i] = seq.mask.at(i % seq.batch, i / seq.batch);
  }
  Var words = gather_rows(tape.parameter(*words_), seq.ids);
  Var spelled = gather_rows(chars.rows, char_rows);
  return scale_rows(mode.drop(concat({words, spelled})), real);
}

Var WordEmbedder::word_vectors(Tape& tape, std::span<const std::size_t> ids) const {
  return gather_rows(tape.parameter(*words_), ids);
}

EvidenceFeatures EvidenceFeatures::from_span(std::size_t length, std::size_t start, std::size_t end) {
  if (start > end || end >= length) {
    throw ShapeError("evidence span (" + std::to_string(start) + ", " + std::to_string(end) +
                     ") does not fit a passage of length " + std::to_string(length));
  }
  EvidenceFeatures f;
  f.start.assign(length, 0.0);
  f.end.assign(length, 0.0);
  f.start[start] = 1.0;
  f.end[end] = 1.0;
  return f;
}

Tensor evidence_feature_matrix(std::span<const EvidenceFeatures> features, std::size_t steps) {
  const std::size_t B = features.size();
  Tensor out({steps * B, 2});
  for (std::size_t b = 0; b < B; ++b) {
    const auto& f = features[b];
    if (f.start.size() != f.end.size() || f.start.size() > steps) {
      throw ShapeError("evidence features do not match the passage length");
    }
    for (std::size_t t = 0; t < f.start.size(); ++t) {
      out.at(t * B + b, 0) = f.start[t];
      out.at(t * B + b, 1) = f.end[t];
    }
  }
  return out;
}

Encoding encode_passage_with_features(const BiGruEncoder& encoder, Var embedded, const Tensor& mask,
                                      std::span<const EvidenceFeatures> features) {
  if (features.size() != mask.rows()) throw ShapeError("one evidence feature set per passage is required");
  for (std::size_t b = 0; b < features.size(); ++b) {
    std::size_t len = 0;
    for (std::size_t t = 0; t < mask.cols(); ++t) len += mask.at(b, t) != 0.0;
    if (features[b].start.size() != len) {
      throw ShapeError("evidence features of passage " + std::to_string(b) + " have length " +
                       std::to_string(features[b].start.size()) + ", passage has " + std::to_string(len));
    }
  }
  Tape& tape = embedded.tape();
  Var channels = tape.constant(evidence_feature_matrix(features, mask.cols()));
  return encoder.encode(concat({embedded, channels}), mask);
}

}  // namespace mcrc
