#include "mcrc/extractor.hpp"

#include <cmath>

#include "mcrc/error.hpp"
#include "mcrc/ops.hpp"

namespace mcrc {

EvidenceSpan best_span(std::span<const double> start_probs, std::span<const double> end_probs,
                       std::size_t length, std::size_t max_len) {
  if (length == 0) throw ShapeError("cannot pick a span in an empty passage");
  if (start_probs.size() < length || end_probs.size() < length) {
    throw ShapeError("span distributions are shorter than the passage");
  }
  if (max_len == 0) throw ConfigError("maximum span length must be positive");
  EvidenceSpan best;
  double best_p = -1.0;
  for (std::size_t s = 0; s < length; ++s) {
    for (std::size_t e = s; e < length && e - s < max_len; ++e) {
      const double p = start_probs[s] * end_probs[e];
      if (p > best_p) {
        best_p = p;
        best.start = s;
        best.end = e;
      }
    }
  }
  best.score = std::log(start_probs[best.start]) + std::log(end_probs[best.end]);
  return best;
}

EvidenceExtractor EvidenceExtractor::create(ParameterSet& params, const std::string& prefix,
                                            std::size_t encoding_dim, std::size_t attention_dim,
                                            std::mt19937_64& rng) {
  EvidenceExtractor x;
  x.query_ = &params.add(prefix + ".pool_query", xavier_tensor(encoding_dim, 1, rng));
  x.start_passage_ = &params.add(prefix + ".start_passage", xavier_tensor(encoding_dim, attention_dim, rng));
  x.start_question_ = &params.add(prefix + ".start_question", xavier_tensor(encoding_dim, attention_dim, rng));
  x.start_bias_ = &params.add(prefix + ".start_bias", Tensor({1, attention_dim}));
  x.start_out_ = &params.add(prefix + ".start_out", xavier_tensor(attention_dim, 1, rng));
  x.end_passage_ = &params.add(prefix + ".end_passage", xavier_tensor(encoding_dim, attention_dim, rng));
  x.end_question_ = &params.add(prefix + ".end_question", xavier_tensor(encoding_dim, attention_dim, rng));
  x.end_summary_ = &params.add(prefix + ".end_summary", xavier_tensor(encoding_dim, attention_dim, rng));
  x.end_bias_ = &params.add(prefix + ".end_bias", Tensor({1, attention_dim}));
  x.end_out_ = &params.add(prefix + ".end_out", xavier_tensor(attention_dim, 1, rng));
  return x;
}

EvidenceExtractor EvidenceExtractor::bind(ParameterSet& params, const std::string& prefix) {
  EvidenceExtractor x;
  x.query_ = &params.at(prefix + ".pool_query");
  x.start_passage_ = &params.at(prefix + ".start_passage");
  x.start_question_ = &params.at(prefix + ".start_question");
  x.start_bias_ = &params.at(prefix + ".start_bias");
  x.start_out_ = &params.at(prefix + ".start_out");
  x.end_passage_ = &params.at(prefix + ".end_passage");
  x.end_question_ = &params.at(prefix + ".end_question");
  x.end_summary_ = &params.at(prefix + ".end_summary");
  x.end_bias_ = &params.at(prefix + ".end_bias");
  x.end_out_ = &params.at(prefix + ".end_out");
  return x;
}

Var EvidenceExtractor::question_weights(const Encoding& question) const {
  Tape& t = question.states.tape();
  Var scores = matmul(question.states, t.parameter(*query_));
  return softmax(time_to_batch(scores, question.steps, question.batch), &question.mask);
}

Var EvidenceExtractor::pool_question(const Encoding& question) const {
  return weighted_time_sum(question_weights(question), question.states);
}

SpanScores EvidenceExtractor::score(const Encoding& passage, Var question_vector) const {
  Tape& t = passage.states.tape();
  const std::size_t T = passage.steps, B = passage.batch;
  if (question_vector.rows() != B) throw ShapeError("question vectors do not match the passage batch");

  auto attend = [&](Parameter* passage_w, Var conditioning, Parameter* out) {
    Var keys = matmul(passage.states, t.parameter(*passage_w));
    Var hidden = tanh(add(keys, tile_rows(conditioning, T)));
    return time_to_batch(matmul(hidden, t.parameter(*out)), T, B);
  };

  SpanScores s;
  s.mask = passage.mask;
  Var start_cond = add(matmul(question_vector, t.parameter(*start_question_)), t.parameter(*start_bias_));
  s.start_logits = attend(start_passage_, start_cond, start_out_);
  s.start_probs = softmax(s.start_logits, &s.mask);

  Var summary = weighted_time_sum(s.start_probs, passage.states);
  Var end_cond = add(add(matmul(question_vector, t.parameter(*end_question_)),
                         matmul(summary, t.parameter(*end_summary_))),
                     t.parameter(*end_bias_));
  s.end_logits = attend(end_passage_, end_cond, end_out_);
  s.end_probs = softmax(s.end_logits, &s.mask);
  return s;
}

std::vector<EvidenceSpan> EvidenceExtractor::predict(const SpanScores& scores, std::size_t max_len) const {
  const Tensor& ps = scores.start_probs.value();
  const Tensor& pe = scores.end_probs.value();
  std::vector<EvidenceSpan> out;
  for (std::size_t b = 0; b < ps.rows(); ++b) {
    std::size_t len = 0;
    for (std::size_t t = 0; t < ps.cols(); ++t) len += scores.mask.at(b, t) != 0.0;
    if (len == 0) throw ShapeError("passage " + std::to_string(b) + " is fully masked");
    out.push_back(best_span(ps.row(b), pe.row(b), len, max_len));
  }
  return out;
}

Var span_loss(const SpanScores& scores, std::span<const EvidenceSpan> targets, std::span<const double> weights) {
  const std::size_t B = scores.mask.rows();
  if (targets.size() != B || weights.size() != B) throw ShapeError("span_loss needs one target per passage");
  std::vector<std::size_t> starts(B), ends(B);
  for (std::size_t b = 0; b < B; ++b) {
    starts[b] = targets[b].start;
    ends[b] = targets[b].end;
    if (weights[b] != 0.0 && (targets[b].start > targets[b].end || targets[b].end >= scores.mask.cols() ||
                              scores.mask.at(b, targets[b].end) == 0.0)) {
      throw Error("span target (" + std::to_string(targets[b].start) + ", " + std::to_string(targets[b].end) +
                  ") out of range for passage " + std::to_string(b));
    }
  }
  return add(cross_entropy(scores.start_logits, starts, weights, &scores.mask),
             cross_entropy(scores.end_logits, ends, weights, &scores.mask));
}

}  // namespace mcrc
