#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mcrc/autodiff.hpp"
#include "mcrc/encoders.hpp"

namespace mcrc {

inline constexpr std::size_t kDefaultMaxSpan = 30;

struct EvidenceSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  /// log p_start(start) + log p_end(end) for predicted spans; unigram F1 for
  /// oracle spans.
  double score = 0.0;

  std::size_t length() const noexcept { return end - start + 1; }
  bool operator==(const EvidenceSpan& o) const { return start == o.start && end == o.end; }
};

/// Start/end distributions of one batch, [B x T] each, zero on padding.
struct SpanScores {
  Var start_logits;
  Var end_logits;
  Var start_probs;
  Var end_probs;
  Tensor mask;
};

/// Feasible argmax of p_start(s) * p_end(e) over s <= e < s + max_len,
/// e < length. Ties go to the smaller start, then the smaller end.
EvidenceSpan best_span(std::span<const double> start_probs, std::span<const double> end_probs,
                       std::size_t length, std::size_t max_len = kDefaultMaxSpan);

/// Distant-supervision target: the span of at most `max_len` tokens with the
/// highest unigram F1 against `answer`. Ties go to the shorter span, then the
/// earlier one. Returns nullopt when no span overlaps the answer.
template <typename Token>
std::optional<EvidenceSpan> oracle_span(std::span<const Token> passage, std::span<const Token> answer,
                                        std::size_t max_len = kDefaultMaxSpan) {
  if (passage.empty() || answer.empty()) return std::nullopt;
  std::map<Token, long> wanted;
  for (const Token& t : answer) ++wanted[t];
  const long answer_len = static_cast<long>(answer.size());

  // F1 = 2 * common / (span_len + answer_len); compared as exact fractions.
  long best_common = 0, best_denom = 1;
  std::optional<EvidenceSpan> best;
  for (std::size_t s = 0; s < passage.size(); ++s) {
    std::map<Token, long> used;
    long common = 0;
    for (std::size_t e = s; e < passage.size() && e - s < max_len; ++e) {
      auto it = wanted.find(passage[e]);
      if (it != wanted.end() && used[passage[e]]++ < it->second) ++common;
      if (common == 0) continue;
      const long denom = static_cast<long>(e - s + 1) + answer_len;
      const long lhs = common * best_denom, rhs = best_common * denom;
      const bool better = !best || lhs > rhs || (lhs == rhs && e - s + 1 < best->length());
      if (better) {
        best = EvidenceSpan{s, e, 2.0 * static_cast<double>(common) / static_cast<double>(denom)};
        best_common = common;
        best_denom = denom;
      }
    }
  }
  return best;
}

/// Question-conditioned span pointer over passage encodings.
///
///   question vector q = sum_j softmax_j(u^q_j . w) u^q_j
///   start_j = v_s . tanh(u^p_j A_s + q B_s + b_s)
///   summary = sum_j p_start(j) u^p_j
///   end_j   = v_e . tanh(u^p_j A_e + q B_e + summary C_e + b_e)
class EvidenceExtractor {
 public:
  EvidenceExtractor() = default;
  static EvidenceExtractor create(ParameterSet& params, const std::string& prefix, std::size_t encoding_dim,
                                  std::size_t attention_dim, std::mt19937_64& rng);
  static EvidenceExtractor bind(ParameterSet& params, const std::string& prefix);

  /// Attention pooling with a learned query over real positions, [B x 2H].
  Var pool_question(const Encoding& question) const;
  /// Pooling weights alone, [B x T].
  Var question_weights(const Encoding& question) const;

  SpanScores score(const Encoding& passage, Var question_vector) const;

  /// Reads the predicted span of every passage off `scores`.
  std::vector<EvidenceSpan> predict(const SpanScores& scores, std::size_t max_len) const;

 private:
  Parameter* query_ = nullptr;
  Parameter* start_passage_ = nullptr;
  Parameter* start_question_ = nullptr;
  Parameter* start_bias_ = nullptr;
  Parameter* start_out_ = nullptr;
  Parameter* end_passage_ = nullptr;
  Parameter* end_question_ = nullptr;
  Parameter* end_summary_ = nullptr;
  Parameter* end_bias_ = nullptr;
  Parameter* end_out_ = nullptr;
};

/// Sum over instances of weight_b * (-log p_start(s_b) - log p_end(e_b)).
/// Instances without a target should carry weight 0.
Var span_loss(const SpanScores& scores, std::span<const EvidenceSpan> targets, std::span<const double> weights);

}  // namespace mcrc
