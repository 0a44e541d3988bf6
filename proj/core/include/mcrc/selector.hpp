#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "mcrc/autodiff.hpp"
#include "mcrc/corpus.hpp"

namespace mcrc {

/// score(i) = a^T W z_i for a generated-answer vector a and option vectors z_i.
class BilinearMatcher {
 public:
  BilinearMatcher() = default;
  /// W starts at zero, so the first selection loss is ln 4.
  static BilinearMatcher create(ParameterSet& params, const std::string& name, std::size_t dim);
  static BilinearMatcher bind(ParameterSet& params, const std::string& name);

  /// answers is [B x d]; options is [kNumOptions*B x d] with option i of
  /// instance b in row i*B + b. Returns raw scores, [B x kNumOptions].
  Var scores(Var answers, Var options) const;

  std::size_t dim() const noexcept { return weight_->value.rows(); }
  Parameter& weight() noexcept { return *weight_; }

 private:
  Parameter* weight_ = nullptr;
};

/// Softmax-normalised option scores; rows sum to one.
Var option_probabilities(Var scores);

/// Argmax with ties to the lowest index.
std::size_t select_option(std::span<const double> scores);

/// Sum over the batch of weight * -log p(gold); weights default to 1/B.
Var selection_loss(Var scores, std::span<const std::size_t> gold);

}  // namespace mcrc
