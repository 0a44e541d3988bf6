#include "mcrc/selector.hpp"

#include <vector>

#include "mcrc/error.hpp"
#include "mcrc/ops.hpp"

namespace mcrc {

BilinearMatcher BilinearMatcher::create(ParameterSet& params, const std::string& name, std::size_t dim) {
  BilinearMatcher m;
  m.weight_ = &params.add(name, Tensor({dim, dim}));
  return m;
}

BilinearMatcher BilinearMatcher::bind(ParameterSet& params, const std::string& name) {
  BilinearMatcher m;
  m.weight_ = &params.at(name);
  return m;
}

Var BilinearMatcher::scores(Var answers, Var options) const {
  Tape& t = answers.tape();
  const std::size_t B = answers.rows();
  if (answers.cols() != dim() || options.cols() != dim()) {
    throw ShapeError("bilinear matcher expects " + std::to_string(dim()) + "-dimensional vectors");
  }
  if (options.rows() != kNumOptions * B) throw ShapeError("need exactly 4 option vectors per answer");
  Var projected = matmul(answers, t.parameter(*weight_));
  std::vector<Var> columns;
  for (std::size_t i = 0; i < kNumOptions; ++i) {
    columns.push_back(sum_cols(mul(projected, slice_rows(options, i * B, B))));
  }
  return concat(columns);
}

Var option_probabilities(Var scores) { return softmax(scores); }

std::size_t select_option(std::span<const double> scores) {
  if (scores.empty()) throw ShapeError("select_option needs at least one score");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

Var selection_loss(Var scores, std::span<const std::size_t> gold) {
  const std::size_t B = scores.rows();
  if (gold.size() != B) throw ShapeError("selection_loss needs one gold index per row");
  for (std::size_t g : gold) {
    if (g >= scores.cols()) throw Error("gold index " + std::to_string(g) + " out of range");
  }
  std::vector<double> w(B, 1.0 / static_cast<double>(B));
  return cross_entropy(scores, gold, w);
}

}  // namespace mcrc
