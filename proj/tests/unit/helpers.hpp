#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mcrc/autodiff.hpp"
#include "mcrc/corpus.hpp"
#include "mcrc/tensor.hpp"

namespace mcrc::testing {

inline Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double bound = 1.0) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t({rows, cols});
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Builds a one-question toy instance directly from text.
inline Instance make_instance(const std::string& passage, const std::string& question,
                              const std::array<std::string, kNumOptions>& options, std::size_t gold,
                              const std::string& id = "t") {
  Instance inst;
  inst.id = id;
  inst.passage = tokenize(passage);
  inst.question = tokenize(question);
  for (std::size_t i = 0; i < kNumOptions; ++i) inst.options[i] = tokenize(options[i]);
  inst.gold = gold;
  return inst;
}

}  // namespace mcrc::testing
