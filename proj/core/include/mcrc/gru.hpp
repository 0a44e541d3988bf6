#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "mcrc/autodiff.hpp"

namespace mcrc {

Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng);
/// Glorot-uniform initialisation for a [fan_in x fan_out] matrix.
Tensor xavier_tensor(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

/// Weights of one GRU direction.
///
/// Gate convention, with x the input row and h the previous state:
///   z  = sigmoid(x Wz + h Uz + bz)
///   r  = sigmoid(x Wr + h Ur + br)
///   h~ = tanh(x Wh + (r * h) Uh + bh)
///   h' = (1 - z) * h + z * h~
/// Wz|Wr|Wh are stored side by side in `input` ([in x 3H]), Uz|Ur in
/// `recurrent_gates` ([H x 2H]), Uh in `recurrent_candidate` and the three
/// biases in `bias` ([1 x 3H]).
struct GruWeights {
  Parameter* input = nullptr;
  Parameter* recurrent_gates = nullptr;
  Parameter* recurrent_candidate = nullptr;
  Parameter* bias = nullptr;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;

  static GruWeights create(ParameterSet& params, const std::string& prefix, std::size_t input_dim,
                           std::size_t hidden, std::mt19937_64& rng);
  /// Rebinds to parameters `prefix.*` that already exist in `params`.
  static GruWeights bind(ParameterSet& params, const std::string& prefix);
};

/// One GRU step for a batch: x is [B x in], h_prev is [B x H].
Var gru_cell(Var x, Var h_prev, const GruWeights& w);

/// x W + b for every row of `x`; lets a whole sequence share one matmul.
Var gru_input_projection(Var x, const GruWeights& w);

/// GRU step from a precomputed input projection ([B x 3H]).
Var gru_step(Var projected_x, Var h_prev, const GruWeights& w);

}  // namespace mcrc
