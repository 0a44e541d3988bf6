#include "mcrc/gru.hpp"

#include <cmath>

#include "mcrc/error.hpp"
#include "mcrc/ops.hpp"

namespace mcrc {

Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t({rows, cols});
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor xavier_tensor(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  return uniform_tensor(fan_in, fan_out, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

GruWeights GruWeights::create(ParameterSet& params, const std::string& prefix, std::size_t input_dim,
                              std::size_t hidden, std::mt19937_64& rng) {
  if (hidden == 0) throw ShapeError("GRU hidden size must be positive");
  if (input_dim == 0) throw ShapeError("GRU input size must be positive");
  GruWeights w;
  w.input_dim = input_dim;
  w.hidden = hidden;
  Tensor input({input_dim, 3 * hidden});
  Tensor gates({hidden, 2 * hidden});
  // Each gate block gets its own Glorot range.
  for (std::size_t g = 0; g < 3; ++g) {
    Tensor block = xavier_tensor(input_dim, hidden, rng);
    for (std::size_t i = 0; i < input_dim; ++i) {
      for (std::size_t j = 0; j < hidden; ++j) input.at(i, g * hidden + j) = block.at(i, j);
    }
  }
  for (std::size_t g = 0; g < 2; ++g) {
    Tensor block = xavier_tensor(hidden, hidden, rng);
    for (std::size_t i = 0; i < hidden; ++i) {
      for (std::size_t j = 0; j < hidden; ++j) gates.at(i, g * hidden + j) = block.at(i, j);
    }
  }
  w.input = &params.add(prefix + ".input", std::move(input));
  w.recurrent_gates = &params.add(prefix + ".recurrent_gates", std::move(gates));
  w.recurrent_candidate = &params.add(prefix + ".recurrent_candidate", xavier_tensor(hidden, hidden, rng));
  w.bias = &params.add(prefix + ".bias", Tensor({1, 3 * hidden}));
  return w;
}

GruWeights GruWeights::bind(ParameterSet& params, const std::string& prefix) {
  GruWeights w;
  w.input = &params.at(prefix + ".input");
  w.recurrent_gates = &params.at(prefix + ".recurrent_gates");
  w.recurrent_candidate = &params.at(prefix + ".recurrent_candidate");
  w.bias = &params.at(prefix + ".bias");
  w.input_dim = w.input->value.rows();
  w.hidden = w.recurrent_candidate->value.rows();
  return w;
}

Var gru_input_projection(Var x, const GruWeights& w) {
  Tape& t = x.tape();
  if (x.cols() != w.input_dim) {
    throw ShapeError("GRU input has " + std::to_string(x.cols()) + " features, weights expect " +
                     std::to_string(w.input_dim));
  }
  return add(matmul(x, t.parameter(*w.input)), t.parameter(*w.bias));
}

Var gru_step(Var projected_x, Var h_prev, const GruWeights& w) {
  Tape& t = projected_x.tape();
  const std::size_t H = w.hidden;
  if (h_prev.cols() != H || projected_x.cols() != 3 * H || h_prev.rows() != projected_x.rows()) {
    throw ShapeError("GRU state " + to_string(h_prev.value().shape()) + " does not fit hidden size " +
                     std::to_string(H));
  }
  Var hg = matmul(h_prev, t.parameter(*w.recurrent_gates));
  Var z = sigmoid(add(slice_cols(projected_x, 0, H), slice_cols(hg, 0, H)));
  Var r = sigmoid(add(slice_cols(projected_x, H, H), slice_cols(hg, H, H)));
  Var candidate =
      tanh(add(slice_cols(projected_x, 2 * H, H), matmul(mul(r, h_prev), t.parameter(*w.recurrent_candidate))));
  return add(h_prev, mul(z, sub(candidate, h_prev)));
}

Var gru_cell(Var x, Var h_prev, const GruWeights& w) {
  return gru_step(gru_input_projection(x, w), h_prev, w);
}

}  // namespace mcrc
