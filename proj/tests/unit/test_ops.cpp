#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "mcrc/error.hpp"
#include "mcrc/gradcheck.hpp"
#include "mcrc/ops.hpp"

using namespace mcrc;
using mcrc::testing::random_matrix;

namespace {

// Reduces any op output to a scalar with fixed random weights so every
// output entry influences the loss differently.
Var readout(Var y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Tensor w = random_matrix(y.rows(), y.cols(), rng);
  return sum(mul(y, y.tape().constant(w)));
}

GradCheckReport check_op(ParameterSet& ps, const std::function<Var(Tape&)>& f) {
  return check_gradients(ps.all(), [&](Tape& t) { return readout(f(t)); });
}

}  // namespace

TEST(Ops, MatmulIdentityLeavesMatrixUnchanged) {
  std::mt19937_64 rng(1);
  Tensor a = random_matrix(3, 3, rng);
  Tape t;
  Var out = matmul(t.constant(Tensor::identity(3)), t.constant(a));
  EXPECT_EQ(out.value(), a);
}

TEST(Ops, MatmulMatchesTripleLoop) {
  std::mt19937_64 rng(2);
  Tensor a = random_matrix(4, 5, rng), b = random_matrix(5, 3, rng);
  Tape t;
  Var c = matmul(t.constant(a), t.constant(b));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.value().at(i, j), s, 1e-12);
    }
  }
  EXPECT_THROW(matmul(t.constant(a), t.constant(a)), ShapeError);
}

TEST(Ops, SoftmaxAnalyticCases) {
  Tape t;
  Var u = softmax(t.constant(Tensor::matrix(1, 4, {0, 0, 0, 0})));
  for (double p : u.value().values()) EXPECT_DOUBLE_EQ(p, 0.25);
  Var two = softmax(t.constant(Tensor::matrix(1, 2, {std::log(2.0), 0.0})));
  EXPECT_NEAR(two.value()[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(two.value()[1], 1.0 / 3.0, 1e-15);
}

TEST(Ops, SoftmaxIsStableForLargeMagnitudes) {
  Tape t;
  Var p = softmax(t.constant(Tensor::matrix(2, 3, {1000, 999, -1000, -5e3, -5e3 + 1, -5e3 + 2})));
  for (std::size_t r = 0; r < 2; ++r) {
    const auto row = p.value().row(r);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Ops, MaskedSoftmaxZeroesMaskedEntries) {
  Tape t;
  Tensor mask = Tensor::matrix(1, 3, {1, 0, 1});
  Var p = softmax(t.constant(Tensor::matrix(1, 3, {0, 50, 0})), &mask);
  EXPECT_DOUBLE_EQ(p.value()[1], 0.0);
  EXPECT_DOUBLE_EQ(p.value()[0], 0.5);
  Tensor none = Tensor::matrix(1, 3, {0, 0, 0});
  EXPECT_THROW(softmax(t.constant(Tensor::matrix(1, 3, {1, 2, 3})), &none), Error);
}

TEST(Ops, BroadcastAddAndColumnMul) {
  Tape t;
  Var a = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var row = t.constant(Tensor::matrix(1, 2, {10, 20}));
  Var col = t.constant(Tensor::matrix(2, 1, {2, 3}));
  EXPECT_EQ(add(a, row).value(), Tensor::matrix(2, 2, {11, 22, 13, 24}));
  EXPECT_EQ(sub(a, row).value(), Tensor::matrix(2, 2, {-9, -18, -7, -16}));
  EXPECT_EQ(mul(a, col).value(), Tensor::matrix(2, 2, {2, 4, 9, 12}));
  EXPECT_THROW(add(a, t.constant(Tensor::matrix(1, 3, {1, 2, 3}))), ShapeError);
}

TEST(Ops, ConcatAndSlices) {
  Tape t;
  Var a = t.constant(Tensor::matrix(2, 1, {1, 2}));
  Var b = t.constant(Tensor::matrix(2, 2, {3, 4, 5, 6}));
  Var c = concat({a, b});
  EXPECT_EQ(c.value(), Tensor::matrix(2, 3, {1, 3, 4, 2, 5, 6}));
  EXPECT_EQ(slice_cols(c, 1, 2).value(), b.value());
  Var s = stack_rows({b, b});
  EXPECT_EQ(s.rows(), 4u);
  EXPECT_EQ(slice_rows(s, 2, 2).value(), b.value());
  EXPECT_THROW(concat({a, t.constant(Tensor::matrix(1, 1, {1}))}), ShapeError);
}

TEST(Ops, GatherRowsAndRangeCheck) {
  Tape t;
  Var table = t.constant(Tensor::matrix(3, 2, {0, 1, 10, 11, 20, 21}));
  std::vector<std::size_t> ids = {2, 0, 2};
  EXPECT_EQ(gather_rows(table, ids).value(), Tensor::matrix(3, 2, {20, 21, 0, 1, 20, 21}));
  std::vector<std::size_t> bad = {3};
  EXPECT_THROW(gather_rows(table, bad), Error);
}

TEST(Ops, DropoutIsInvertedAndIdentityAtEval) {
  std::mt19937_64 rng(3);
  Tape t;
  Var a = t.constant(Tensor({200, 50}, 1.0));
  Var eval = dropout(a, 0.45, rng, false);
  EXPECT_EQ(eval.value(), a.value());
  Var train = dropout(a, 0.45, rng, true);
  std::size_t kept = 0;
  for (double v : train.value().values()) {
    if (v != 0.0) {
      EXPECT_NEAR(v, 1.0 / 0.55, 1e-12);
      ++kept;
    }
  }
  const double rate = static_cast<double>(kept) / 10000.0;
  EXPECT_NEAR(rate, 0.55, 0.03);
}

TEST(Ops, TimeMajorHelpers) {
  // Two sequences, three steps, width 1: seq rows are t*B + b.
  Tape t;
  Var seq = t.constant(Tensor::matrix(6, 1, {1, 10, 2, 20, 3, 30}));
  Var w = t.constant(Tensor::matrix(2, 3, {1, 0, 0, 0.5, 0.5, 0}));
  EXPECT_EQ(weighted_time_sum(w, seq).value(), Tensor::matrix(2, 1, {1, 15}));
  Tensor mask = Tensor::matrix(2, 3, {1, 1, 1, 1, 0, 0});
  EXPECT_EQ(masked_time_mean(seq, mask).value(), Tensor::matrix(2, 1, {2, 10}));
  EXPECT_EQ(time_to_batch(seq, 3, 2).value(), Tensor::matrix(2, 3, {1, 2, 3, 10, 20, 30}));
  Var block = t.constant(Tensor::matrix(2, 1, {7, 8}));
  EXPECT_EQ(tile_rows(block, 2).value(), Tensor::matrix(4, 1, {7, 8, 7, 8}));
}

TEST(Ops, CrossEntropyMatchesScalarOracle) {
  std::mt19937_64 rng(4);
  Tensor logits = random_matrix(3, 5, rng, 3.0);
  std::vector<std::size_t> targets = {4, 0, 2};
  std::vector<double> weights = {0.5, 0.0, 2.0};
  double expected = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < 5; ++c) z += std::exp(logits.at(r, c));
    expected += weights[r] * (std::log(z) - logits.at(r, targets[r]));
  }
  Tape t;
  EXPECT_NEAR(cross_entropy(t.constant(logits), targets, weights).value()[0], expected, 1e-12);
  std::vector<std::size_t> bad = {5, 0, 0};
  EXPECT_THROW(cross_entropy(t.constant(logits), bad, weights), Error);
}

// Every differentiable op against central differences on random shapes.
class OpGradients : public ::testing::Test {
 protected:
  std::mt19937_64 rng{17};
  ParameterSet ps;
  Parameter& p(const std::string& name, std::size_t r, std::size_t c, double bound = 1.0) {
    return ps.add(name, random_matrix(r, c, rng, bound));
  }
};

TEST_F(OpGradients, ElementwiseAndLinear) {
  Parameter& a = p("a", 3, 4);
  Parameter& b = p("b", 4, 2);
  Parameter& row = p("row", 1, 4);
  Parameter& col = p("col", 3, 1);
  auto report = check_op(ps, [&](Tape& t) {
    Var x = add(t.parameter(a), t.parameter(row));
    Var y = mul(sigmoid(x), t.parameter(col));
    Var z = sub(tanh(y), scale(x, 0.3));
    return matmul(z, t.parameter(b));
  });
  EXPECT_TRUE(report.passed) << report.worst_parameter << " " << report.max_relative_error;
}

TEST_F(OpGradients, SoftmaxMaskedAndConcat) {
  Parameter& a = p("a", 2, 3);
  Parameter& b = p("b", 2, 2);
  Tensor mask = Tensor::matrix(2, 5, {1, 1, 0, 1, 1, 0, 1, 1, 1, 0});
  auto report = check_op(ps, [&](Tape& t) {
    Var c = concat({t.parameter(a), t.parameter(b)});
    return stack_rows({softmax(c, &mask), mul(c, c)});
  });
  EXPECT_TRUE(report.passed) << report.worst_parameter << " " << report.max_relative_error;
}

TEST_F(OpGradients, GatherBlendScaleRowsAndSums) {
  Parameter& table = p("table", 4, 3);
  Parameter& other = p("other", 3, 3);
  std::vector<std::size_t> ids = {1, 3, 1};
  std::vector<double> keep = {1, 0, 1};
  std::vector<double> factors = {0.5, 0.0, 2.0};
  auto report = check_op(ps, [&](Tape& t) {
    Var g = gather_rows(t.parameter(table), ids);
    Var bl = blend_rows(keep, g, t.parameter(other));
    Var sr = scale_rows(bl, factors);
    return concat({sr, sum_cols(bl), t.constant(Tensor({3, 1}, 0.0))});
  });
  EXPECT_TRUE(report.passed) << report.worst_parameter << " " << report.max_relative_error;
}

TEST_F(OpGradients, TimeMajorOps) {
  // B = 2, T = 3.
  Parameter& seq = p("seq", 6, 2);
  Parameter& w = p("w", 2, 3);
  Parameter& col = p("col", 6, 1);
  Parameter& block = p("block", 2, 2);
  Tensor mask = Tensor::matrix(2, 3, {1, 1, 1, 1, 1, 0});
  auto report = check_op(ps, [&](Tape& t) {
    Var ws = weighted_time_sum(t.parameter(w), t.parameter(seq));
    Var mm = masked_time_mean(t.parameter(seq), mask);
    Var tb = time_to_batch(t.parameter(col), 3, 2);
    Var tiled = slice_rows(tile_rows(t.parameter(block), 3), 1, 2);
    return concat({ws, mm, tb, tiled});
  });
  EXPECT_TRUE(report.passed) << report.worst_parameter << " " << report.max_relative_error;
}

TEST_F(OpGradients, CrossEntropyWithMask) {
  Parameter& logits = p("logits", 3, 4, 2.0);
  std::vector<std::size_t> targets = {0, 3, 1};
  std::vector<double> weights = {0.3, 1.0, 0.7};
  Tensor mask = Tensor::matrix(3, 4, {1, 1, 0, 1, 1, 1, 1, 1, 0, 1, 1, 1});
  auto report = check_gradients(ps.all(), [&](Tape& t) {
    return cross_entropy(t.parameter(logits), targets, weights, &mask);
  });
  EXPECT_TRUE(report.passed) << report.max_relative_error;
}
