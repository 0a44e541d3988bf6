#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "mcrc/error.hpp"
#include "mcrc/gradcheck.hpp"
#include "mcrc/ops.hpp"
#include "mcrc/selector.hpp"

using namespace mcrc;
using mcrc::testing::random_matrix;

TEST(Bilinear, IdentityWeightGivesDotProduct) {
  ParameterSet ps;
  BilinearMatcher m = BilinearMatcher::create(ps, "w", 2);
  ps.at("w").value = Tensor::identity(2);
  Tape t;
  Var a = t.constant(Tensor::matrix(1, 2, {1, 2}));
  Var z = t.constant(Tensor::matrix(4, 2, {3, 4, 0, 0, 1, 0, -1, 1}));
  Tensor s = m.scores(a, z).value();
  EXPECT_EQ(s.at(0, 0), 11.0);
  EXPECT_EQ(s.at(0, 1), 0.0);
  EXPECT_EQ(s.at(0, 2), 1.0);
  EXPECT_EQ(s.at(0, 3), 1.0);
}

TEST(Bilinear, ZeroAnswerOrZeroWeightGivesLogFour) {
  std::mt19937_64 rng(41);
  ParameterSet ps;
  BilinearMatcher m = BilinearMatcher::create(ps, "w", 3);
  Tape t;
  Var a = t.constant(random_matrix(2, 3, rng));
  Var z = t.constant(random_matrix(8, 3, rng));
  std::vector<std::size_t> gold = {1, 3};
  EXPECT_NEAR(selection_loss(m.scores(a, z), gold).value()[0], std::log(4.0), 1e-15);

  ps.at("w").value = random_matrix(3, 3, rng);
  Var zero = t.constant(Tensor({2, 3}));
  EXPECT_NEAR(selection_loss(m.scores(zero, z), gold).value()[0], std::log(4.0), 1e-15);
  Tensor p = option_probabilities(m.scores(zero, z)).value();
  for (double v : p.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Bilinear, ShapeErrors) {
  ParameterSet ps;
  BilinearMatcher m = BilinearMatcher::create(ps, "w", 2);
  Tape t;
  EXPECT_THROW(m.scores(t.constant(Tensor({1, 3})), t.constant(Tensor({4, 2}))), ShapeError);
  EXPECT_THROW(m.scores(t.constant(Tensor({1, 2})), t.constant(Tensor({3, 2}))), ShapeError);
  std::vector<std::size_t> bad = {4};
  EXPECT_THROW(selection_loss(t.constant(Tensor({1, 4})), bad), Error);
}

TEST(SelectOption, ArgmaxWithLowestIndexTies) {
  std::vector<double> a = {1, 5, 2, 0};
  EXPECT_EQ(select_option(a), 1u);
  std::vector<double> ties = {3, 3, 3, 3};
  EXPECT_EQ(select_option(ties), 0u);
  std::vector<double> late = {0, 1, 7, 7};
  EXPECT_EQ(select_option(late), 2u);
  EXPECT_THROW(select_option(std::span<const double>{}), ShapeError);
}

TEST(Probabilities, ShiftInvariantAndPermutationEquivariant) {
  std::mt19937_64 rng(42);
  Tape t;
  Tensor s = random_matrix(3, 4, rng, 4.0);
  Tensor shifted = s;
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t i = 0; i < 4; ++i) shifted.at(b, i) += 100.0 * static_cast<double>(b + 1);
  }
  Tensor p = option_probabilities(t.constant(s)).value();
  Tensor q = option_probabilities(t.constant(shifted)).value();
  for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(p[k], q[k], 1e-14);

  const std::size_t perm[4] = {2, 0, 3, 1};
  Tensor permuted({3, 4});
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t i = 0; i < 4; ++i) permuted.at(b, i) = s.at(b, perm[i]);
  }
  Tensor r = option_probabilities(t.constant(permuted)).value();
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.at(b, i), p.at(b, perm[i]), 1e-15);
    EXPECT_EQ(select_option(permuted.row(b)), [&] {
      for (std::size_t i = 0; i < 4; ++i) {
        if (perm[i] == select_option(s.row(b))) return i;
      }
      return std::size_t{9};
    }());
  }
}

TEST(Bilinear, LossPassesGradientCheck) {
  std::mt19937_64 rng(43);
  ParameterSet ps;
  BilinearMatcher m = BilinearMatcher::create(ps, "w", 3);
  ps.at("w").value = random_matrix(3, 3, rng);
  Parameter& a = ps.add("a", random_matrix(2, 3, rng));
  Parameter& z = ps.add("z", random_matrix(8, 3, rng));
  std::vector<std::size_t> gold = {0, 2};
  auto report = check_gradients(ps.all(), [&](Tape& t) {
    return selection_loss(m.scores(t.parameter(a), t.parameter(z)), gold);
  });
  EXPECT_TRUE(report.passed) << report.worst_parameter << " " << report.max_relative_error;
}
