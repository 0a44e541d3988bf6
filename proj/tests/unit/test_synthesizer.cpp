#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "mcrc/gradcheck.hpp"
#include "mcrc/ops.hpp"
#include "mcrc/optim.hpp"
#include "mcrc/synthesizer.hpp"

using namespace mcrc;
using mcrc::testing::random_matrix;

namespace {

constexpr std::size_t kWord = 3, kHid = 2, kDec = 4, kAtt = 3, kVocab = 7;

struct Fixture {
  std::mt19937_64 rng{31};
  ParameterSet ps;
  BiGruEncoder passage, question;
  AnswerDecoder dec;
  Fixture() {
    passage = BiGruEncoder::create(ps, "p", kWord, kHid, rng);
    question = BiGruEncoder::create(ps, "q", kWord, kHid, rng);
    dec = AnswerDecoder::create(ps, "d", kWord, 2 * kHid, kDec, kAtt, kVocab, rng);
  }
  DecoderMemory memory(Tape& t, const Tensor& px, const Tensor& pmask, const Tensor& qx, const Tensor& qmask) const {
    return dec.memory(passage.encode(t.constant(px), pmask), question.encode(t.constant(qx), qmask));
  }
};

// Row-vector times matrix.
std::vector<double> vecmat(std::span<const double> v, const Tensor& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += v[i] * m.at(i, j);
  }
  return out;
}

}  // namespace

TEST(Decoder, AttentionIsADistributionOverRealMemory) {
  Fixture f;
  std::mt19937_64 rng(32);
  Tape t;
  DecoderMemory m = f.memory(t, random_matrix(6, kWord, rng), Tensor::matrix(2, 3, {1, 1, 0, 1, 1, 1}),
                             random_matrix(4, kWord, rng), Tensor::matrix(2, 2, {1, 1, 1, 0}));
  ASSERT_EQ(m.steps, 5u);
  Tensor w = f.dec.attention_weights(t.constant(random_matrix(2, kDec, rng)), m).value();
  for (std::size_t b = 0; b < 2; ++b) {
    double total = 0;
    for (std::size_t s = 0; s < 5; ++s) total += w.at(b, s);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  EXPECT_EQ(w.at(0, 2), 0.0);
  EXPECT_EQ(w.at(1, 4), 0.0);
}

TEST(Decoder, SingleRealPositionContextIsThatState) {
  Fixture f;
  std::mt19937_64 rng(33);
  Tape t;
  DecoderMemory m = f.memory(t, random_matrix(3, kWord, rng), Tensor::matrix(1, 3, {1, 0, 0}),
                             random_matrix(2, kWord, rng), Tensor::matrix(1, 2, {0, 0}));
  Tensor c = f.dec.attention_context(t.constant(random_matrix(1, kDec, rng)), m).value();
  for (std::size_t j = 0; j < 2 * kHid; ++j) EXPECT_NEAR(c.at(0, j), m.states.value().at(0, j), 1e-14);
}

TEST(Decoder, ThreePositionAttentionMatchesHandComputation) {
  Fixture f;
  std::mt19937_64 rng(34);
  Tape t;
  DecoderMemory m = f.memory(t, random_matrix(2, kWord, rng), Tensor({1, 2}, 1.0), random_matrix(1, kWord, rng),
                             Tensor({1, 1}, 1.0));
  Tensor h = random_matrix(1, kDec, rng);
  Tensor got = f.dec.attention_context(t.constant(h), m).value();

  const Tensor& K = f.ps.at("d.memory_keys").value;
  const Tensor& Q = f.ps.at("d.state_query").value;
  const Tensor& bias = f.ps.at("d.attention_bias").value;
  const Tensor& v = f.ps.at("d.attention_out").value;
  const Tensor& states = m.states.value();
  std::vector<double> q = vecmat(h.row(0), Q);
  std::vector<double> energy(3);
  for (std::size_t j = 0; j < 3; ++j) {
    std::vector<double> k = vecmat(states.row(j), K);
    double e = 0;
    for (std::size_t a = 0; a < kAtt; ++a) e += v.at(a, 0) * std::tanh(k[a] + q[a] + bias.at(0, a));
    energy[j] = e;
  }
  double z = 0;
  for (double e : energy) z += std::exp(e);
  for (std::size_t d = 0; d < 2 * kHid; ++d) {
    double c = 0;
    for (std::size_t j = 0; j < 3; ++j) c += std::exp(energy[j]) / z * states.at(j, d);
    EXPECT_NEAR(got.at(0, d), c, 1e-13);
  }
}

TEST(Decoder, StepProducesVocabularyLogits) {
  Fixture f;
  std::mt19937_64 rng(35);
  Tape t;
  DecoderMemory m = f.memory(t, random_matrix(4, kWord, rng), Tensor({2, 2}, 1.0), random_matrix(2, kWord, rng),
                             Tensor({2, 1}, 1.0));
  DecoderState s = f.dec.initial_state(t.constant(random_matrix(2, 2 * kHid, rng)),
                                       t.constant(random_matrix(2, 2 * kHid, rng)),
                                       t.constant(random_matrix(2, kWord, rng)));
  EXPECT_EQ(s.hidden.cols(), kDec);
  DecoderStep step = f.dec.step(s, m);
  EXPECT_EQ(step.logits.rows(), 2u);
  EXPECT_EQ(step.logits.cols(), kVocab);
  EXPECT_EQ(step.weights.cols(), 3u);
  EXPECT_EQ(step.next.prev_context.cols(), 2 * kHid);
}

TEST(Decoder, ZeroOutputLayerGivesLogVocabularyLoss) {
  Fixture f;
  f.ps.at("d.output").value.fill(0.0);
  std::mt19937_64 rng(36);
  Tape t;
  DecoderMemory m = f.memory(t, random_matrix(2, kWord, rng), Tensor({1, 2}, 1.0), random_matrix(1, kWord, rng),
                             Tensor({1, 1}, 1.0));
  DecoderState s = f.dec.initial_state(t.constant(random_matrix(1, 2 * kHid, rng)),
                                       t.constant(random_matrix(1, 2 * kHid, rng)),
                                       t.constant(random_matrix(1, kWord, rng)));
  std::vector<std::size_t> target = {5};
  std::vector<double> w = {1.0};
  EXPECT_NEAR(cross_entropy(f.dec.step(s, m).logits, target, w).value()[0], std::log(double(kVocab)), 1e-12);
}

TEST(GeneratedAnswer, SurfaceStopsAtEos) {
  GeneratedAnswer a;
  a.raw = {Vocabulary::kEos};
  EXPECT_TRUE(a.surface().empty());
  a.raw = {5, 6, Vocabulary::kEos, 7};
  EXPECT_EQ(a.surface(), (TokenIds{5, 6}));
  a.raw = {Vocabulary::kBos, 9};
  EXPECT_EQ(a.surface(), (TokenIds{9}));
}

namespace {

// Two teacher-forced steps for one instance; the word vectors of the targets
// are fixed random rows.
Var two_step_loss(const Fixture& f, Tape& t, const Tensor& px, const Tensor& qx, const Tensor& words) {
  DecoderMemory m = f.memory(t, px, Tensor({1, 3}, 1.0), qx, Tensor({1, 2}, 1.0));
  Var word_rows = t.constant(words);
  DecoderState s = f.dec.initial_state(slice_rows(m.states, 3, 1), slice_rows(m.states, 0, 1),
                                       slice_rows(word_rows, 0, 1));
  const std::vector<std::size_t> targets = {4, Vocabulary::kEos};
  std::vector<double> w = {0.5};
  Var loss;
  for (std::size_t k = 0; k < 2; ++k) {
    DecoderStep step = f.dec.step(s, m);
    std::vector<std::size_t> gold = {targets[k]};
    Var l = cross_entropy(step.logits, gold, w);
    loss = loss.valid() ? add(loss, l) : l;
    s = step.next;
    s.prev_word = slice_rows(word_rows, k + 1, 1);
  }
  return loss;
}

}  // namespace

TEST(Decoder, TwoStepLossPassesGradientCheck) {
  Fixture f;
  std::mt19937_64 rng(37);
  Tensor px = random_matrix(3, kWord, rng), qx = random_matrix(2, kWord, rng), words = random_matrix(3, kWord, rng);
  auto report = check_gradients(f.ps.all(), [&](Tape& t) { return two_step_loss(f, t, px, qx, words); });
  EXPECT_TRUE(report.passed) << report.worst_parameter << " " << report.max_relative_error;
}

TEST(Decoder, AdamDrivesTheLossDown) {
  Fixture f;
  std::mt19937_64 rng(38);
  Tensor px = random_matrix(3, kWord, rng), qx = random_matrix(2, kWord, rng), words = random_matrix(3, kWord, rng);
  auto params = f.ps.all();
  Adam adam(params, AdamOptions{0.01});
  double first = 0, last = 0;
  for (int it = 0; it < 20; ++it) {
    for (Parameter* p : params) p->grad.fill(0.0);
    Tape t;
    Var loss = two_step_loss(f, t, px, qx, words);
    if (it == 0) first = loss.value()[0];
    last = loss.value()[0];
    t.backward(loss);
    adam.step();
  }
  EXPECT_LT(last, first);
}
