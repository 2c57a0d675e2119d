#include <gtest/gtest.h>

#include <cmath>

#include "recomb/neural.hpp"
#include "test_util.hpp"

using namespace recomb;

namespace {

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Scalar re-implementation of one LSTM step (gate order i, f, o, g).
LstmState reference_lstm(const LstmCell& cell, const Vector& x, const Vector& h, const Vector& c) {
  const int H = static_cast<int>(h.size());
  const int in = static_cast<int>(x.size());
  std::vector<double> pre(4 * H);
  for (int r = 0; r < 4 * H; ++r) {
    double acc = cell.b(r);
    for (int k = 0; k < in; ++k) acc += cell.W(r, k) * x(k);
    for (int k = 0; k < H; ++k) acc += cell.W(r, in + k) * h(k);
    pre[r] = acc;
  }
  LstmState out{Vector(H), Vector(H)};
  for (int j = 0; j < H; ++j) {
    double i = sigm(pre[j]), f = sigm(pre[H + j]), o = sigm(pre[2 * H + j]), g = std::tanh(pre[3 * H + j]);
    out.c(j) = f * c(j) + i * g;
    out.h(j) = o * std::tanh(out.c(j));
  }
  return out;
}

}  // namespace

TEST(Softmax, KnownValues) {
  Vector e(3);
  e << 1, 2, 3;
  Vector a = softmax(e);
  EXPECT_NEAR(a(0), 0.0900, 5e-5);
  EXPECT_NEAR(a(1), 0.2447, 5e-5);
  EXPECT_NEAR(a(2), 0.6652, 5e-5);
}

TEST(Softmax, SaturatesWithoutOverflow) {
  Vector e(3);
  e << 50, 0, 0;
  Vector a = softmax(e);
  EXPECT_TRUE(a.allFinite());
  EXPECT_LT(1.0 - a(0), 1e-20);
  EXPECT_GT(a(1), 0.0);
  EXPECT_NEAR(a.sum(), 1.0, 1e-15);
  Vector big(2);
  big << 1000, 999;
  EXPECT_TRUE(softmax(big).allFinite());
  EXPECT_NEAR(log_sum_exp(big), 1000 + std::log1p(std::exp(-1.0)), 1e-12);
}

TEST(Lstm, MatchesScalarReference) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    LstmCell cell{Matrix(12, 5 + 3), Vector(12)};
    for (Eigen::Index i = 0; i < cell.W.size(); ++i) cell.W.data()[i] = rng.uniform(-1, 1);
    for (Eigen::Index i = 0; i < cell.b.size(); ++i) cell.b(i) = rng.uniform(-1, 1);
    Vector x(5), h(3), c(3);
    for (auto* v : {&x, &h, &c})
      for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = rng.uniform(-2, 2);
    LstmState got = lstm_step(cell, x, h, c);
    LstmState want = reference_lstm(cell, x, h, c);
    EXPECT_LT((got.h - want.h).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((got.c - want.c).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Encoder, EmptyInputRejected) {
  Rng rng(1);
  Seq2SeqModel m = testutil::tiny_model({"a"}, {"x"}, {2, 3}, rng);
  EXPECT_THROW(encode(m.params, {}), std::invalid_argument);
}

TEST(Gradient, MatchesCentralDifferences) {
  Rng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    auto tc = testutil::random_tiny_case(rng);
    EXPECT_LT(testutil::max_gradient_rel_error(tc), 1e-4) << "trial " << trial;
  }
}

TEST(Gradient, CopyDisabledAndLargerDims) {
  Rng rng(77);
  for (int trial = 0; trial < 3; ++trial) {
    auto tc = testutil::random_tiny_case(rng, {3, 4}, false);
    EXPECT_LT(testutil::max_gradient_rel_error(tc), 1e-4);
  }
}

TEST(Marginalization, MatchesIndependentRecomputation) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    auto tc = testutil::random_tiny_case(rng);
    const auto& inst = tc.instance;
    EncoderStates enc = encode(tc.model.params, inst.input_ids);
    Vector s(tc.model.params.hidden());
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = rng.uniform(-1, 1);
    ActionDistribution dist = action_distribution(tc.model.params, s, enc, inst.copy_mask);

    std::set<std::string> targets(inst.input_surface.begin(), inst.input_surface.end());
    for (const auto& t : tc.model.output_vocab.tokens()) targets.insert(t);
    for (const auto& target : targets) {
      const double p = testutil::reference_token_prob(tc.model, inst, enc, s, target);
      auto id = tc.model.output_vocab.find(target);
      if (p == 0) {
        EXPECT_THROW(token_log_prob(dist, id, target, inst.input_surface), UnreachableTarget);
        continue;
      }
      EXPECT_NEAR(token_log_prob(dist, id, target, inst.input_surface), std::log(p), 1e-12) << target;
    }
  }
}

TEST(Likelihood, EqualsStepwiseReplay) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto tc = testutil::random_tiny_case(rng);
    const auto& P = tc.model.params;
    const auto& inst = tc.instance;
    EncoderStates enc = encode(P, inst.input_ids);
    DecoderState st = initial_decoder_state(P, enc);
    double total = 0;
    Tokens targets = inst.output;
    targets.push_back("</s>");
    for (std::size_t j = 0; j < targets.size(); ++j) {
      Attention att = attend(P, st.s, enc);
      ActionDistribution dist = action_distribution(P, st.s, att, inst.copy_mask);
      total += token_log_prob(dist, tc.model.output_vocab.find(targets[j]), targets[j], inst.input_surface);
      if (j + 1 < targets.size()) st = advance_decoder(P, st, inst.feed_ids[j], att.context);
    }
    EXPECT_NEAR(sequence_log_likelihood(P, inst), total, 1e-12);
  }
}

TEST(Copy, DisabledMasksEverything) {
  Rng rng(3);
  Seq2SeqModel m = testutil::tiny_model({"a", "b"}, {"x"}, {2, 3}, rng, 0.5, false);
  Instance inst = m.make_instance({"a", "b"}, {"b"});
  EXPECT_EQ(inst.copy_mask, (std::vector<bool>{false, false}));
  EXPECT_THROW(sequence_log_likelihood(m.params, inst), UnreachableTarget);
  EXPECT_EQ(inst.feed_ids[0], m.output_vocab.unk_id());
}

TEST(Params, ShapesAndCount) {
  ModelParams p = ModelParams::zeros(5, 4, {2, 3});
  EXPECT_NO_THROW(p.check_shapes());
  // phi_in 10, phi_out 8, two encoders 2*(12*5+12), decoder 12*(2+6+3)+12, W_s 18, W_a 18, U 36
  EXPECT_EQ(p.parameter_count(), 10u + 8 + 2 * 72 + 144 + 18 + 18 + 36);
  p.W_a.resize(3, 5);
  EXPECT_THROW(p.check_shapes(), std::invalid_argument);
}
