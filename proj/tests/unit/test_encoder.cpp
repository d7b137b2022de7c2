// SPDX-License-Identifier: Apache-2.0

#include "csn/encoder.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace csn {
namespace {

using oracle::Mat;

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straightforward per-step LSTM with gate order i, f, g, o.
Mat lstm_loop(const Mat& x, const Mat& wi, const Mat& wh, const Mat& b, int length, bool reverse) {
  const Index hid = wh.rows();
  Mat out = Mat::Zero(x.rows(), hid);
  std::vector<double> h(static_cast<std::size_t>(hid), 0.0), c(static_cast<std::size_t>(hid), 0.0);
  for (int s = 0; s < length; ++s) {
    const int t = reverse ? length - 1 - s : s;
    std::vector<double> z(static_cast<std::size_t>(4 * hid));
    for (Index g = 0; g < 4 * hid; ++g) {
      double v = b(0, g);
      for (Index k = 0; k < x.cols(); ++k) v += x(t, k) * wi(k, g);
      for (Index k = 0; k < hid; ++k) v += h[static_cast<std::size_t>(k)] * wh(k, g);
      z[static_cast<std::size_t>(g)] = v;
    }
    for (Index k = 0; k < hid; ++k) {
      const auto K = static_cast<std::size_t>(k), H = static_cast<std::size_t>(hid);
      const double i = sigm(z[K]), f = sigm(z[H + K]), g = std::tanh(z[2 * H + K]), o = sigm(z[3 * H + K]);
      c[K] = f * c[K] + i * g;
      h[K] = o * std::tanh(c[K]);
      out(t, k) = h[K];
    }
  }
  return out;
}

struct LstmFixture {
  Mat x, wi, wh, b;
  explicit LstmFixture(std::uint64_t seed, Index steps = 6, Index in = 3, Index hid = 2) {
    Rng rng = make_stream(seed, "lstm");
    x = oracle::random_matrix(rng, steps, in);
    wi = oracle::random_matrix(rng, in, 4 * hid);
    wh = oracle::random_matrix(rng, hid, 4 * hid);
    b = oracle::random_matrix(rng, 1, 4 * hid);
  }
  Mat run(int length, bool reverse, const Mat* input = nullptr) const {
    ad::Tape<double> tape(false);
    ad::LstmWeights<double> w{tape.constant(wi), tape.constant(wh), tape.constant(b)};
    return ad::lstm_sequence(tape.constant(input ? *input : x), w, length, reverse).value();
  }
};

TEST(Lstm, MatchesLoopReference) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const LstmFixture f(seed);
    for (int len : {0, 1, 4, 6})
      for (bool rev : {false, true})
        EXPECT_LT(oracle::max_abs_diff(f.run(len, rev), lstm_loop(f.x, f.wi, f.wh, f.b, len, rev)), 1e-12)
            << "len " << len << " reverse " << rev;
  }
}

TEST(Lstm, PaddingRowsAreZeroAndIgnored) {
  const LstmFixture f(11);
  Mat noisy = f.x;
  noisy.bottomRows(2).setConstant(50.0);
  for (bool rev : {false, true}) {
    const Mat a = f.run(4, rev);
    EXPECT_EQ(a.bottomRows(2).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(a, f.run(4, rev, &noisy));
  }
}

TEST(Lstm, BackwardDirectionStartsAtLastRealToken) {
  const LstmFixture f(12);
  // The last real row of the reverse pass only sees its own input.
  Mat single = Mat::Zero(1, f.x.cols());
  single.row(0) = f.x.row(3);
  const Mat one = lstm_loop(single, f.wi, f.wh, f.b, 1, false);
  EXPECT_LT((f.run(4, true).row(3) - one.row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encoder, ConcatenatesDirectionsForwardFirst) {
  const LstmFixture f(13);
  Rng rng = make_stream(14, "lstm");
  const Mat wi2 = oracle::random_matrix(rng, 3, 8), wh2 = oracle::random_matrix(rng, 2, 8), b2 = oracle::random_matrix(rng, 1, 8);
  ad::Tape<double> tape(false);
  BiLstmVars<double> w{{tape.constant(f.wi), tape.constant(f.wh), tape.constant(f.b)},
                       {tape.constant(wi2), tape.constant(wh2), tape.constant(b2)}};
  const auto rep = encode_sequence(tape.constant(f.x), 5, w);
  EXPECT_EQ(rep.length, 5);
  ASSERT_EQ(rep.hidden.cols(), 4);
  EXPECT_LT(oracle::max_abs_diff(rep.hidden.value().leftCols(2), lstm_loop(f.x, f.wi, f.wh, f.b, 5, false)), 1e-12);
  EXPECT_LT(oracle::max_abs_diff(rep.hidden.value().rightCols(2), lstm_loop(f.x, wi2, wh2, b2, 5, true)), 1e-12);
}

TEST(Embedding, LookupAndPaddingGradient) {
  Parameter<double> table("embedding", 5, 3);
  Rng rng = make_stream(15, "t");
  table.value = oracle::random_matrix(rng, 5, 3);
  table.value.row(0).setZero();
  ad::Tape<double> tape;
  const std::vector<std::int32_t> ids{2, 4, 2, 0};
  const auto e = embed(tape, table, ids, 0.0, false, nullptr);
  for (std::size_t t = 0; t < ids.size(); ++t) EXPECT_EQ(Mat(e.value().row(static_cast<Index>(t))), Mat(table.value.row(ids[t])));
  tape.backward(ad::sum(e));
  EXPECT_EQ(table.grad.row(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(table.grad(2, 1), 2.0);
  EXPECT_EQ(table.grad(4, 1), 1.0);
  EXPECT_EQ(table.grad(1, 1), 0.0);
}

TEST(Embedding, DropoutRateAndScaling) {
  Parameter<double> table("embedding", 2, 50);
  table.value.setOnes();
  std::vector<std::int32_t> ids(200, 1);
  ad::Tape<double> tape(false);
  Rng rng = make_stream(16, "dropout");
  const auto e = embed(tape, table, ids, 0.2, true, &rng).value();
  int zeros = 0;
  for (Index i = 0; i < e.size(); ++i) {
    const double v = e.data()[i];
    if (v == 0.0) ++zeros;
    else EXPECT_DOUBLE_EQ(v, 1.25);
  }
  const double rate = zeros / static_cast<double>(e.size());
  // 10,000 Bernoulli(0.2) draws: standard error 0.004.
  EXPECT_NEAR(rate, 0.2, 0.02);
  const auto eval = embed(tape, table, ids, 0.2, false, &rng).value();
  EXPECT_EQ(eval.minCoeff(), 1.0);
}

}  // namespace
}  // namespace csn
