#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "bayeshead/core_math.hpp"

using namespace bayeshead;

TEST(Softmax, Examples) {
  const double zero[] = {0.0, 0.0};
  EXPECT_EQ(softmax(zero), (std::vector<double>{0.5, 0.5}));

  for (double c : {-40.0, 0.0, 3.5, 700.0}) {
    const double same[] = {c, c, c};
    for (double p : softmax(same)) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  }

  const double logs[] = {std::log(1.0), std::log(3.0)};
  const auto p = softmax(logs);
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, RejectsBadInput) {
  EXPECT_THROW(softmax(std::vector<double>{}), Error);
  const double nan[] = {0.0, std::nan("")};
  EXPECT_THROW(softmax(nan), Error);
  const double inf[] = {INFINITY, 0.0};
  EXPECT_THROW(softmax(inf), Error);
}

TEST(Softmax, ShiftInvariantAndNormalised) {
  RngStream rng(11, 0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(1 + rng.uniform_index(8));
    for (double& v : x) v = 10.0 * rng.normal();
    const double c = 200.0 * rng.uniform() - 100.0;
    std::vector<double> shifted = x;
    for (double& v : shifted) v += c;
    const auto a = softmax(x);
    const auto b = softmax(shifted);
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-12);
      EXPECT_GE(a[i], 0.0);
      total += a[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Softplus, Examples) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(100.0), 100.0, 1e-12 * 100.0);
  const double tiny = softplus(-100.0);
  EXPECT_GT(tiny, 0.0);
  EXPECT_LT(tiny, 1e-40);
  EXPECT_NEAR(softplus(1e6), 1e6, 1e-6);
  EXPECT_GT(softplus(-1e6), -1.0);  // no NaN, no overflow
  EXPECT_THROW(softplus(NAN), Error);
  EXPECT_THROW(softplus(INFINITY), Error);
}

TEST(Softplus, OddPartIsIdentityAndMonotone) {
  for (double x = -50.0; x <= 50.0; x += 0.37) {
    EXPECT_NEAR(softplus(x) - softplus(-x), x, 1e-10);
    EXPECT_LT(softplus(x), softplus(x + 0.37));
  }
}

TEST(Softplus, InverseAndSigmoid) {
  EXPECT_NEAR(softplus_inverse(0.05), -2.970628, 1e-6);
  EXPECT_NEAR(softplus_inverse(0.05), std::log(std::expm1(0.05)), 1e-12);
  for (double y : {1e-3, 0.05, 1.0, 30.0}) EXPECT_NEAR(softplus(softplus_inverse(y)), y, 1e-12 * y + 1e-15);
  for (double x : {-3.0, 0.0, 2.0}) {
    const double h = 1e-6;
    EXPECT_NEAR(sigmoid(x), (softplus(x + h) - softplus(x - h)) / (2 * h), 1e-8);
  }
}

TEST(Rng, DeterministicPerStream) {
  RngStream a(7, 0), b(7, 0), c(7, 1);
  const auto xa = rng_normal(a, 64);
  const auto xb = rng_normal(b, 64);
  const auto xc = rng_normal(c, 64);
  EXPECT_EQ(xa, xb);
  EXPECT_NE(xa, xc);
  EXPECT_EQ(a.counter, 128u);
  EXPECT_THROW(rng_normal(a, 0), Error);
}

TEST(Rng, MomentsOfStandardNormal) {
  RngStream s(7, 0);
  const auto x = rng_normal(s, 100000);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double var = ss / (x.size() - 1);
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(Rng, ResumeFromCounter) {
  RngStream s(42, 9);
  rng_normal(s, 17);
  const RngStream saved = s;
  const auto tail = rng_normal(s, 20);
  RngStream restored(saved.seed, saved.stream_id, saved.counter);
  EXPECT_EQ(rng_normal(restored, 20), tail);
}

TEST(Rng, SplitStreamsAreDistinctAndStable) {
  const RngStream base(3, 4);
  RngStream a = base.split(0), b = base.split(1), a2 = base.split(0);
  EXPECT_EQ(a, a2);
  EXPECT_NE(a.next_u64(), b.next_u64());
  // Children of different parents differ too.
  RngStream other = RngStream(3, 5).split(0);
  RngStream a3 = base.split(0);
  EXPECT_NE(other.next_u64(), a3.next_u64());
}

TEST(Rng, CrossStreamCorrelationIsSmall) {
  RngStream a(1, 0), b(1, 1);
  const std::size_t n = 50000;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) sxy += a.normal() * b.normal();
  EXPECT_LT(std::abs(sxy / n), 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Rng, UniformIndexAndPermutation) {
  RngStream s(5, 5);
  std::vector<int> hits(6, 0);
  for (int i = 0; i < 60000; ++i) ++hits[s.uniform_index(6)];
  for (int h : hits) EXPECT_NEAR(h, 10000, 400);

  RngStream p(5, 6);
  auto perm = permutation(50, p);
  std::vector<std::size_t> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Matrix, MultiplyAssociative) {
  RngStream rng(21, 0);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a(5, 5), b(5, 5), c(5, 5);
    for (auto* m : {&a, &b, &c})
      for (double& v : m->data()) v = rng.normal();
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < 25; ++i)
      EXPECT_NEAR(left.data()[i], right.data()[i], 1e-9 * std::max(1.0, std::abs(left.data()[i])));
  }
}

TEST(Matrix, ShapeChecks) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), Error);
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), Error);
  Matrix m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(m.row(1)[0], 4.0);
  EXPECT_TRUE(m.all_finite());
}

TEST(Rng, FirstDrawsAcrossSeedsAreUniform) {
  for (std::uint64_t stream : {0u, 1u, 7u}) {
    double sum = 0.0, sq = 0.0, lowest = 1.0;
    const int n = 20000;
    for (int s = 0; s < n; ++s) {
      RngStream r(static_cast<std::uint64_t>(s), stream);
      const double u = r.uniform();
      sum += u;
      sq += u * u;
      lowest = std::min(lowest, u);
    }
    const double mean = sum / n;
    EXPECT_NEAR(mean, 0.5, 0.01);
    EXPECT_NEAR(sq / n - mean * mean, 1.0 / 12.0, 0.005);
    EXPECT_GT(lowest, 1e-9);
  }
}
