#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "bayeshead/inference.hpp"
#include "test_support.hpp"

using namespace bayeshead;

TEST(PredictMc, SingleDrawDegeneracy) {
  const HeadModel m = oracle::toy_bayes_head();
  const std::vector<double> x{0.2, 0.1, -0.4};
  const RngStream base(3, 0);
  const auto r = predict_mc(m, x, 1, base);
  RngStream draw = base.split(0);
  const auto s = sample_weights(m.variational().params, draw);
  EXPECT_EQ(r.mean_probs, softmax(forward_with_sample(m, x, s.theta)));
  for (double v : r.var_probs) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(predict_mc(m, x, 0, base), Error);
}

TEST(PredictMc, ForcedZeroSigmaCollapses) {
  HeadModel m = oracle::toy_bayes_head();
  m.variational().sigma_forced_zero = true;
  const std::vector<double> x{0.2, 0.1, -0.4};
  const auto r = predict_mc(m, x, 17, RngStream(1, 0));
  for (std::size_t d = 1; d < 17; ++d)
    EXPECT_TRUE(std::equal(r.sample_probs.row(d).begin(), r.sample_probs.row(d).end(),
                           r.sample_probs.row(0).begin()));
  for (double v : r.var_probs) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(r.mean_probs, softmax(mean_forward(m, x)));
  EXPECT_EQ(r.uncertainty_scalar, 0.0);
}

TEST(SummarizeDraws, InjectedDraws) {
  const auto r = summarize_draws(Matrix(2, 2, std::vector<double>{0.2, 0.8, 0.4, 0.6}));
  EXPECT_NEAR(r.mean_probs[0], 0.3, 1e-15);
  EXPECT_NEAR(r.mean_probs[1], 0.7, 1e-15);
  EXPECT_NEAR(r.var_probs[0], 0.01, 1e-15);
  EXPECT_NEAR(r.var_probs[1], 0.01, 1e-15);
  EXPECT_EQ(r.predicted_class, 1u);
  EXPECT_NEAR(r.uncertainty_scalar, 0.01, 1e-15);
  EXPECT_NEAR(r.ci_low[0], 0.205, 1e-15);   // percentiles 2.5 / 97.5 of {0.2, 0.4}
  EXPECT_NEAR(r.ci_high[0], 0.395, 1e-15);
}

TEST(PredictMc, Invariants) {
  const HeadModel m = oracle::toy_bayes_head(3, 6, 2, 21);
  RngStream inputs(8, 8);
  for (int trial = 0; trial < 25; ++trial) {
    const auto x = rng_normal(inputs, 3);
    const auto r = predict_mc(m, x, 40, RngStream(trial, 2));
    double total = 0.0;
    for (double p : r.mean_probs) total += p;
    EXPECT_NEAR(total, 1.0, 1e-9);
    for (std::size_t k = 0; k < 2; ++k) {
      double col = 0.0;
      for (std::size_t d = 0; d < 40; ++d) col += r.sample_probs(d, k);
      EXPECT_EQ(r.mean_probs[k], col / 40.0);
      EXPECT_GE(r.var_probs[k], 0.0);
      EXPECT_LE(r.ci_low[k], r.ci_high[k]);
    }
    EXPECT_NEAR(r.var_probs[0], r.var_probs[1], 1e-12);
    EXPECT_GE(r.entropy_bits, 0.0);
    EXPECT_LE(r.entropy_bits, 1.0);
    EXPECT_EQ(r.predicted_class,
              static_cast<std::size_t>(std::max_element(r.mean_probs.begin(), r.mean_probs.end()) -
                                       r.mean_probs.begin()));
    double mean_row_entropy = 0.0;
    for (std::size_t d = 0; d < 40; ++d) mean_row_entropy += entropy_bits(r.sample_probs.row(d));
    EXPECT_GE(r.entropy_bits, mean_row_entropy / 40.0 - 1e-12);
  }
}

TEST(PredictMc, WorkerCountDoesNotChangeResult) {
  const HeadModel m = oracle::toy_bayes_head(3, 8, 3, 5);
  const std::vector<double> x{1.0, -0.5, 0.25};
  const RngStream base(123, 7);
  const auto one = predict_mc(m, x, 50, base, 1);
  for (std::size_t w : {2u, 3u, 8u}) {
    const auto many = predict_mc(m, x, 50, base, w);
    EXPECT_EQ(one.sample_probs, many.sample_probs);
    EXPECT_EQ(one.mean_probs, many.mean_probs);
    EXPECT_EQ(one.var_probs, many.var_probs);
    EXPECT_EQ(one.ci_low, many.ci_low);
    EXPECT_EQ(one.entropy_bits, many.entropy_bits);
  }
}

TEST(EntropyBits, Examples) {
  EXPECT_EQ(entropy_bits(std::vector<double>{1.0, 0.0}), 0.0);
  EXPECT_EQ(entropy_bits(std::vector<double>{0.5, 0.5}), 1.0);
  EXPECT_NEAR(entropy_bits(std::vector<double>{0.9, 0.1}), 0.468996, 1e-6);
  EXPECT_NEAR(entropy_bits(std::vector<double>{0.25, 0.25, 0.25, 0.25}), 2.0, 1e-15);
  EXPECT_THROW(entropy_bits(std::vector<double>{0.5, 0.6}), Error);
  EXPECT_THROW(entropy_bits(std::vector<double>{}), Error);
}

TEST(CredibleInterval, Examples) {
  const std::vector<double> same(9, 0.37);
  EXPECT_EQ(credible_interval(same, 0.95), std::make_pair(0.37, 0.37));

  const std::vector<double> v{0.9, -1.0, 3.0, 0.2};
  EXPECT_EQ(credible_interval(v, 1.0), std::make_pair(-1.0, 3.0));

  std::vector<double> grid;
  for (int i = 0; i <= 100; ++i) grid.push_back(i / 100.0);
  const auto [lo, hi] = credible_interval(grid, 0.95);
  EXPECT_NEAR(lo, 0.025, 1e-12);
  EXPECT_NEAR(hi, 0.975, 1e-12);

  EXPECT_THROW(credible_interval(std::vector<double>{}, 0.9), Error);
  EXPECT_THROW(credible_interval(v, 0.0), Error);
}

TEST(CredibleInterval, BoundsAndMedian) {
  RngStream rng(4, 4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(1 + rng.uniform_index(30));
    for (double& x : s) x = rng.normal();
    const double level = 0.5 + 0.5 * rng.uniform();
    const auto [lo, hi] = credible_interval(s, level);
    std::vector<double> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_GE(lo, sorted.front());
    EXPECT_LE(hi, sorted.back());
    const double median = quantile_sorted(sorted, 0.5);
    EXPECT_LE(lo, median);
    EXPECT_GE(hi, median);
  }
}

namespace {

PredictiveResult with(double uncertainty, std::vector<double> mean) {
  PredictiveResult r;
  r.uncertainty_scalar = uncertainty;
  r.mean_probs = std::move(mean);
  return r;
}

}  // namespace

TEST(Referral, ReportedUncertaintyValues) {
  const ReferralThresholds t{0.01, 1.0};
  const auto low = referral_decision(with(0.00419, {0.0, 1.0}), t);
  EXPECT_EQ(low.action, ReferralAction::accept);
  const auto high = referral_decision(with(0.03669, {0.38, 0.62}), {0.01, 0.5});
  EXPECT_EQ(high.action, ReferralAction::refer);
  EXPECT_EQ(high.basis, ReferralBasis::uncertainty_scalar);
  EXPECT_EQ(high.threshold_used, 0.01);
}

TEST(Referral, ConfidenceCriterion) {
  const auto d = referral_decision(with(0.0, {0.02, 0.98}), {0.01, 0.99});
  EXPECT_EQ(d.action, ReferralAction::refer);
  EXPECT_EQ(d.basis, ReferralBasis::confidence);
  EXPECT_EQ(d.threshold_used, 0.99);
  for (double u : {0.0, 0.5})
    for (double c : {0.1, 1.0})
      EXPECT_EQ(referral_decision(with(0.0, {0.0, 1.0}), {u, c}).action, ReferralAction::accept);
}
