#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bayeshead/core_math.hpp"
#include "bayeshead/error.hpp"
#include "bayeshead/network.hpp"
#include "bayeshead/parallel.hpp"

namespace bayeshead {

inline constexpr std::size_t kDefaultMcSamples = 50;
inline constexpr double kDefaultCredibleLevel = 0.95;

// Posterior-predictive summary for one input. ci_low/ci_high are empirical
// percentile intervals of the per-draw class probabilities.
struct PredictiveResult {
  Matrix sample_probs;  // n x n_classes
  std::vector<double> mean_probs;
  std::vector<double> var_probs;
  double entropy_bits = 0.0;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  double ci_level = kDefaultCredibleLevel;
  std::size_t predicted_class = 0;
  double uncertainty_scalar = 0.0;  // max over classes of var_probs
};

enum class ReferralAction { accept, refer };
enum class ReferralBasis { uncertainty_scalar, confidence };

inline const char* to_string(ReferralAction a) { return a == ReferralAction::accept ? "accept" : "refer"; }
inline const char* to_string(ReferralBasis b) {
  return b == ReferralBasis::uncertainty_scalar ? "uncertainty_scalar" : "confidence";
}

struct ReferralDecision {
  ReferralAction action = ReferralAction::accept;
  double threshold_used = 0.0;
  ReferralBasis basis = ReferralBasis::uncertainty_scalar;
};

struct ReferralThresholds {
  double uncertainty = 0.01;
  double confidence = 0.99;
};

// Shannon entropy in bits, 0 log 0 = 0.
inline double entropy_bits(std::span<const double> probs) {
  require(!probs.empty(), ErrorKind::invalid_input, "entropy of empty vector");
  double total = 0.0;
  for (double p : probs) {
    require(std::isfinite(p) && p >= 0.0, ErrorKind::invalid_input,
            "entropy needs nonnegative probabilities");
    total += p;
  }
  require(std::abs(total - 1.0) <= 1e-6, ErrorKind::invalid_input,
          "probabilities sum to " + std::to_string(total) + ", not 1");
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log2(p);
  return std::max(h, 0.0);
}

// Linear interpolation between order statistics at position q * (m - 1).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline std::pair<double, double> credible_interval(std::span<const double> samples, double level) {
  require(!samples.empty(), ErrorKind::invalid_input, "credible interval of empty sample");
  require(level > 0.0 && level <= 1.0, ErrorKind::invalid_input, "level must lie in (0, 1]");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double tail = (1.0 - level) / 2.0;
  return {quantile_sorted(sorted, tail), quantile_sorted(sorted, 1.0 - tail)};
}

// Predictive mean and population (1/n) variance of per-draw probabilities,
// accumulated in draw order.
inline PredictiveResult summarize_draws(Matrix sample_probs, double ci_level = kDefaultCredibleLevel) {
  const std::size_t n = sample_probs.rows();
  const std::size_t c = sample_probs.cols();
  require(n >= 1 && c >= 1, ErrorKind::invalid_input, "need at least one draw");
  PredictiveResult r;
  r.ci_level = ci_level;
  r.mean_probs.assign(c, 0.0);
  r.var_probs.assign(c, 0.0);
  for (std::size_t d = 0; d < n; ++d)
    for (std::size_t k = 0; k < c; ++k) r.mean_probs[k] += sample_probs(d, k);
  for (double& m : r.mean_probs) m /= static_cast<double>(n);
  for (std::size_t d = 0; d < n; ++d)
    for (std::size_t k = 0; k < c; ++k) {
      const double dev = sample_probs(d, k) - r.mean_probs[k];
      r.var_probs[k] += dev * dev;
    }
  for (double& v : r.var_probs) v /= static_cast<double>(n);

  r.ci_low.resize(c);
  r.ci_high.resize(c);
  std::vector<double> column(n);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t d = 0; d < n; ++d) column[d] = sample_probs(d, k);
    std::tie(r.ci_low[k], r.ci_high[k]) = credible_interval(column, ci_level);
  }
  r.entropy_bits = entropy_bits(r.mean_probs);
  r.predicted_class = static_cast<std::size_t>(
      std::max_element(r.mean_probs.begin(), r.mean_probs.end()) - r.mean_probs.begin());
  r.uncertainty_scalar = *std::max_element(r.var_probs.begin(), r.var_probs.end());
  r.sample_probs = std::move(sample_probs);
  return r;
}

// Monte Carlo posterior predictive over n draws. Draw d uses stream.split(d),
// so the result is identical for any worker count.
inline PredictiveResult predict_mc(const HeadModel& m, std::span<const double> input, std::size_t n,
                                   const RngStream& stream, std::size_t workers = 1,
                                   double ci_level = kDefaultCredibleLevel) {
  require(n >= 1, ErrorKind::invalid_input, "predict_mc needs n >= 1");
  const auto& v = m.variational();
  Matrix probs(n, m.n_classes);
  if (v.sigma_forced_zero) {
    // The collapsed posterior has a single support point; every draw is mu.
    const auto p = softmax(forward_with_sample(m, input, v.params.mu));
    for (std::size_t d = 0; d < n; ++d) std::copy(p.begin(), p.end(), probs.row(d).begin());
    PredictiveResult r = summarize_draws(probs, ci_level);
    r.mean_probs = p;
    std::fill(r.var_probs.begin(), r.var_probs.end(), 0.0);
    r.entropy_bits = entropy_bits(p);
    r.predicted_class =
        static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    r.uncertainty_scalar = 0.0;
    return r;
  }
  parallel_for(n, workers, [&](std::size_t d) {
    RngStream draw_stream = stream.split(d);
    const WeightSample s = sample_weights(v.params, draw_stream);
    const auto p = softmax(forward_with_sample(m, input, s.theta));
    std::copy(p.begin(), p.end(), probs.row(d).begin());
  });
  return summarize_draws(std::move(probs), ci_level);
}

// Single deterministic pass, reported as a one-draw predictive with zero variance.
inline PredictiveResult predict_point(const HeadModel& m, std::span<const double> input,
                                      double ci_level = kDefaultCredibleLevel) {
  const auto p = softmax(mean_forward(m, input));
  Matrix probs(1, p.size(), p);
  return summarize_draws(std::move(probs), ci_level);
}

// Baseline heads take the point path; Bayesian heads the Monte Carlo path.
inline PredictiveResult predict(const HeadModel& m, std::span<const double> input, std::size_t n,
                                const RngStream& stream, std::size_t workers = 1,
                                double ci_level = kDefaultCredibleLevel) {
  if (m.is_bayesian()) return predict_mc(m, input, n, stream, workers, ci_level);
  return predict_point(m, input, ci_level);
}

// Refer when the spread is too large or the top class probability too small.
inline ReferralDecision referral_decision(const PredictiveResult& result,
                                          const ReferralThresholds& thresholds) {
  const double confidence = *std::max_element(result.mean_probs.begin(), result.mean_probs.end());
  if (result.uncertainty_scalar > thresholds.uncertainty)
    return {ReferralAction::refer, thresholds.uncertainty, ReferralBasis::uncertainty_scalar};
  if (confidence < thresholds.confidence)
    return {ReferralAction::refer, thresholds.confidence, ReferralBasis::confidence};
  return {ReferralAction::accept, thresholds.uncertainty, ReferralBasis::uncertainty_scalar};
}

}  // namespace bayeshead
