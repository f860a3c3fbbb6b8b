#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bayeshead/core_math.hpp"
#include "bayeshead/error.hpp"

namespace bayeshead {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

// Two-component zero-mean Gaussian mixture: a wide slab with probability
// mix_weight and a narrow spike otherwise.
struct SpikeSlabPrior {
  double mix_weight = 0.5;
  double slab_sigma = 1.0;
  double spike_sigma = 0.1;

  // mix_weight at 0 or 1 collapses to one Gaussian; accepted but reported.
  bool degenerate() const noexcept { return mix_weight <= 0.0 || mix_weight >= 1.0; }

  void validate() const {
    require(std::isfinite(mix_weight) && mix_weight >= 0.0 && mix_weight <= 1.0,
            ErrorKind::invalid_parameter, "prior mix_weight must lie in [0, 1]");
    require(std::isfinite(slab_sigma) && slab_sigma > 0.0, ErrorKind::invalid_parameter,
            "prior slab_sigma must be > 0");
    require(std::isfinite(spike_sigma) && spike_sigma > 0.0, ErrorKind::invalid_parameter,
            "prior spike_sigma must be > 0");
    require(spike_sigma <= slab_sigma, ErrorKind::invalid_parameter,
            "prior spike_sigma must not exceed slab_sigma");
  }

  friend bool operator==(const SpikeSlabPrior&, const SpikeSlabPrior&) = default;
};

// Mean-field Gaussian posterior over a flat parameter vector; sigma = softplus(rho).
struct VariationalParams {
  std::vector<double> mu;
  std::vector<double> rho;

  std::size_t size() const noexcept { return mu.size(); }

  void validate() const {
    require(mu.size() == rho.size(), ErrorKind::shape,
            "variational mu/rho lengths differ: " + std::to_string(mu.size()) + " vs " +
                std::to_string(rho.size()));
    require(all_finite(mu) && all_finite(rho), ErrorKind::invalid_parameter,
            "variational parameters must be finite");
  }

  friend bool operator==(const VariationalParams&, const VariationalParams&) = default;
};

struct WeightSample {
  std::vector<double> theta;
  std::vector<double> epsilon;
};

inline double gaussian_log_pdf(double x, double mean, double sigma) {
  require(sigma > 0.0, ErrorKind::invalid_parameter, "gaussian sigma must be > 0");
  const double z = (x - mean) / sigma;
  return -0.5 * z * z - std::log(sigma) - kHalfLog2Pi;
}

inline double spike_slab_log_pdf(double x, const SpikeSlabPrior& prior) {
  prior.validate();
  if (prior.mix_weight >= 1.0) return gaussian_log_pdf(x, 0.0, prior.slab_sigma);
  if (prior.mix_weight <= 0.0) return gaussian_log_pdf(x, 0.0, prior.spike_sigma);
  const double terms[2] = {std::log(prior.mix_weight) + gaussian_log_pdf(x, 0.0, prior.slab_sigma),
                           std::log1p(-prior.mix_weight) +
                               gaussian_log_pdf(x, 0.0, prior.spike_sigma)};
  return log_sum_exp(terms);
}

// d/dx log p(x) for the mixture: -x * (r_slab / s_slab^2 + r_spike / s_spike^2)
// where r are the component responsibilities at x.
inline double spike_slab_log_pdf_grad(double x, const SpikeSlabPrior& prior) {
  const double inv_slab = 1.0 / (prior.slab_sigma * prior.slab_sigma);
  const double inv_spike = 1.0 / (prior.spike_sigma * prior.spike_sigma);
  if (prior.mix_weight >= 1.0) return -x * inv_slab;
  if (prior.mix_weight <= 0.0) return -x * inv_spike;
  const double a = std::log(prior.mix_weight) + gaussian_log_pdf(x, 0.0, prior.slab_sigma);
  const double b = std::log1p(-prior.mix_weight) + gaussian_log_pdf(x, 0.0, prior.spike_sigma);
  const double slab_resp = sigmoid(a - b);
  return -x * (slab_resp * inv_slab + (1.0 - slab_resp) * inv_spike);
}

// theta = mu + softplus(rho) * epsilon for a caller-supplied noise vector.
inline WeightSample sample_weights_with_noise(const VariationalParams& params,
                                              std::vector<double> epsilon) {
  params.validate();
  require(epsilon.size() == params.size(), ErrorKind::shape, "noise length mismatch");
  WeightSample s;
  s.theta.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    s.theta[i] = params.mu[i] + softplus(params.rho[i]) * epsilon[i];
  s.epsilon = std::move(epsilon);
  return s;
}

inline WeightSample sample_weights(const VariationalParams& params, RngStream& stream) {
  std::vector<double> eps(params.size());
  for (double& e : eps) e = stream.normal();
  return sample_weights_with_noise(params, std::move(eps));
}

// Single-sample KL estimate log q(theta) - log p(theta), summed over weights.
// With epsilon held fixed, log q(theta | mu, sigma) = -log sigma - eps^2/2 - log sqrt(2 pi).
inline double kl_single_sample(const VariationalParams& params, const WeightSample& sample,
                               const SpikeSlabPrior& prior) {
  double total = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double sigma = softplus(params.rho[i]);
    const double log_q = gaussian_log_pdf(sample.theta[i], params.mu[i], sigma);
    total += log_q - spike_slab_log_pdf(sample.theta[i], prior);
  }
  return total;
}

// Pathwise gradient of kl_single_sample with respect to (mu, rho), epsilon fixed.
//   d/dmu  = -g(theta)
//   d/drho = (-1/sigma - g(theta) * eps) * sigmoid(rho)
// where g = d log p / d theta. log q contributes nothing to d/dmu once theta
// moves with mu.
inline void kl_single_sample_grad(const VariationalParams& params, const WeightSample& sample,
                                  const SpikeSlabPrior& prior, double scale,
                                  std::span<double> grad_mu, std::span<double> grad_rho) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double sigma = softplus(params.rho[i]);
    const double g = spike_slab_log_pdf_grad(sample.theta[i], prior);
    grad_mu[i] += scale * (-g);
    grad_rho[i] += scale * (-1.0 / sigma - g * sample.epsilon[i]) * sigmoid(params.rho[i]);
  }
}

// Monte Carlo KL[q || p] = mean over draws of log q(theta_s) - log p(theta_s).
// Unbiased; individual estimates may be negative.
inline double mc_kl(const VariationalParams& params, const SpikeSlabPrior& prior,
                    std::size_t n_samples, RngStream& stream) {
  require(n_samples >= 1, ErrorKind::invalid_input, "mc_kl needs n_samples >= 1");
  params.validate();
  prior.validate();
  double total = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s)
    total += kl_single_sample(params, sample_weights(params, stream), prior);
  return total / static_cast<double>(n_samples);
}

// Closed-form KL between univariate Gaussians; used as a test oracle.
inline double gaussian_kl(double mean_q, double sigma_q, double mean_p, double sigma_p) {
  const double d = mean_q - mean_p;
  return std::log(sigma_p / sigma_q) + (sigma_q * sigma_q + d * d) / (2.0 * sigma_p * sigma_p) -
         0.5;
}

}  // namespace bayeshead
