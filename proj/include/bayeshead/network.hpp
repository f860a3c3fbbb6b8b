#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "bayeshead/core_math.hpp"
#include "bayeshead/dataset.hpp"
#include "bayeshead/distributions.hpp"
#include "bayeshead/error.hpp"

namespace bayeshead {

enum class Activation { relu, identity };

// y = activation(W^T x + b), W stored in_dim x out_dim row-major.
struct DenseLayer {
  Matrix weights;
  std::vector<double> bias;
  Activation activation = Activation::identity;

  std::size_t in_dim() const noexcept { return weights.rows(); }
  std::size_t out_dim() const noexcept { return weights.cols(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Output layer whose flattened weights-then-bias vector carries a mean-field
// posterior. sigma_forced_zero collapses the posterior onto mu.
struct VariationalDenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  VariationalParams params;
  SpikeSlabPrior prior;
  bool sigma_forced_zero = false;

  std::size_t weight_count() const noexcept { return in_dim * out_dim; }
  std::size_t param_count() const noexcept { return in_dim * out_dim + out_dim; }

  friend bool operator==(const VariationalDenseLayer&, const VariationalDenseLayer&) = default;
};

enum class Variant { bayesian, baseline };

inline const char* to_string(Variant v) { return v == Variant::bayesian ? "bayesian" : "baseline"; }

struct HeadModel {
  DenseLayer hidden;
  std::variant<VariationalDenseLayer, DenseLayer> output;
  std::size_t n_classes = 0;

  bool is_bayesian() const noexcept { return std::holds_alternative<VariationalDenseLayer>(output); }
  Variant variant() const noexcept { return is_bayesian() ? Variant::bayesian : Variant::baseline; }
  std::size_t feature_dim() const noexcept { return hidden.in_dim(); }
  std::size_t hidden_units() const noexcept { return hidden.out_dim(); }

  const VariationalDenseLayer& variational() const {
    require(is_bayesian(), ErrorKind::wrong_variant, "model is the baseline variant");
    return std::get<VariationalDenseLayer>(output);
  }
  VariationalDenseLayer& variational() {
    require(is_bayesian(), ErrorKind::wrong_variant, "model is the baseline variant");
    return std::get<VariationalDenseLayer>(output);
  }
  const DenseLayer& point_output() const {
    require(!is_bayesian(), ErrorKind::wrong_variant, "model is the bayesian variant");
    return std::get<DenseLayer>(output);
  }
  DenseLayer& point_output() {
    require(!is_bayesian(), ErrorKind::wrong_variant, "model is the bayesian variant");
    return std::get<DenseLayer>(output);
  }

  void validate() const {
    require(hidden.bias.size() == hidden.out_dim(), ErrorKind::shape, "hidden bias length");
    if (is_bayesian()) {
      const auto& v = variational();
      v.params.validate();
      v.prior.validate();
      require(v.in_dim == hidden.out_dim() && v.out_dim == n_classes, ErrorKind::shape,
              "variational layer dimensions do not chain");
      require(v.params.size() == v.param_count(), ErrorKind::shape,
              "variational parameter length " + std::to_string(v.params.size()) + " != " +
                  std::to_string(v.param_count()));
    } else {
      const auto& d = point_output();
      require(d.in_dim() == hidden.out_dim() && d.out_dim() == n_classes &&
                  d.bias.size() == n_classes,
              ErrorKind::shape, "output layer dimensions do not chain");
    }
  }

  friend bool operator==(const HeadModel&, const HeadModel&) = default;
};

struct InitOptions {
  std::size_t hidden_units = 32;
  double output_mean_sigma = 0.1;  // mu_0 ~ N(0, 0.1^2)
  double initial_sigma = 0.05;     // rho_0 = softplus^-1(0.05)
  SpikeSlabPrior prior;
  bool sigma_forced_zero = false;
};

// Hidden weights ~ N(0, 2/in) (He), hidden bias 0. Output weights and bias
// ~ N(0, output_mean_sigma^2). Both variants consume the stream identically,
// so the same seed gives the baseline the Bayesian head's mean weights.
inline HeadModel init_model(std::size_t feature_dim, std::size_t n_classes, Variant variant,
                            const InitOptions& opts, RngStream& stream) {
  require(feature_dim >= 1 && n_classes >= 2 && opts.hidden_units >= 1, ErrorKind::invalid_input,
          "model needs feature_dim >= 1, n_classes >= 2, hidden_units >= 1");
  HeadModel m;
  m.n_classes = n_classes;
  m.hidden.weights = Matrix(feature_dim, opts.hidden_units);
  m.hidden.bias.assign(opts.hidden_units, 0.0);
  m.hidden.activation = Activation::relu;
  const double he = std::sqrt(2.0 / static_cast<double>(feature_dim));
  for (double& w : m.hidden.weights.data()) w = he * stream.normal();

  const std::size_t count = opts.hidden_units * n_classes + n_classes;
  std::vector<double> mean(count);
  for (double& w : mean) w = opts.output_mean_sigma * stream.normal();

  if (variant == Variant::bayesian) {
    VariationalDenseLayer v;
    v.in_dim = opts.hidden_units;
    v.out_dim = n_classes;
    v.params.mu = std::move(mean);
    v.params.rho.assign(count, softplus_inverse(opts.initial_sigma));
    v.prior = opts.prior;
    v.sigma_forced_zero = opts.sigma_forced_zero;
    m.output = std::move(v);
  } else {
    DenseLayer d;
    d.activation = Activation::identity;
    const std::size_t wc = opts.hidden_units * n_classes;
    d.weights = Matrix(opts.hidden_units, n_classes,
                       std::vector<double>(mean.begin(), mean.begin() + static_cast<long>(wc)));
    d.bias.assign(mean.begin() + static_cast<long>(wc), mean.end());
    m.output = std::move(d);
  }
  return m;
}

namespace detail {

inline void affine(std::span<const double> weights, std::span<const double> bias,
                   std::span<const double> x, Activation act, std::span<double> out) {
  const std::size_t n_out = bias.size();
  for (std::size_t j = 0; j < n_out; ++j) out[j] = bias[j];
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double* row = weights.data() + i * n_out;
    for (std::size_t j = 0; j < n_out; ++j) out[j] += row[j] * xi;
  }
  if (act == Activation::relu)
    for (std::size_t j = 0; j < n_out; ++j) out[j] = out[j] > 0.0 ? out[j] : 0.0;
}

// Flat weights-then-bias view of whichever output layer the model holds,
// with theta substituted for the Bayesian variant.
struct OutputView {
  std::span<const double> weights;
  std::span<const double> bias;
};

inline OutputView output_view(const HeadModel& m, std::span<const double> theta) {
  if (m.is_bayesian()) {
    const auto wc = m.variational().weight_count();
    return {theta.subspan(0, wc), theta.subspan(wc)};
  }
  const auto& d = m.point_output();
  return {d.weights.data(), d.bias};
}

struct ForwardCache {
  std::vector<double> hidden;  // post-activation
  std::vector<double> logits;
};

inline void forward_into(const HeadModel& m, std::span<const double> x,
                         std::span<const double> theta, ForwardCache& cache) {
  cache.hidden.resize(m.hidden_units());
  cache.logits.resize(m.n_classes);
  affine(m.hidden.weights.data(), m.hidden.bias, x, m.hidden.activation, cache.hidden);
  const auto out = output_view(m, theta);
  affine(out.weights, out.bias, cache.hidden, Activation::identity, cache.logits);
}

}  // namespace detail

inline std::vector<double> dense_forward(const DenseLayer& layer, std::span<const double> input) {
  require(input.size() == layer.in_dim(), ErrorKind::shape,
          "dense input length " + std::to_string(input.size()) + " != " +
              std::to_string(layer.in_dim()));
  require(layer.bias.size() == layer.out_dim(), ErrorKind::shape, "dense bias length");
  std::vector<double> out(layer.out_dim());
  detail::affine(layer.weights.data(), layer.bias, input, layer.activation, out);
  return out;
}

// One posterior draw of the output layer. A forced-zero posterior returns mu
// with zero noise and leaves the stream untouched.
inline WeightSample draw_output_sample(const HeadModel& m, RngStream& stream) {
  const auto& v = m.variational();
  if (v.sigma_forced_zero) return {v.params.mu, std::vector<double>(v.params.size(), 0.0)};
  return sample_weights(v.params, stream);
}

// Logits for a given output-layer sample (ignored for the baseline).
inline std::vector<double> forward_with_sample(const HeadModel& m, std::span<const double> input,
                                               std::span<const double> theta) {
  require(input.size() == m.feature_dim(), ErrorKind::shape,
          "input length " + std::to_string(input.size()) + " != feature_dim " +
              std::to_string(m.feature_dim()));
  if (m.is_bayesian())
    require(theta.size() == m.variational().param_count(), ErrorKind::shape, "sample length");
  detail::ForwardCache cache;
  detail::forward_into(m, input, theta, cache);
  return cache.logits;
}

inline std::pair<std::vector<double>, WeightSample> bayes_forward(const HeadModel& m,
                                                                  std::span<const double> input,
                                                                  RngStream& stream) {
  WeightSample sample = draw_output_sample(m, stream);
  auto logits = forward_with_sample(m, input, sample.theta);
  return {std::move(logits), std::move(sample)};
}

// Deterministic pass: point weights for the baseline, posterior mean otherwise.
inline std::vector<double> mean_forward(const HeadModel& m, std::span<const double> input) {
  if (m.is_bayesian()) return forward_with_sample(m, input, m.variational().params.mu);
  return forward_with_sample(m, input, {});
}

// Gradients of  sum_i NLL_i + kl_weight * KL  over a batch, one vector per
// trainable group. output_weights is the flat weights-then-bias layout (mu for
// the Bayesian head); output_rho is empty for the baseline.
struct GradientSet {
  std::vector<double> hidden_weights;
  std::vector<double> hidden_bias;
  std::vector<double> output_weights;
  std::vector<double> output_rho;
};

struct LossTerms {
  double loss = 0.0;
  double nll = 0.0;
  double kl = 0.0;
  std::size_t clamped = 0;  // examples whose class probability fell below 1e-300
};

inline constexpr double kMinProbability = 1e-300;

namespace detail {

inline void check_samples(const HeadModel& m, const BatchView& batch,
                          std::span<const WeightSample> samples) {
  if (!m.is_bayesian()) return;
  require(samples.size() == 1 || samples.size() == batch.size(), ErrorKind::invalid_input,
          "need one shared weight sample or one per batch row, got " +
              std::to_string(samples.size()));
  const auto n = m.variational().param_count();
  for (const auto& s : samples)
    require(s.theta.size() == n && s.epsilon.size() == n, ErrorKind::shape, "sample length");
}

// Forward and (optionally) backward over a batch in fixed row order.
inline LossTerms run_batch(const HeadModel& m, const BatchView& batch,
                           std::span<const WeightSample> samples, double kl_weight,
                           GradientSet* grads) {
  require(batch.size() >= 1, ErrorKind::invalid_input, "empty batch");
  check_samples(m, batch, samples);
  const std::size_t d_in = m.feature_dim();
  const std::size_t h_dim = m.hidden_units();
  const std::size_t c = m.n_classes;
  const bool bayes = m.is_bayesian();
  const std::size_t out_count = h_dim * c + c;

  std::vector<double> theta_grad_shared;
  std::vector<double> rho_grad;
  if (grads) {
    grads->hidden_weights.assign(d_in * h_dim, 0.0);
    grads->hidden_bias.assign(h_dim, 0.0);
    grads->output_weights.assign(out_count, 0.0);
    grads->output_rho.assign(bayes ? out_count : 0, 0.0);
  }

  LossTerms terms;
  ForwardCache cache;
  std::vector<double> dlogits(c), dhidden(h_dim), theta_grad(out_count);
  const bool per_example = bayes && samples.size() > 1;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto x = batch.features(i);
    require(x.size() == d_in, ErrorKind::shape,
            "row length " + std::to_string(x.size()) + " != feature_dim " + std::to_string(d_in));
    const int y = batch.label(i);
    require(y >= 0 && static_cast<std::size_t>(y) < c, ErrorKind::schema, "label out of range");
    const WeightSample* sample = bayes ? &samples[per_example ? i : 0] : nullptr;
    forward_into(m, x, sample ? std::span<const double>(sample->theta) : std::span<const double>{},
                 cache);
    if (!all_finite(cache.logits))
      fail(ErrorKind::numeric, "non-finite loss at batch index " + std::to_string(i) +
                                   " (dataset row " + std::to_string(batch.rows[i]) + ")");
    const double lse = log_sum_exp(cache.logits);
    double log_p = cache.logits[static_cast<std::size_t>(y)] - lse;
    if (log_p < std::log(kMinProbability)) {
      log_p = std::log(kMinProbability);
      ++terms.clamped;
    }
    terms.nll -= log_p;
    if (!grads) continue;

    for (std::size_t k = 0; k < c; ++k) dlogits[k] = std::exp(cache.logits[k] - lse);
    dlogits[static_cast<std::size_t>(y)] -= 1.0;

    const auto out = output_view(m, sample ? std::span<const double>(sample->theta)
                                           : std::span<const double>{});
    std::fill(theta_grad.begin(), theta_grad.end(), 0.0);
    for (std::size_t j = 0; j < h_dim; ++j) {
      const double hj = cache.hidden[j];
      double back = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        theta_grad[j * c + k] = hj * dlogits[k];
        back += out.weights[j * c + k] * dlogits[k];
      }
      dhidden[j] = cache.hidden[j] > 0.0 ? back : 0.0;
    }
    for (std::size_t k = 0; k < c; ++k) theta_grad[h_dim * c + k] = dlogits[k];

    for (std::size_t a = 0; a < d_in; ++a) {
      const double xa = x[a];
      for (std::size_t j = 0; j < h_dim; ++j) grads->hidden_weights[a * h_dim + j] += xa * dhidden[j];
    }
    for (std::size_t j = 0; j < h_dim; ++j) grads->hidden_bias[j] += dhidden[j];
    for (std::size_t p = 0; p < out_count; ++p) grads->output_weights[p] += theta_grad[p];

    if (bayes && !m.variational().sigma_forced_zero) {
      const auto& rho = m.variational().params.rho;
      for (std::size_t p = 0; p < out_count; ++p)
        grads->output_rho[p] += theta_grad[p] * sample->epsilon[p] * sigmoid(rho[p]);
    }
  }

  // A point-mass posterior has no finite KL, so the term is dropped when
  // sigma is forced to zero.
  if (bayes && !m.variational().sigma_forced_zero) {
    const auto& v = m.variational();
    const double share = 1.0 / static_cast<double>(samples.size());
    for (const auto& s : samples) {
      terms.kl += share * kl_single_sample(v.params, s, v.prior);
      if (grads && kl_weight != 0.0)
        kl_single_sample_grad(v.params, s, v.prior, kl_weight * share, grads->output_weights,
                              grads->output_rho);
    }
  }
  terms.loss = terms.nll + kl_weight * terms.kl;
  if (!std::isfinite(terms.loss))
    fail(ErrorKind::numeric, "non-finite batch loss (batch of " + std::to_string(batch.size()) +
                                 " rows starting at dataset row " +
                                 std::to_string(batch.rows[0]) + ")");
  return terms;
}

}  // namespace detail

inline GradientSet backward(const HeadModel& m, const BatchView& batch,
                            std::span<const WeightSample> samples, double kl_weight) {
  GradientSet g;
  detail::run_batch(m, batch, samples, kl_weight, &g);
  return g;
}

}  // namespace bayeshead
