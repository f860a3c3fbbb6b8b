#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iostream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bayeshead/core_math.hpp"
#include "bayeshead/dataset.hpp"
#include "bayeshead/distributions.hpp"
#include "bayeshead/error.hpp"
#include "bayeshead/inference.hpp"
#include "bayeshead/network.hpp"

namespace bayeshead {

// How the KL term is scaled inside each minibatch step. per_batch spreads one
// full KL over an epoch's batches; per_dataset weights it by 1/N; none drops it.
enum class KlWeightMode { per_batch, per_dataset, none };
enum class BestMetric { val_nll, val_accuracy };

inline const char* to_string(KlWeightMode m) {
  switch (m) {
    case KlWeightMode::per_batch: return "per_batch";
    case KlWeightMode::per_dataset: return "per_dataset";
    case KlWeightMode::none: return "none";
  }
  return "per_batch";
}
inline const char* to_string(BestMetric m) {
  return m == BestMetric::val_nll ? "val_nll" : "val_accuracy";
}

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 150;
  std::size_t mc_samples_predict = kDefaultMcSamples;
  std::size_t mc_samples_val = 10;
  KlWeightMode kl_weight_mode = KlWeightMode::per_batch;
  std::uint64_t seed = 0;
  SpikeSlabPrior prior;
  BestMetric early_best_metric = BestMetric::val_nll;
  std::size_t hidden_units = 32;
  double init_mean_sigma = 0.1;
  double init_sigma = 0.05;
  double rmsprop_decay = 0.9;
  double rmsprop_epsilon = 1e-7;
  bool per_example_sampling = false;
  bool force_zero_sigma = false;

  void validate() const {
    require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::invalid_parameter,
            "learning_rate must be > 0");
    require(batch_size >= 1, ErrorKind::invalid_parameter, "batch_size must be >= 1");
    require(mc_samples_predict >= 1 && mc_samples_val >= 1, ErrorKind::invalid_parameter,
            "Monte Carlo sample counts must be >= 1");
    require(rmsprop_decay >= 0.0 && rmsprop_decay < 1.0, ErrorKind::invalid_parameter,
            "rmsprop_decay must lie in [0, 1)");
    require(rmsprop_epsilon > 0.0, ErrorKind::invalid_parameter, "rmsprop_epsilon must be > 0");
    require(init_sigma > 0.0 && init_mean_sigma >= 0.0 && hidden_units >= 1,
            ErrorKind::invalid_parameter, "invalid initialization settings");
    prior.validate();
  }
};

// Fixed stream ids per training role.
namespace streams {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t shuffle = 2;
inline constexpr std::uint64_t weight_sample = 3;
inline constexpr std::uint64_t validation = 4;
}  // namespace streams

struct RmspropState {
  std::vector<std::vector<double>> accum;  // one vector per parameter group
  double decay = 0.9;
  double epsilon_stab = 1e-7;
};

// accum <- decay * accum + (1 - decay) g^2 ;  param <- param - lr g / (sqrt(accum) + eps)
inline void rmsprop_step(std::span<double> params, std::span<const double> grads,
                         std::span<double> accum, double decay, double epsilon_stab, double lr,
                         const std::string& group = "parameters") {
  require(params.size() == grads.size() && params.size() == accum.size(), ErrorKind::shape,
          "rmsprop shapes differ for " + group);
  for (std::size_t i = 0; i < grads.size(); ++i)
    require(std::isfinite(grads[i]), ErrorKind::numeric, "non-finite gradient in " + group);
  for (std::size_t i = 0; i < params.size(); ++i) {
    accum[i] = decay * accum[i] + (1.0 - decay) * grads[i] * grads[i];
    params[i] -= lr * grads[i] / (std::sqrt(accum[i]) + epsilon_stab);
  }
}

// Applies one update to every trainable group of the model. Group order:
// hidden weights, hidden bias, output weights (mu), output rho.
inline void apply_rmsprop(HeadModel& m, const GradientSet& g, RmspropState& state, double lr) {
  const bool bayes = m.is_bayesian();
  const std::size_t groups = bayes ? 4 : 3;
  if (state.accum.empty()) {
    state.accum.resize(groups);
    state.accum[0].assign(g.hidden_weights.size(), 0.0);
    state.accum[1].assign(g.hidden_bias.size(), 0.0);
    state.accum[2].assign(g.output_weights.size(), 0.0);
    if (bayes) state.accum[3].assign(g.output_rho.size(), 0.0);
  }
  require(state.accum.size() == groups, ErrorKind::shape, "optimizer state does not match model");
  rmsprop_step(m.hidden.weights.data(), g.hidden_weights, state.accum[0], state.decay,
               state.epsilon_stab, lr, "hidden_weights");
  rmsprop_step(m.hidden.bias, g.hidden_bias, state.accum[1], state.decay, state.epsilon_stab, lr,
               "hidden_bias");
  if (bayes) {
    auto& v = m.variational();
    rmsprop_step(v.params.mu, g.output_weights, state.accum[2], state.decay, state.epsilon_stab,
                 lr, "output_mu");
    rmsprop_step(v.params.rho, g.output_rho, state.accum[3], state.decay, state.epsilon_stab, lr,
                 "output_rho");
  } else {
    // The point layer stores weights and bias apart; the flat gradient and
    // accumulator are split at the same place.
    auto& d = m.point_output();
    const std::size_t wc = d.weights.data().size();
    std::span<const double> gw(g.output_weights);
    std::span<double> acc(state.accum[2]);
    rmsprop_step(d.weights.data(), gw.subspan(0, wc), acc.subspan(0, wc), state.decay,
                 state.epsilon_stab, lr, "output_weights");
    rmsprop_step(d.bias, gw.subspan(wc), acc.subspan(wc), state.decay, state.epsilon_stab, lr,
                 "output_bias");
  }
}

// loss = nll + kl_weight * kl over one batch, nll summed over rows.
inline LossTerms elbo_loss(const HeadModel& m, const BatchView& batch,
                           std::span<const WeightSample> samples, double kl_weight) {
  return detail::run_batch(m, batch, samples, kl_weight, nullptr);
}

inline LossTerms elbo_loss(const HeadModel& m, const BatchView& batch, RngStream& stream,
                           double kl_weight) {
  if (!m.is_bayesian()) return detail::run_batch(m, batch, {}, kl_weight, nullptr);
  const WeightSample s = draw_output_sample(m, stream);
  return detail::run_batch(m, batch, std::span<const WeightSample>(&s, 1), kl_weight, nullptr);
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // epoch objective / N
  double train_nll = 0.0;   // summed NLL / N
  double train_kl = 0.0;    // mean single-draw KL estimate over the epoch's steps
  double val_accuracy = 0.0;
  double val_nll = 0.0;     // mean -log predictive probability of the true class

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> best_epoch;
  std::size_t clamped_probabilities = 0;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct ValidationMetrics {
  double accuracy = 0.0;
  double nll = 0.0;
};

inline double kl_weight_for(KlWeightMode mode, std::size_t n_rows, std::size_t n_batches) {
  switch (mode) {
    case KlWeightMode::per_batch: return 1.0 / static_cast<double>(n_batches);
    case KlWeightMode::per_dataset: return 1.0 / static_cast<double>(n_rows);
    case KlWeightMode::none: return 0.0;
  }
  return 0.0;
}

// Validation uses the same stream every epoch (common random numbers), so
// epochs are compared on identical posterior draws.
inline ValidationMetrics validation_metrics(const HeadModel& m, const FeatureDataset& val,
                                            const TrainConfig& config, std::size_t workers = 1) {
  ValidationMetrics out;
  if (val.empty()) return out;
  const RngStream base(config.seed, streams::validation);
  std::size_t correct = 0;
  double nll = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto r = predict(m, val.features.row(i), config.mc_samples_val, base.split(i), workers);
    const auto y = static_cast<std::size_t>(val.labels[i]);
    if (r.predicted_class == y) ++correct;
    nll -= std::log(std::max(r.mean_probs[y], kMinProbability));
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(val.size());
  out.nll = nll / static_cast<double>(val.size());
  return out;
}

struct TrainResult {
  HeadModel model;
  TrainHistory history;
};

namespace detail {

inline bool improves(BestMetric metric, const EpochRecord& candidate, const EpochRecord& best) {
  if (metric == BestMetric::val_nll) return candidate.val_nll < best.val_nll;
  return candidate.val_accuracy > best.val_accuracy;
}

inline TrainResult train(const FeatureDataset& data, const FeatureDataset& val,
                         const TrainConfig& config, Variant variant) {
  config.validate();
  require(!data.empty(), ErrorKind::invalid_input, "training dataset is empty");
  data.validate();
  require(data.n_classes >= 2, ErrorKind::invalid_input, "training needs at least two classes");
  if (!val.empty()) {
    val.validate();
    require(val.dim() == data.dim(), ErrorKind::shape,
            "validation dim " + std::to_string(val.dim()) + " != training dim " +
                std::to_string(data.dim()));
    require(val.n_classes <= data.n_classes, ErrorKind::schema,
            "validation set has more classes than training set");
  }

  InitOptions init;
  init.hidden_units = config.hidden_units;
  init.output_mean_sigma = config.init_mean_sigma;
  init.initial_sigma = config.init_sigma;
  init.prior = config.prior;
  init.sigma_forced_zero = config.force_zero_sigma;
  RngStream init_stream(config.seed, streams::init);
  TrainResult result{init_model(data.dim(), data.n_classes, variant, init, init_stream), {}};
  HeadModel& model = result.model;
  if (config.epochs == 0) return result;

  const std::size_t n = data.size();
  const std::size_t n_batches = (n + config.batch_size - 1) / config.batch_size;
  const double kl_weight =
      variant == Variant::bayesian ? kl_weight_for(config.kl_weight_mode, n, n_batches) : 0.0;
  RmspropState opt{{}, config.rmsprop_decay, config.rmsprop_epsilon};
  const RngStream shuffle_base(config.seed, streams::shuffle);
  const RngStream sample_base(config.seed, streams::weight_sample);
  // Validation falls back to the training rows when no held-out set is given.
  const FeatureDataset& checkpoint_set = val.empty() ? data : val;

  HeadModel best_model = model;
  std::size_t step = 0;
  std::vector<WeightSample> samples;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    RngStream shuffle_stream = shuffle_base.split(epoch);
    const auto order = permutation(n, shuffle_stream);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t b = 0; b < n_batches; ++b, ++step) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(n, begin + config.batch_size);
      const BatchView batch{data, std::span<const std::size_t>(order).subspan(begin, end - begin)};
      samples.clear();
      if (model.is_bayesian()) {
        RngStream sample_stream = sample_base.split(step);
        const std::size_t count = config.per_example_sampling ? batch.size() : 1;
        for (std::size_t s = 0; s < count; ++s)
          samples.push_back(draw_output_sample(model, sample_stream));
      }
      GradientSet grads;
      LossTerms terms;
      try {
        terms = detail::run_batch(model, batch, samples, kl_weight, &grads);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric) throw;
        fail(ErrorKind::numeric, "epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(b) + ": " + e.what());
      }
      result.history.clamped_probabilities += terms.clamped;
      rec.train_loss += terms.loss;
      rec.train_nll += terms.nll;
      rec.train_kl += terms.kl;
      apply_rmsprop(model, grads, opt, config.learning_rate);
    }
    rec.train_loss /= static_cast<double>(n);
    rec.train_nll /= static_cast<double>(n);
    rec.train_kl /= static_cast<double>(n_batches);
    const auto vm = validation_metrics(model, checkpoint_set, config);
    rec.val_accuracy = vm.accuracy;
    rec.val_nll = vm.nll;
    auto& hist = result.history;
    if (!hist.best_epoch || improves(config.early_best_metric, rec, hist.epochs[*hist.best_epoch])) {
      hist.best_epoch = hist.epochs.size();
      best_model = model;
    }
    hist.epochs.push_back(rec);
  }
  if (result.history.clamped_probabilities > 0)
    std::cerr << "warning: " << result.history.clamped_probabilities
              << " class probabilities clamped to 1e-300 during training\n";
  result.model = std::move(best_model);
  return result;
}

}  // namespace detail

// ELBO minimisation for the variational head. The returned model is the
// checkpoint with the best validation metric.
inline TrainResult train_bayes(const FeatureDataset& data, const FeatureDataset& val,
                               const TrainConfig& config) {
  return detail::train(data, val, config, Variant::bayesian);
}

// Same loop with point weights and cross-entropy only.
inline TrainResult train_baseline(const FeatureDataset& data, const FeatureDataset& val,
                                  const TrainConfig& config) {
  return detail::train(data, val, config, Variant::baseline);
}

inline void write_history_csv(std::ostream& os, const TrainHistory& h) {
  os << "epoch,train_loss,train_nll,train_kl,val_accuracy,val_nll\n";
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : h.epochs)
    os << r.epoch << ',' << r.train_loss << ',' << r.train_nll << ',' << r.train_kl << ','
       << r.val_accuracy << ',' << r.val_nll << '\n';
  os.precision(old);
}

}  // namespace bayeshead
