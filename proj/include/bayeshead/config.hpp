#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bayeshead/analytics.hpp"
#include "bayeshead/data.hpp"
#include "bayeshead/error.hpp"
#include "bayeshead/inference.hpp"
#include "bayeshead/training.hpp"

namespace bayeshead {

// Flat key=value settings. Precedence: explicit override > config file >
// built-in default.
class Settings {
 public:
  Settings() : values_(defaults()) {}

  static std::map<std::string, std::string> defaults() {
    return {
        {"seed", "0"},
        {"learning_rate", "0.01"},
        {"batch_size", "32"},
        {"epochs", "150"},
        {"mc_samples", "50"},
        {"mc_samples_val", "10"},
        {"kl_weight_mode", "per_batch"},
        {"prior_mix_weight", "0.5"},
        {"prior_slab_sigma", "1"},
        {"prior_spike_sigma", "0.1"},
        {"early_best_metric", "val_nll"},
        {"hidden_units", "32"},
        {"init_mean_sigma", "0.1"},
        {"init_sigma", "0.05"},
        {"rmsprop_decay", "0.9"},
        {"rmsprop_epsilon", "1e-7"},
        {"per_example_sampling", "false"},
        {"force_zero_sigma", "false"},
        {"val_fraction", "0.2"},
        {"uncertainty_threshold", "0.01"},
        {"confidence_threshold", "0.99"},
        {"ci_level", "0.95"},
        {"noise_sigma", "0"},
        {"rotation_angle", "0"},
        {"ood_offset", ""},
        {"entropy_bins", "20"},
        {"kde_grid_points", "512"},
    };
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot open config file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto body = detail::trim(line);
      if (body.empty() || body.front() == '#') continue;
      const auto eq = body.find('=');
      require(eq != std::string_view::npos, ErrorKind::parse,
              path.string() + " line " + std::to_string(line_no) + ": expected key=value");
      set(std::string(detail::trim(body.substr(0, eq))),
          std::string(detail::trim(body.substr(eq + 1))));
    }
  }

  void set(const std::string& key, const std::string& value) {
    require(values_.count(key) == 1, ErrorKind::parse, "unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), ErrorKind::parse, "unknown config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const auto v = detail::parse_double(get(key));
    require(v.has_value(), ErrorKind::parse, "config " + key + "='" + get(key) + "' is not a number");
    return *v;
  }

  std::uint64_t u64(const std::string& key) const {
    const auto& s = get(key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc{} && ptr == s.data() + s.size() && !s.empty(), ErrorKind::parse,
            "config " + key + "='" + s + "' is not a nonnegative integer");
    return v;
  }

  std::size_t count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

  bool flag(const std::string& key) const {
    const auto& s = get(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    fail(ErrorKind::parse, "config " + key + "='" + s + "' is not a boolean");
  }

  std::optional<std::vector<double>> real_list(const std::string& key) const {
    const auto& s = get(key);
    if (s.empty()) return std::nullopt;
    std::vector<double> out;
    for (const auto& f : detail::split_fields(s)) {
      const auto v = detail::parse_double(f);
      require(v.has_value(), ErrorKind::parse, "config " + key + " has a non-numeric entry");
      out.push_back(*v);
    }
    return out;
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  // `key=value` lines for echoing into artifacts.
  std::vector<std::string> echo_lines() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k + "=" + v);
    return out;
  }

  TrainConfig train_config() const {
    TrainConfig c;
    c.seed = u64("seed");
    c.learning_rate = real("learning_rate");
    c.batch_size = count("batch_size");
    c.epochs = count("epochs");
    c.mc_samples_predict = count("mc_samples");
    c.mc_samples_val = count("mc_samples_val");
    const auto& mode = get("kl_weight_mode");
    if (mode == "per_batch") c.kl_weight_mode = KlWeightMode::per_batch;
    else if (mode == "per_dataset") c.kl_weight_mode = KlWeightMode::per_dataset;
    else if (mode == "none") c.kl_weight_mode = KlWeightMode::none;
    else fail(ErrorKind::parse, "kl_weight_mode must be per_batch, per_dataset or none");
    c.prior.mix_weight = real("prior_mix_weight");
    c.prior.slab_sigma = real("prior_slab_sigma");
    c.prior.spike_sigma = real("prior_spike_sigma");
    const auto& metric = get("early_best_metric");
    if (metric == "val_nll") c.early_best_metric = BestMetric::val_nll;
    else if (metric == "val_accuracy") c.early_best_metric = BestMetric::val_accuracy;
    else fail(ErrorKind::parse, "early_best_metric must be val_nll or val_accuracy");
    c.hidden_units = count("hidden_units");
    c.init_mean_sigma = real("init_mean_sigma");
    c.init_sigma = real("init_sigma");
    c.rmsprop_decay = real("rmsprop_decay");
    c.rmsprop_epsilon = real("rmsprop_epsilon");
    c.per_example_sampling = flag("per_example_sampling");
    c.force_zero_sigma = flag("force_zero_sigma");
    c.validate();
    return c;
  }

  ReferralThresholds thresholds() const {
    ReferralThresholds t{real("uncertainty_threshold"), real("confidence_threshold")};
    require(t.uncertainty >= 0.0, ErrorKind::invalid_parameter, "uncertainty_threshold must be >= 0");
    require(t.confidence > 0.0 && t.confidence <= 1.0, ErrorKind::invalid_parameter,
            "confidence_threshold must lie in (0, 1]");
    return t;
  }

  ShiftConfig shift_config() const {
    return {real("noise_sigma"), real("rotation_angle"), real_list("ood_offset")};
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace bayeshead
