#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bayeshead/core_math.hpp"
#include "bayeshead/dataset.hpp"
#include "bayeshead/error.hpp"
#include "bayeshead/inference.hpp"
#include "bayeshead/network.hpp"
#include "bayeshead/parallel.hpp"

namespace bayeshead {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr std::size_t kDefaultEntropyBins = 20;
inline constexpr std::size_t kDefaultKdeGridPoints = 512;
inline constexpr std::size_t kMaxKdeGridPoints = std::size_t{1} << 22;

struct PredictionRecord {
  std::string id;
  int label = -1;  // -1 when unknown
  std::size_t predicted_class = 0;
  std::vector<double> mean_probs;
  std::vector<double> var_probs;
  double entropy_bits = 0.0;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  double uncertainty_scalar = 0.0;
  ReferralAction action = ReferralAction::accept;

  bool correct() const noexcept { return label >= 0 && static_cast<std::size_t>(label) == predicted_class; }
};

inline PredictionRecord make_record(std::string id, int label, const PredictiveResult& r,
                                    const ReferralThresholds& thresholds) {
  PredictionRecord rec;
  rec.id = std::move(id);
  rec.label = label;
  rec.predicted_class = r.predicted_class;
  rec.mean_probs = r.mean_probs;
  rec.var_probs = r.var_probs;
  rec.entropy_bits = r.entropy_bits;
  rec.ci_low = r.ci_low;
  rec.ci_high = r.ci_high;
  rec.uncertainty_scalar = r.uncertainty_scalar;
  rec.action = referral_decision(r, thresholds).action;
  return rec;
}

struct EvalReport {
  std::string dataset;
  Variant variant = Variant::bayesian;
  std::size_t mc_samples = kDefaultMcSamples;
  ReferralThresholds thresholds;
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<PredictionRecord> records;
  std::optional<double> mean_entropy_correct;
  std::optional<double> mean_entropy_incorrect;
  double referral_rate = 0.0;
  std::map<std::string, std::string> config;
};

// Aggregates per-sample records into dataset-level metrics.
inline EvalReport build_report(std::string dataset, std::size_t n_classes,
                               std::vector<PredictionRecord> records) {
  require(!records.empty(), ErrorKind::invalid_input, "cannot report on an empty dataset");
  EvalReport rep;
  rep.dataset = std::move(dataset);
  rep.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::size_t correct = 0, referred = 0, n_wrong = 0;
  double h_correct = 0.0, h_wrong = 0.0;
  for (const auto& r : records) {
    require(r.label >= 0 && static_cast<std::size_t>(r.label) < n_classes &&
                r.predicted_class < n_classes,
            ErrorKind::schema, "record '" + r.id + "' has a label outside the class range");
    ++rep.confusion[static_cast<std::size_t>(r.label)][r.predicted_class];
    if (r.correct()) {
      ++correct;
      h_correct += r.entropy_bits;
    } else {
      ++n_wrong;
      h_wrong += r.entropy_bits;
    }
    if (r.action == ReferralAction::refer) ++referred;
  }
  const auto n = static_cast<double>(records.size());
  rep.accuracy = 1.0 - static_cast<double>(records.size() - correct) / n;
  rep.referral_rate = static_cast<double>(referred) / n;
  if (correct > 0) rep.mean_entropy_correct = h_correct / static_cast<double>(correct);
  if (n_wrong > 0) rep.mean_entropy_incorrect = h_wrong / static_cast<double>(n_wrong);
  rep.records = std::move(records);
  return rep;
}

// Row i is predicted with stream.split(i); the baseline takes one
// deterministic pass per row.
inline EvalReport evaluate(const HeadModel& model, const FeatureDataset& data, std::size_t n,
                           const ReferralThresholds& thresholds, const RngStream& stream,
                           std::size_t workers = 1, double ci_level = kDefaultCredibleLevel) {
  require(!data.empty(), ErrorKind::invalid_input, "evaluate on an empty dataset");
  data.validate();
  require(data.dim() == model.feature_dim(), ErrorKind::shape,
          "dataset dim " + std::to_string(data.dim()) + " != model feature_dim " +
              std::to_string(model.feature_dim()));
  require(data.n_classes <= model.n_classes, ErrorKind::schema,
          "dataset has more classes than the model");
  std::vector<PredictionRecord> records(data.size());
  parallel_for(data.size(), workers, [&](std::size_t i) {
    const auto r = predict(model, data.features.row(i), n, stream.split(i), 1, ci_level);
    records[i] = make_record(data.ids[i], data.labels[i], r, thresholds);
  });
  auto rep = build_report(data.name, model.n_classes, std::move(records));
  rep.variant = model.variant();
  rep.mc_samples = model.is_bayesian() ? n : 1;
  rep.thresholds = thresholds;
  return rep;
}

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

// h = 0.9 * min(sd, IQR / 1.34) * m^(-1/5); sd alone when the IQR is zero.
inline double silverman_bandwidth(std::span<const double> values) {
  require(values.size() >= 2, ErrorKind::bandwidth_undefined,
          "bandwidth needs at least two values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto m = static_cast<double>(sorted.size());
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= m;
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (m - 1.0));
  require(sd > 0.0, ErrorKind::degenerate_data, "values have zero spread");
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(m, -0.2);
}

// Gaussian-kernel density on a uniform grid over [min - 4h, max + 4h]. Values
// are summed in sorted order so the curve does not depend on input order.
// grid_points is a minimum: the grid is refined until the step is at most h/2.
inline KdeCurve kde(std::span<const double> values, std::optional<double> bandwidth,
                    std::size_t grid_points = kDefaultKdeGridPoints) {
  require(!values.empty(), ErrorKind::invalid_input, "kde of empty sample");
  require(grid_points >= 2, ErrorKind::invalid_parameter, "kde needs at least two grid points");
  require(all_finite(values), ErrorKind::invalid_input, "kde values must be finite");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double h = 0.0;
  if (bandwidth) {
    h = *bandwidth;
    require(std::isfinite(h) && h > 0.0, ErrorKind::invalid_parameter, "bandwidth must be > 0");
  } else {
    require(sorted.size() >= 2, ErrorKind::bandwidth_undefined,
            "a single value needs an explicit bandwidth");
    h = silverman_bandwidth(sorted);
  }
  KdeCurve curve;
  curve.bandwidth = h;
  const double lo = sorted.front() - 4.0 * h;
  const double hi = sorted.back() + 4.0 * h;
  const double needed = std::ceil((hi - lo) / (0.5 * h)) + 1.0;
  require(needed <= static_cast<double>(kMaxKdeGridPoints), ErrorKind::degenerate_data,
          "bandwidth too small for the value range");
  grid_points = std::max(grid_points, static_cast<std::size_t>(needed));
  const double step = (hi - lo) / static_cast<double>(grid_points - 1);
  const double norm = 1.0 / (static_cast<double>(sorted.size()) * h) * std::numbers::inv_sqrtpi /
                      std::numbers::sqrt2;
  curve.grid.resize(grid_points);
  curve.density.resize(grid_points);
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double x = g + 1 == grid_points ? hi : lo + step * static_cast<double>(g);
    double total = 0.0;
    for (double v : sorted) {
      const double z = (x - v) / h;
      total += std::exp(-0.5 * z * z);
    }
    curve.grid[g] = x;
    curve.density[g] = norm * total;
  }
  return curve;
}

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double total = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) total += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return total;
}

struct EntropyHistogram {
  std::vector<double> bin_edges;  // n_bins + 1 edges over [0, log2(n_classes)]
  std::optional<std::vector<double>> correct_fraction;
  std::optional<std::vector<double>> incorrect_fraction;
};

struct EntropyObservation {
  double entropy_bits = 0.0;
  bool correct = false;
};

// Per-group normalised histogram. A value on an interior edge falls in the
// lower bin; a group with no members is reported as absent.
inline EntropyHistogram entropy_histogram(std::span<const EntropyObservation> records,
                                          std::size_t n_bins, std::size_t n_classes) {
  require(n_bins >= 1, ErrorKind::invalid_parameter, "n_bins must be >= 1");
  require(n_classes >= 2, ErrorKind::invalid_parameter, "n_classes must be >= 2");
  const double upper = std::log2(static_cast<double>(n_classes));
  EntropyHistogram h;
  h.bin_edges.resize(n_bins + 1);
  for (std::size_t b = 0; b <= n_bins; ++b)
    h.bin_edges[b] = upper * static_cast<double>(b) / static_cast<double>(n_bins);
  std::vector<std::size_t> counts[2] = {std::vector<std::size_t>(n_bins, 0),
                                        std::vector<std::size_t>(n_bins, 0)};
  std::size_t totals[2] = {0, 0};
  for (const auto& r : records) {
    const auto it = std::lower_bound(h.bin_edges.begin() + 1, h.bin_edges.end(), r.entropy_bits);
    std::size_t bin = static_cast<std::size_t>(it - h.bin_edges.begin()) - 1;
    bin = std::min(bin, n_bins - 1);
    const int group = r.correct ? 0 : 1;
    ++counts[group][bin];
    ++totals[group];
  }
  auto fractions = [&](int group) -> std::optional<std::vector<double>> {
    if (totals[group] == 0) return std::nullopt;
    std::vector<double> f(n_bins);
    for (std::size_t b = 0; b < n_bins; ++b)
      f[b] = static_cast<double>(counts[group][b]) / static_cast<double>(totals[group]);
    return f;
  };
  h.correct_fraction = fractions(0);
  h.incorrect_fraction = fractions(1);
  return h;
}

inline std::vector<EntropyObservation> entropy_observations(const EvalReport& report) {
  std::vector<EntropyObservation> out;
  out.reserve(report.records.size());
  for (const auto& r : report.records) out.push_back({r.entropy_bits, r.correct()});
  return out;
}

struct ComparisonRow {
  std::string dataset;
  double bayes_accuracy = 0.0;
  double baseline_accuracy = 0.0;
  double delta = 0.0;  // bayes - baseline
  double bayes_referral_rate = 0.0;
  std::optional<double> bayes_mean_entropy_correct;
  std::optional<double> bayes_mean_entropy_incorrect;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

inline ComparisonTable compare_report(std::span<const EvalReport> bayes,
                                      std::span<const EvalReport> baseline,
                                      std::span<const std::string> dataset_names) {
  require(bayes.size() == baseline.size() && bayes.size() == dataset_names.size(),
          ErrorKind::invalid_input,
          "comparison needs equal list lengths (bayesian " + std::to_string(bayes.size()) +
              ", baseline " + std::to_string(baseline.size()) + ", names " +
              std::to_string(dataset_names.size()) + ")");
  require(!bayes.empty(), ErrorKind::invalid_input, "comparison needs at least one dataset");
  ComparisonTable t;
  for (std::size_t i = 0; i < bayes.size(); ++i) {
    ComparisonRow row;
    row.dataset = dataset_names[i];
    row.bayes_accuracy = bayes[i].accuracy;
    row.baseline_accuracy = baseline[i].accuracy;
    row.delta = bayes[i].accuracy - baseline[i].accuracy;
    row.bayes_referral_rate = bayes[i].referral_rate;
    row.bayes_mean_entropy_correct = bayes[i].mean_entropy_correct;
    row.bayes_mean_entropy_incorrect = bayes[i].mean_entropy_incorrect;
    t.rows.push_back(row);
  }
  return t;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_double(*v) : "NA"; }

inline std::string fmt_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

}  // namespace detail

// One row per dataset.
inline void write_comparison_csv(std::ostream& os, const ComparisonTable& t) {
  os << "dataset,bayes_accuracy,baseline_accuracy,delta,bayes_referral_rate,"
        "bayes_mean_entropy_correct,bayes_mean_entropy_incorrect\n";
  for (const auto& r : t.rows)
    os << r.dataset << ',' << detail::fmt_double(r.bayes_accuracy) << ','
       << detail::fmt_double(r.baseline_accuracy) << ',' << detail::fmt_double(r.delta) << ','
       << detail::fmt_double(r.bayes_referral_rate) << ','
       << detail::fmt_optional(r.bayes_mean_entropy_correct) << ','
       << detail::fmt_optional(r.bayes_mean_entropy_incorrect) << '\n';
}

// Models as rows, datasets as columns, accuracies in percent.
inline void write_comparison_table(std::ostream& os, const ComparisonTable& t) {
  os << "| model |";
  for (const auto& r : t.rows) os << ' ' << r.dataset << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < t.rows.size(); ++i) os << "---|";
  os << "\n| bayesian |";
  for (const auto& r : t.rows) os << ' ' << detail::fmt_percent(r.bayes_accuracy) << " |";
  os << "\n| baseline |";
  for (const auto& r : t.rows) os << ' ' << detail::fmt_percent(r.baseline_accuracy) << " |";
  os << "\n| bayesian referral rate |";
  for (const auto& r : t.rows) os << ' ' << detail::fmt_percent(r.bayes_referral_rate) << " |";
  os << '\n';
}

inline void write_kde_csv(std::ostream& os, const KdeCurve& curve) {
  os << "grid,density\n";
  for (std::size_t i = 0; i < curve.grid.size(); ++i)
    os << detail::fmt_double(curve.grid[i]) << ',' << detail::fmt_double(curve.density[i]) << '\n';
}

// Absent groups are written as NA.
inline void write_histogram_csv(std::ostream& os, const EntropyHistogram& h) {
  os << "bin_low,bin_high,correct_fraction,incorrect_fraction\n";
  for (std::size_t b = 0; b + 1 < h.bin_edges.size(); ++b) {
    os << detail::fmt_double(h.bin_edges[b]) << ',' << detail::fmt_double(h.bin_edges[b + 1]) << ','
       << (h.correct_fraction ? detail::fmt_double((*h.correct_fraction)[b]) : "NA") << ','
       << (h.incorrect_fraction ? detail::fmt_double((*h.incorrect_fraction)[b]) : "NA") << '\n';
  }
}

// JSON forms ---------------------------------------------------------------

inline nlohmann::json to_json(const PredictionRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  if (r.label >= 0) j["label"] = r.label;
  j["predicted_class"] = r.predicted_class;
  j["mean_probs"] = r.mean_probs;
  j["var_probs"] = r.var_probs;
  j["entropy_bits"] = r.entropy_bits;
  j["ci_low"] = r.ci_low;
  j["ci_high"] = r.ci_high;
  j["uncertainty_scalar"] = r.uncertainty_scalar;
  j["action"] = to_string(r.action);
  return j;
}

inline PredictionRecord record_from_json(const nlohmann::json& j) {
  PredictionRecord r;
  r.id = j.at("id").get<std::string>();
  r.label = j.contains("label") ? j.at("label").get<int>() : -1;
  r.predicted_class = j.at("predicted_class").get<std::size_t>();
  r.mean_probs = j.at("mean_probs").get<std::vector<double>>();
  r.var_probs = j.at("var_probs").get<std::vector<double>>();
  r.entropy_bits = j.at("entropy_bits").get<double>();
  r.ci_low = j.at("ci_low").get<std::vector<double>>();
  r.ci_high = j.at("ci_high").get<std::vector<double>>();
  r.uncertainty_scalar = j.at("uncertainty_scalar").get<double>();
  r.action = j.at("action").get<std::string>() == "refer" ? ReferralAction::refer
                                                          : ReferralAction::accept;
  return r;
}

inline nlohmann::json to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["dataset"] = rep.dataset;
  j["variant"] = to_string(rep.variant);
  j["mc_samples"] = rep.mc_samples;
  j["uncertainty_threshold"] = rep.thresholds.uncertainty;
  j["confidence_threshold"] = rep.thresholds.confidence;
  j["accuracy"] = rep.accuracy;
  j["confusion"] = rep.confusion;
  j["referral_rate"] = rep.referral_rate;
  j["mean_entropy_correct"] =
      rep.mean_entropy_correct ? nlohmann::json(*rep.mean_entropy_correct) : nlohmann::json();
  j["mean_entropy_incorrect"] =
      rep.mean_entropy_incorrect ? nlohmann::json(*rep.mean_entropy_incorrect) : nlohmann::json();
  j["config"] = rep.config;
  auto& recs = j["records"] = nlohmann::json::array();
  for (const auto& r : rep.records) recs.push_back(to_json(r));
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    require(version == kReportSchemaVersion, ErrorKind::version,
            "report schema_version " + std::to_string(version) + ", supported " +
                std::to_string(kReportSchemaVersion));
    EvalReport rep;
    rep.dataset = j.at("dataset").get<std::string>();
    rep.variant = j.at("variant").get<std::string>() == "baseline" ? Variant::baseline
                                                                   : Variant::bayesian;
    rep.mc_samples = j.at("mc_samples").get<std::size_t>();
    rep.thresholds.uncertainty = j.at("uncertainty_threshold").get<double>();
    rep.thresholds.confidence = j.at("confidence_threshold").get<double>();
    rep.accuracy = j.at("accuracy").get<double>();
    rep.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    rep.referral_rate = j.at("referral_rate").get<double>();
    if (!j.at("mean_entropy_correct").is_null())
      rep.mean_entropy_correct = j.at("mean_entropy_correct").get<double>();
    if (!j.at("mean_entropy_incorrect").is_null())
      rep.mean_entropy_incorrect = j.at("mean_entropy_incorrect").get<double>();
    rep.config = j.at("config").get<std::map<std::string, std::string>>();
    for (const auto& r : j.at("records")) rep.records.push_back(record_from_json(r));
    return rep;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed evaluation report: ") + e.what());
  }
}

inline nlohmann::json to_json(const ComparisonTable& t) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  auto& rows = j["rows"] = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json row;
    row["dataset"] = r.dataset;
    row["bayes_accuracy"] = r.bayes_accuracy;
    row["baseline_accuracy"] = r.baseline_accuracy;
    row["delta"] = r.delta;
    row["bayes_referral_rate"] = r.bayes_referral_rate;
    row["bayes_mean_entropy_correct"] = r.bayes_mean_entropy_correct
                                            ? nlohmann::json(*r.bayes_mean_entropy_correct)
                                            : nlohmann::json();
    row["bayes_mean_entropy_incorrect"] = r.bayes_mean_entropy_incorrect
                                              ? nlohmann::json(*r.bayes_mean_entropy_incorrect)
                                              : nlohmann::json();
    rows.push_back(row);
  }
  return j;
}

}  // namespace bayeshead
