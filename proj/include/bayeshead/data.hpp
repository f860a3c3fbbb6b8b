#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bayeshead/core_math.hpp"
#include "bayeshead/dataset.hpp"
#include "bayeshead/error.hpp"

namespace bayeshead {

// Column layout of a feature CSV. Empty feature_columns means "every column
// other than id and label"; empty class_names means labels are integer ids.
struct CsvSchema {
  std::string id_column = "id";
  std::string label_column = "label";
  std::vector<std::string> feature_columns;
  std::vector<std::string> class_names;
  std::optional<std::size_t> n_classes;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_fields(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace detail

// Reads `key=value` lines (id_column, label_column, feature_columns,
// classes, n_classes). Lists are comma separated.
inline CsvSchema read_schema_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open schema file " + path.string());
  CsvSchema schema;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    require(eq != std::string_view::npos, ErrorKind::parse,
            path.string() + " line " + std::to_string(line_no) + ": expected key=value");
    const std::string key(detail::trim(body.substr(0, eq)));
    const std::string value(detail::trim(body.substr(eq + 1)));
    if (key == "id_column") schema.id_column = value;
    else if (key == "label_column") schema.label_column = value;
    else if (key == "feature_columns") schema.feature_columns = detail::split_fields(value);
    else if (key == "classes") schema.class_names = detail::split_fields(value);
    else if (key == "n_classes") {
      const auto n = detail::parse_int(value);
      require(n && *n >= 1, ErrorKind::parse, path.string() + ": bad n_classes");
      schema.n_classes = static_cast<std::size_t>(*n);
    } else
      fail(ErrorKind::parse, path.string() + ": unknown schema key '" + key + "'");
  }
  return schema;
}

inline FeatureDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open " + path.string());

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    header = detail::split_fields(body);
    break;
  }
  require(!header.empty(), ErrorKind::parse, path.string() + ": missing header row");

  auto column_of = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto label_col = column_of(schema.label_column);
  require(label_col.has_value(), ErrorKind::schema,
          path.string() + ": no label column '" + schema.label_column + "'");
  const auto id_col = column_of(schema.id_column);
  std::vector<std::size_t> feature_cols;
  if (schema.feature_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (c != *label_col && (!id_col || c != *id_col)) feature_cols.push_back(c);
  } else {
    for (const auto& name : schema.feature_columns) {
      const auto c = column_of(name);
      require(c.has_value(), ErrorKind::schema, path.string() + ": no feature column '" + name + "'");
      feature_cols.push_back(*c);
    }
  }
  require(!feature_cols.empty(), ErrorKind::schema, path.string() + ": no feature columns");

  FeatureDataset out;
  out.name = path.stem().string();
  std::vector<double> values;
  std::size_t row = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = detail::split_fields(body);
    const std::string where = path.string() + " row " + std::to_string(row + 1) + " (line " +
                              std::to_string(line_no) + ")";
    require(fields.size() == header.size(), ErrorKind::parse,
            where + ": expected " + std::to_string(header.size()) + " fields, got " +
                std::to_string(fields.size()));
    for (std::size_t c : feature_cols) {
      const auto v = detail::parse_double(fields[c]);
      require(v.has_value(), ErrorKind::parse,
              where + ": non-numeric value '" + fields[c] + "' in column '" + header[c] + "'");
      values.push_back(*v);
    }
    const std::string& label_text = fields[*label_col];
    int label = -1;
    if (!schema.class_names.empty()) {
      const auto it = std::find(schema.class_names.begin(), schema.class_names.end(), label_text);
      if (it != schema.class_names.end()) label = static_cast<int>(it - schema.class_names.begin());
    } else if (const auto v = detail::parse_int(label_text); v && *v >= 0 && *v < (1 << 30)) {
      label = static_cast<int>(*v);
    }
    require(label >= 0, ErrorKind::schema, where + ": unknown label value '" + label_text + "'");
    if (schema.n_classes)
      require(static_cast<std::size_t>(label) < *schema.n_classes, ErrorKind::schema,
              where + ": label " + label_text + " outside declared classes");
    max_label = std::max(max_label, label);
    out.labels.push_back(label);
    out.ids.push_back(id_col ? fields[*id_col] : std::to_string(row));
    ++row;
  }
  require(row >= 1, ErrorKind::parse, path.string() + ": no data rows");
  out.features = Matrix(row, feature_cols.size(), std::move(values));
  if (!schema.class_names.empty()) out.n_classes = schema.class_names.size();
  else if (schema.n_classes) out.n_classes = *schema.n_classes;
  else out.n_classes = static_cast<std::size_t>(max_label + 1);
  out.validate();
  return out;
}

// Uses `<path>.schema` as the schema when that sidecar exists.
inline FeatureDataset load_csv(const std::filesystem::path& path) {
  auto sidecar = path;
  sidecar += ".schema";
  if (std::filesystem::exists(sidecar)) return load_csv(path, read_schema_file(sidecar));
  return load_csv(path, CsvSchema{});
}

// Writes `id,label,f0,f1,...` with round-trip precision. Optional comment
// lines (without the leading '#') go first.
inline void write_csv(std::ostream& os, const FeatureDataset& data,
                      const std::vector<std::string>& comments = {}) {
  for (const auto& c : comments) os << "# " << c << '\n';
  os << "id,label";
  for (std::size_t j = 0; j < data.dim(); ++j) os << ",f" << j;
  os << '\n';
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << data.ids[i] << ',' << data.labels[i];
    for (double v : data.features.row(i)) os << ',' << v;
    os << '\n';
  }
  os.precision(old);
}

inline void write_csv(const std::filesystem::path& path, const FeatureDataset& data,
                      const std::vector<std::string>& comments = {}) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot write " + path.string());
  write_csv(out, data, comments);
  require(out.good(), ErrorKind::io, "write failed for " + path.string());
}

namespace detail {

inline std::vector<std::vector<std::size_t>> rows_by_class(const FeatureDataset& data) {
  std::vector<std::vector<std::size_t>> by_class(data.n_classes);
  for (std::size_t i = 0; i < data.size(); ++i)
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  return by_class;
}

inline std::vector<std::size_t> shuffled(const std::vector<std::size_t>& rows, RngStream stream) {
  const auto perm = permutation(rows.size(), stream);
  std::vector<std::size_t> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = rows[perm[i]];
  return out;
}

}  // namespace detail

// Every class reduced to the minority count by seeded sampling without
// replacement; the result is re-shuffled.
inline FeatureDataset balance_downsample(const FeatureDataset& data, std::uint64_t seed) {
  data.validate();
  require(data.n_classes >= 2, ErrorKind::invalid_input, "balancing needs at least two classes");
  const auto by_class = detail::rows_by_class(data);
  std::size_t target = std::numeric_limits<std::size_t>::max();
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    require(!by_class[k].empty(), ErrorKind::invalid_input,
            "class " + std::to_string(k) + " has no samples");
    target = std::min(target, by_class[k].size());
  }
  const RngStream base(seed, 0x62616c616e6365ULL);
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    const auto picked = detail::shuffled(by_class[k], base.split(k));
    kept.insert(kept.end(), picked.begin(), picked.begin() + static_cast<long>(target));
  }
  const auto order = detail::shuffled(kept, base.split(by_class.size()));
  return subset(data, order, data.name);
}

struct SplitResult {
  FeatureDataset train;
  FeatureDataset test;
  std::vector<std::string> warnings;
};

namespace detail {

inline SplitResult split_by_counts(const FeatureDataset& data,
                                   const std::vector<std::size_t>& train_counts,
                                   std::uint64_t seed) {
  const auto by_class = rows_by_class(data);
  const RngStream base(seed, 0x73706c6974ULL);
  std::vector<std::size_t> train_rows, test_rows;
  SplitResult out;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    if (by_class[k].empty()) continue;
    const auto picked = shuffled(by_class[k], base.split(k));
    const std::size_t n_train = train_counts[k];
    train_rows.insert(train_rows.end(), picked.begin(), picked.begin() + static_cast<long>(n_train));
    test_rows.insert(test_rows.end(), picked.begin() + static_cast<long>(n_train), picked.end());
    if (n_train == 0) out.warnings.push_back("train split has no samples of class " + std::to_string(k));
    if (n_train == picked.size())
      out.warnings.push_back("test split has no samples of class " + std::to_string(k));
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  out.train = subset(data, train_rows, data.name + "_train");
  out.test = subset(data, test_rows, data.name + "_test");
  for (const auto& w : out.warnings) std::cerr << "warning: " << w << '\n';
  return out;
}

}  // namespace detail

// Stratified split: each class contributes round(train_fraction * count)
// rows to train and the rest to test. Row order within a part follows the
// input.
inline SplitResult split(const FeatureDataset& data, double train_fraction, double test_fraction,
                         std::uint64_t seed) {
  data.validate();
  require(train_fraction >= 0.0 && test_fraction >= 0.0 &&
              std::abs(train_fraction + test_fraction - 1.0) <= 1e-9,
          ErrorKind::invalid_input, "split fractions must be nonnegative and sum to 1");
  const auto counts = data.class_counts();
  std::vector<std::size_t> train_counts(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k)
    train_counts[k] = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(counts[k])));
  return detail::split_by_counts(data, train_counts, seed);
}

// Fixed-count split: `test_per_class` rows of every class go to test.
inline SplitResult split_fixed_test_count(const FeatureDataset& data, std::size_t test_per_class,
                                          std::uint64_t seed) {
  data.validate();
  const auto counts = data.class_counts();
  std::vector<std::size_t> train_counts(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    require(counts[k] >= test_per_class, ErrorKind::invalid_input,
            "class " + std::to_string(k) + " has only " + std::to_string(counts[k]) + " rows");
    train_counts[k] = counts[k] - test_per_class;
  }
  return detail::split_by_counts(data, train_counts, seed);
}

// Isotropic Gaussian clusters, one per mean, written class by class.
inline FeatureDataset synth_blobs(std::size_t n_per_class,
                                  const std::vector<std::vector<double>>& means, double sigma,
                                  std::uint64_t seed, std::string name = "blobs") {
  require(means.size() >= 2, ErrorKind::invalid_input, "synth_blobs needs at least two classes");
  require(sigma > 0.0 && std::isfinite(sigma), ErrorKind::invalid_parameter, "sigma must be > 0");
  require(n_per_class >= 1, ErrorKind::invalid_input, "n_per_class must be >= 1");
  const std::size_t d = means[0].size();
  require(d >= 1, ErrorKind::invalid_input, "means must have at least one coordinate");
  for (const auto& m : means)
    require(m.size() == d && all_finite(m), ErrorKind::shape, "means must share one finite dimension");

  FeatureDataset out;
  out.name = std::move(name);
  out.n_classes = means.size();
  out.features = Matrix(n_per_class * means.size(), d);
  const RngStream base(seed, 0x626c6f6273ULL);
  std::size_t row = 0;
  for (std::size_t k = 0; k < means.size(); ++k) {
    RngStream stream = base.split(k);
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      for (std::size_t j = 0; j < d; ++j) out.features(row, j) = means[k][j] + sigma * stream.normal();
      out.labels.push_back(static_cast<int>(k));
      out.ids.push_back(std::to_string(row));
    }
  }
  return out;
}

struct ShiftConfig {
  double noise_sigma = 0.0;
  double rotation_angle = 0.0;  // radians, applied to the first two coordinates
  std::optional<std::vector<double>> ood_offset;
};

// Rotate, then add N(0, noise_sigma^2) noise, then translate. Labels and ids
// are kept.
inline FeatureDataset synth_shift(const FeatureDataset& data, const ShiftConfig& config,
                                  std::uint64_t seed) {
  require(std::isfinite(config.noise_sigma) && config.noise_sigma >= 0.0,
          ErrorKind::invalid_parameter, "noise_sigma must be finite and >= 0");
  require(std::isfinite(config.rotation_angle), ErrorKind::invalid_parameter,
          "rotation_angle must be finite");
  const std::size_t d = data.dim();
  if (config.rotation_angle != 0.0)
    require(d >= 2, ErrorKind::invalid_input, "rotation needs at least two feature columns");
  if (config.ood_offset)
    require(config.ood_offset->size() == d && all_finite(*config.ood_offset), ErrorKind::shape,
            "ood_offset length " + std::to_string(config.ood_offset->size()) + " != dim " +
                std::to_string(d));

  FeatureDataset out = data;
  const double c = std::cos(config.rotation_angle);
  const double s = std::sin(config.rotation_angle);
  RngStream noise(seed, 0x7368696674ULL);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto row = out.features.row(i);
    if (config.rotation_angle != 0.0) {
      const double x = row[0], y = row[1];
      row[0] = c * x - s * y;
      row[1] = s * x + c * y;
    }
    if (config.noise_sigma > 0.0)
      for (double& v : row) v += config.noise_sigma * noise.normal();
    if (config.ood_offset)
      for (std::size_t j = 0; j < d; ++j) row[j] += (*config.ood_offset)[j];
  }
  return out;
}

}  // namespace bayeshead
