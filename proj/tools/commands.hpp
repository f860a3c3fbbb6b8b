#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bayeshead/analytics.hpp"
#include "bayeshead/archive.hpp"
#include "bayeshead/config.hpp"
#include "bayeshead/data.hpp"
#include "bayeshead/error.hpp"
#include "bayeshead/inference.hpp"
#include "bayeshead/training.hpp"

namespace bayeshead::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumeric = 1;
inline constexpr int kExitUsage = 2;

inline constexpr std::uint64_t kPredictStream = 5;

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out_dir = ".";
  std::size_t threads = 1;
  std::vector<std::string> overrides;  // key=value
};

// Option values that map onto config keys; set only when given on the
// command line.
struct KeyedFlags {
  std::deque<std::pair<std::string, std::optional<std::string>>> entries;  // stable addresses

  std::optional<std::string>& add(CLI::App* app, const std::string& flag, const std::string& key,
                                  const std::string& help) {
    entries.emplace_back(key, std::nullopt);
    auto& slot = entries.back().second;
    app->add_option_function<std::string>(flag, [&slot](const std::string& v) { slot = v; }, help);
    return slot;
  }
};

inline Settings effective_settings(const GlobalOptions& g, const KeyedFlags& flags) {
  Settings s;
  if (!g.config_path.empty()) s.load_file(g.config_path);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, ErrorKind::parse, "--set expects key=value, got '" + kv + "'");
    s.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [key, value] : flags.entries)
    if (value) s.set(key, *value);
  if (g.seed) s.set("seed", std::to_string(*g.seed));
  return s;
}

inline fs::path out_path(const GlobalOptions& g, const std::string& explicit_path,
                         const std::string& default_name) {
  if (!explicit_path.empty()) {
    const fs::path p(explicit_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
  }
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / default_name;
}

inline std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot write " + p.string());
  return out;
}

inline void write_comments(std::ostream& os, const Settings& s) {
  for (const auto& line : s.echo_lines()) os << "# " << line << '\n';
}

inline std::vector<std::vector<double>> parse_means(const std::string& text) {
  std::vector<std::vector<double>> means;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ';')) {
    std::vector<double> m;
    for (const auto& f : detail::split_fields(part)) {
      const auto v = detail::parse_double(f);
      require(v.has_value(), ErrorKind::parse, "--means entry '" + f + "' is not a number");
      m.push_back(*v);
    }
    means.push_back(std::move(m));
  }
  return means;
}

inline std::vector<std::string> split_list(const std::string& text) {
  if (text.empty()) return {};
  return detail::split_fields(text);
}

struct App {
  App(std::ostream& out_, std::ostream& err_) : out(out_), err(err_) {}

  GlobalOptions global;
  std::ostream& out;
  std::ostream& err;

  // synth
  std::string synth_kind = "blobs";
  std::size_t synth_n_per_class = 200;
  std::string synth_means = "-2,0;2,0";
  double synth_sigma = 1.0;
  std::string synth_input;
  std::string synth_output;
  std::string synth_name;
  KeyedFlags synth_flags;

  // train
  std::string train_data;
  std::string train_val;
  std::string train_variant = "bayesian";
  std::string train_model;
  std::string train_history;
  KeyedFlags train_flags;

  // predict / eval
  std::string model_path;
  std::string input_path;
  std::string output_path;
  std::string eval_name;
  KeyedFlags predict_flags;
  KeyedFlags eval_flags;

  // analyze
  std::vector<std::string> analyze_reports;
  std::optional<double> analyze_bandwidth;
  KeyedFlags analyze_flags;

  // compare
  std::string compare_bayes;
  std::string compare_baseline;
  std::string compare_names;
  KeyedFlags compare_flags;

  int cmd_synth() {
    const Settings s = effective_settings(global, synth_flags);
    const std::uint64_t seed = s.u64("seed");
    FeatureDataset data;
    if (synth_kind == "blobs") {
      data = synth_blobs(synth_n_per_class, parse_means(synth_means), synth_sigma, seed,
                         synth_name.empty() ? "blobs" : synth_name);
    } else if (synth_kind == "shift") {
      require(!synth_input.empty(), ErrorKind::invalid_input, "synth --kind shift needs --input");
      data = synth_shift(load_csv(synth_input), s.shift_config(), seed);
    } else {
      fail(ErrorKind::invalid_input, "unknown synth kind '" + synth_kind + "'");
    }
    const auto path = out_path(global, synth_output, "synth.csv");
    std::vector<std::string> comments = s.echo_lines();
    write_csv(path, data, comments);
    out << "wrote " << data.size() << " rows to " << path.string() << '\n';
    return kExitOk;
  }

  int cmd_train() {
    const Settings s = effective_settings(global, train_flags);
    const TrainConfig config = s.train_config();
    require(train_variant == "bayesian" || train_variant == "baseline", ErrorKind::invalid_input,
            "--variant must be bayesian or baseline");
    FeatureDataset data = load_csv(train_data);
    FeatureDataset val;
    if (!train_val.empty()) {
      val = load_csv(train_val);
    } else if (const double f = s.real("val_fraction"); f > 0.0) {
      auto parts = split(data, 1.0 - f, f, config.seed);
      data = std::move(parts.train);
      val = std::move(parts.test);
    }
    const auto result = train_variant == "bayesian" ? train_bayes(data, val, config)
                                                    : train_baseline(data, val, config);
    ModelArchive archive;
    archive.model = result.model;
    archive.train_config = s.values();
    archive.seed = config.seed;
    const auto model_file = out_path(global, train_model, "model.json");
    save_model(model_file, archive);
    const auto history_file = out_path(global, train_history, "history.csv");
    {
      auto os = open_out(history_file);
      write_comments(os, s);
      write_history_csv(os, result.history);
    }
    if (result.history.best_epoch) {
      const auto& best = result.history.epochs[*result.history.best_epoch];
      out << "best epoch " << best.epoch << ": val_accuracy " << best.val_accuracy << ", val_nll "
          << best.val_nll << '\n';
    } else {
      out << "no epochs run; wrote initial model\n";
    }
    out << "model: " << model_file.string() << "\nhistory: " << history_file.string() << '\n';
    return kExitOk;
  }

  int cmd_predict() {
    const Settings s = effective_settings(global, predict_flags);
    const auto archive = load_model(model_path);
    const FeatureDataset data = load_csv(input_path);
    require(data.dim() == archive.model.feature_dim(), ErrorKind::shape,
            "input dim " + std::to_string(data.dim()) + " != model feature_dim " +
                std::to_string(archive.model.feature_dim()));
    const std::size_t n = s.count("mc_samples");
    const auto thresholds = s.thresholds();
    const double level = s.real("ci_level");
    const RngStream base(s.u64("seed"), kPredictStream);
    std::vector<PredictionRecord> records(data.size());
    parallel_for(data.size(), global.threads, [&](std::size_t i) {
      const auto r = predict(archive.model, data.features.row(i), n, base.split(i), 1, level);
      records[i] = make_record(data.ids[i], data.labels[i], r, thresholds);
    });

    std::unique_ptr<std::ofstream> file;
    std::ostream* os = &out;
    if (!output_path.empty()) {
      file = std::make_unique<std::ofstream>(open_out(output_path));
      os = file.get();
    }
    nlohmann::json header;
    header["schema_version"] = kReportSchemaVersion;
    header["mc_samples"] = archive.model.is_bayesian() ? n : 1;
    header["variant"] = to_string(archive.model.variant());
    header["config"] = s.values();
    *os << header.dump() << '\n';
    for (const auto& r : records) *os << to_json(r).dump() << '\n';
    return kExitOk;
  }

  int cmd_eval() {
    const Settings s = effective_settings(global, eval_flags);
    const auto archive = load_model(model_path);
    FeatureDataset data = load_csv(input_path);
    if (!eval_name.empty()) data.name = eval_name;
    const RngStream base(s.u64("seed"), kPredictStream);
    auto report = evaluate(archive.model, data, s.count("mc_samples"), s.thresholds(), base,
                           global.threads, s.real("ci_level"));
    report.config = s.values();
    const auto path = out_path(global, output_path, "eval_" + data.name + ".json");
    auto os = open_out(path);
    os << to_json(report).dump(1) << '\n';
    out << data.name << ": accuracy " << report.accuracy << ", referral_rate "
        << report.referral_rate << " -> " << path.string() << '\n';
    return kExitOk;
  }

  static EvalReport read_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::io, "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
      return report_from_json(nlohmann::json::parse(buf.str()));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::parse, path + ": " + e.what());
    }
  }

  int cmd_analyze() {
    const Settings s = effective_settings(global, analyze_flags);
    require(!analyze_reports.empty(), ErrorKind::invalid_input, "analyze needs --report");
    const std::size_t bins = s.count("entropy_bins");
    const std::size_t grid = s.count("kde_grid_points");
    for (const auto& path : analyze_reports) {
      const EvalReport rep = read_report(path);
      const std::size_t n_classes = rep.confusion.size();
      const auto hist = entropy_histogram(entropy_observations(rep), bins, n_classes);
      const auto hist_path = out_path(global, "", rep.dataset + "_entropy_hist.csv");
      {
        auto os = open_out(hist_path);
        write_comments(os, s);
        write_histogram_csv(os, hist);
      }
      out << rep.dataset << ": entropy histogram -> " << hist_path.string();
      if (!hist.incorrect_fraction) out << " (incorrect group absent)";
      if (!hist.correct_fraction) out << " (correct group absent)";
      out << '\n';

      const std::pair<const char*, double PredictionRecord::*> series[] = {
          {"uncertainty", &PredictionRecord::uncertainty_scalar},
          {"entropy", &PredictionRecord::entropy_bits}};
      for (const auto& [label, member] : series) {
        std::vector<double> values;
        for (const auto& r : rep.records) values.push_back(r.*member);
        try {
          const auto curve = kde(values, analyze_bandwidth, grid);
          const auto kde_path =
              out_path(global, "", rep.dataset + "_" + label + "_kde.csv");
          auto os = open_out(kde_path);
          write_comments(os, s);
          write_kde_csv(os, curve);
          out << rep.dataset << ": " << label << " KDE (h=" << curve.bandwidth << ") -> "
              << kde_path.string() << '\n';
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::degenerate_data && e.kind() != ErrorKind::bandwidth_undefined)
            throw;
          err << "warning: " << rep.dataset << ": " << label << " KDE skipped (" << e.what()
              << ")\n";
        }
      }
    }
    return kExitOk;
  }

  int cmd_compare() {
    const Settings s = effective_settings(global, compare_flags);
    const auto bayes_paths = split_list(compare_bayes);
    const auto base_paths = split_list(compare_baseline);
    std::vector<EvalReport> bayes, base;
    require(bayes_paths.size() == base_paths.size(), ErrorKind::invalid_input,
            "compare got " + std::to_string(bayes_paths.size()) + " bayesian reports and " +
                std::to_string(base_paths.size()) + " baseline reports");
    for (const auto& p : bayes_paths) bayes.push_back(read_report(p));
    for (const auto& p : base_paths) base.push_back(read_report(p));
    std::vector<std::string> names = split_list(compare_names);
    if (names.empty())
      for (const auto& r : bayes) names.push_back(r.dataset);
    const auto table = compare_report(bayes, base, names);
    {
      auto os = open_out(out_path(global, "", "comparison.csv"));
      write_comments(os, s);
      write_comparison_csv(os, table);
    }
    {
      auto os = open_out(out_path(global, "", "comparison.md"));
      write_comparison_table(os, table);
      os << "\n<!--\n";
      for (const auto& line : s.echo_lines()) os << line << '\n';
      os << "-->\n";
    }
    {
      auto os = open_out(out_path(global, "", "comparison.json"));
      auto j = to_json(table);
      j["config"] = s.values();
      os << j.dump(1) << '\n';
    }
    write_comparison_table(out, table);
    return kExitOk;
  }
};

inline int exit_code_for(ErrorKind kind) {
  return kind == ErrorKind::numeric ? kExitNumeric : kExitUsage;
}

// Parses argv and dispatches one subcommand. Errors become a single-line
// diagnostic on `err` and a nonzero status.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  App a(out, err);
  CLI::App app{"Variational classification head with uncertainty-aware referral"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", a.global.seed, "Random seed (u64)");
  app.add_option("--config", a.global.config_path, "Flat key=value config file");
  app.add_option("--out", a.global.out_dir, "Output directory");
  app.add_option("--threads", a.global.threads, "Worker threads for inference")
      ->check(CLI::PositiveNumber);
  app.add_option("--set", a.global.overrides, "Config override key=value (repeatable)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic feature dataset");
  synth->add_option("--kind", a.synth_kind, "blobs | shift")->check(CLI::IsMember({"blobs", "shift"}));
  synth->add_option("--n-per-class", a.synth_n_per_class, "Rows per class (blobs)");
  synth->add_option("--means", a.synth_means, "Class means, e.g. \"-2,0;2,0\" (blobs)");
  synth->add_option("--sigma", a.synth_sigma, "Cluster standard deviation (blobs)");
  synth->add_option("--name", a.synth_name, "Dataset name (blobs)");
  synth->add_option("--input", a.synth_input, "Dataset to transform (shift)");
  synth->add_option("--output", a.synth_output, "Output CSV (default <out>/synth.csv)");
  a.synth_flags.add(synth, "--noise-sigma", "noise_sigma", "Additive feature noise (shift)");
  a.synth_flags.add(synth, "--rotation", "rotation_angle", "Rotation in radians (shift)");
  a.synth_flags.add(synth, "--ood-offset", "ood_offset", "Translation vector, e.g. \"0,6\" (shift)");

  auto* train = app.add_subcommand("train", "Train a head on a feature CSV");
  train->add_option("--data", a.train_data, "Training CSV")->required();
  train->add_option("--val", a.train_val, "Validation CSV (default: split val_fraction off --data)");
  train->add_option("--variant", a.train_variant, "bayesian | baseline");
  train->add_option("--model", a.train_model, "Model archive path (default <out>/model.json)");
  train->add_option("--history", a.train_history, "History CSV (default <out>/history.csv)");
  a.train_flags.add(train, "--epochs", "epochs", "Training epochs");
  a.train_flags.add(train, "--learning-rate", "learning_rate", "RMSprop learning rate");
  a.train_flags.add(train, "--batch-size", "batch_size", "Minibatch size");
  a.train_flags.add(train, "--kl-weight-mode", "kl_weight_mode", "per_batch | per_dataset | none");

  auto* predict_cmd = app.add_subcommand("predict", "Emit one prediction record per input row");
  predict_cmd->add_option("--model", a.model_path, "Model archive")->required();
  predict_cmd->add_option("--input", a.input_path, "Input CSV")->required();
  predict_cmd->add_option("--output", a.output_path, "Output JSON lines (default stdout)");
  a.predict_flags.add(predict_cmd, "--n", "mc_samples", "Monte Carlo draws (default 50)");
  a.predict_flags.add(predict_cmd, "--uncertainty-threshold", "uncertainty_threshold", "Refer above this variance");
  a.predict_flags.add(predict_cmd, "--confidence-threshold", "confidence_threshold", "Refer below this confidence");

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a labelled CSV");
  eval->add_option("--model", a.model_path, "Model archive")->required();
  eval->add_option("--data", a.input_path, "Labelled CSV")->required();
  eval->add_option("--name", a.eval_name, "Dataset name (default: file stem)");
  eval->add_option("--output", a.output_path, "Report path (default <out>/eval_<name>.json)");
  a.eval_flags.add(eval, "--n", "mc_samples", "Monte Carlo draws (default 50)");
  a.eval_flags.add(eval, "--uncertainty-threshold", "uncertainty_threshold", "Refer above this variance");
  a.eval_flags.add(eval, "--confidence-threshold", "confidence_threshold", "Refer below this confidence");

  auto* analyze = app.add_subcommand("analyze", "Write KDE and entropy-histogram CSVs for reports");
  analyze->add_option("--report", a.analyze_reports, "Evaluation report(s)")->required();
  analyze->add_option("--bandwidth", a.analyze_bandwidth, "Fixed KDE bandwidth (default Silverman)");
  a.analyze_flags.add(analyze, "--bins", "entropy_bins", "Entropy histogram bins (default 20)");
  a.analyze_flags.add(analyze, "--grid-points", "kde_grid_points", "Minimum KDE grid points (default 512)");

  auto* compare = app.add_subcommand("compare", "Tabulate Bayesian vs baseline reports");
  compare->add_option("--bayes", a.compare_bayes, "Comma-separated Bayesian reports")->required();
  compare->add_option("--baseline", a.compare_baseline, "Comma-separated baseline reports")->required();
  compare->add_option("--names", a.compare_names, "Comma-separated dataset names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*synth) return a.cmd_synth();
    if (*train) return a.cmd_train();
    if (*predict_cmd) return a.cmd_predict();
    if (*eval) return a.cmd_eval();
    if (*analyze) return a.cmd_analyze();
    if (*compare) return a.cmd_compare();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: io error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitUsage;
}

}  // namespace bayeshead::cli
