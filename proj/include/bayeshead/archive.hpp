#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bayeshead/error.hpp"
#include "bayeshead/network.hpp"

namespace bayeshead {

inline constexpr int kArchiveFormatVersion = 1;

// Persisted model: parameters, prior, and the settings that produced it.
// Arrays are written as JSON numbers in shortest round-trip form, so
// load(save(m)) restores every double bit for bit.
struct ModelArchive {
  int format_version = kArchiveFormatVersion;
  HeadModel model;
  std::map<std::string, std::string> train_config;
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const ModelArchive& a) {
  const HeadModel& m = a.model;
  nlohmann::json j;
  j["format_version"] = a.format_version;
  j["variant"] = to_string(m.variant());
  j["feature_dim"] = m.feature_dim();
  j["hidden_units"] = m.hidden_units();
  j["n_classes"] = m.n_classes;
  j["hidden"] = {{"weights", std::vector<double>(m.hidden.weights.data().begin(),
                                                 m.hidden.weights.data().end())},
                 {"bias", m.hidden.bias},
                 {"activation", m.hidden.activation == Activation::relu ? "relu" : "identity"}};
  if (m.is_bayesian()) {
    const auto& v = m.variational();
    j["output"] = {{"mu", v.params.mu},
                   {"rho", v.params.rho},
                   {"sigma_forced_zero", v.sigma_forced_zero}};
    j["prior"] = {{"mix_weight", v.prior.mix_weight},
                  {"slab_sigma", v.prior.slab_sigma},
                  {"spike_sigma", v.prior.spike_sigma}};
  } else {
    const auto& d = m.point_output();
    j["output"] = {
        {"weights", std::vector<double>(d.weights.data().begin(), d.weights.data().end())},
        {"bias", d.bias}};
  }
  j["train_config"] = a.train_config;
  j["seed"] = a.seed;
  return j;
}

inline ModelArchive archive_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("format_version"), ErrorKind::corrupt_archive,
          "missing format_version");
  ModelArchive a;
  try {
    a.format_version = j.at("format_version").get<int>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::corrupt_archive, "format_version is not an integer");
  }
  require(a.format_version == kArchiveFormatVersion, ErrorKind::version,
          "archive format_version " + std::to_string(a.format_version) + ", supported " +
              std::to_string(kArchiveFormatVersion));
  try {
    const auto variant = j.at("variant").get<std::string>();
    require(variant == "bayesian" || variant == "baseline", ErrorKind::corrupt_archive,
            "unknown variant '" + variant + "'");
    const auto feature_dim = j.at("feature_dim").get<std::size_t>();
    const auto hidden_units = j.at("hidden_units").get<std::size_t>();
    HeadModel& m = a.model;
    m.n_classes = j.at("n_classes").get<std::size_t>();
    const auto& hidden = j.at("hidden");
    m.hidden.weights =
        Matrix(feature_dim, hidden_units, hidden.at("weights").get<std::vector<double>>());
    m.hidden.bias = hidden.at("bias").get<std::vector<double>>();
    m.hidden.activation =
        hidden.at("activation").get<std::string>() == "relu" ? Activation::relu : Activation::identity;
    const auto& out = j.at("output");
    if (variant == "bayesian") {
      VariationalDenseLayer v;
      v.in_dim = hidden_units;
      v.out_dim = m.n_classes;
      v.params.mu = out.at("mu").get<std::vector<double>>();
      v.params.rho = out.at("rho").get<std::vector<double>>();
      v.sigma_forced_zero = out.at("sigma_forced_zero").get<bool>();
      const auto& p = j.at("prior");
      v.prior.mix_weight = p.at("mix_weight").get<double>();
      v.prior.slab_sigma = p.at("slab_sigma").get<double>();
      v.prior.spike_sigma = p.at("spike_sigma").get<double>();
      m.output = std::move(v);
    } else {
      DenseLayer d;
      d.weights = Matrix(hidden_units, m.n_classes, out.at("weights").get<std::vector<double>>());
      d.bias = out.at("bias").get<std::vector<double>>();
      d.activation = Activation::identity;
      m.output = std::move(d);
    }
    a.train_config = j.at("train_config").get<std::map<std::string, std::string>>();
    a.seed = j.at("seed").get<std::uint64_t>();
    m.validate();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::corrupt_archive, e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::corrupt_archive) throw;
    fail(ErrorKind::corrupt_archive, e.what());
  }
  return a;
}

inline void save_model(const std::filesystem::path& path, const ModelArchive& a) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot write " + path.string());
  out << to_json(a).dump(1) << '\n';
  require(out.good(), ErrorKind::io, "write failed for " + path.string());
}

inline ModelArchive load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::corrupt_archive, path.string() + ": " + e.what());
  }
  return archive_from_json(j);
}

}  // namespace bayeshead
