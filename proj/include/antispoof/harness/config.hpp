#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "antispoof/error.hpp"
#include "antispoof/eval/roc.hpp"
#include "antispoof/nn/network.hpp"
#include "antispoof/nn/trainer.hpp"
#include "antispoof/svm/grid.hpp"

namespace antispoof::harness {

enum class Protocol { Intra, Inter, Combined };

inline const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::Intra: return "intra";
    case Protocol::Inter: return "inter";
    case Protocol::Combined: return "combined";
  }
  return "?";
}

inline Protocol protocol_from_string(const std::string& s) {
  if (s == "intra") return Protocol::Intra;
  if (s == "inter") return Protocol::Inter;
  if (s == "combined") return Protocol::Combined;
  throw ConfigError("unknown protocol '" + s + "' (expected intra, inter or combined)");
}

struct SvmConfig {
  std::vector<double> C_grid = svm::kDefaultCGrid;
  std::vector<double> gamma_scales = svm::kDefaultGammaScales;
  std::vector<double> gamma_grid;  // explicit values; overrides gamma_scales when non-empty
  double tol = 1e-3;
};

struct ExperimentConfig {
  Protocol protocol = Protocol::Intra;
  std::map<std::string, std::filesystem::path> datasets;  // name -> manifest
  std::vector<std::string> train_datasets;
  std::vector<std::string> eval_datasets;
  std::vector<int> scale_indices{3};
  std::vector<int> frame_counts{1};
  nn::TrainConfig train{};
  nn::NetworkOptions network{};
  SvmConfig svm{};
  std::size_t folds = 0;  // 0: use the dev split; k >= 2: k folds over train subjects
  eval::ScoreLevel score_level = eval::ScoreLevel::Sequence;
  std::filesystem::path output_dir = "out";
  std::filesystem::path cache_dir;  // empty: no cache
  std::uint64_t rng_seed = 42;

  void validate() const;
};

namespace detail {

inline const char* decay_name(nn::DecayMode m) {
  return m == nn::DecayMode::LearningRate ? "learning_rate" : "weight";
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["protocol"] = to_string(c.protocol);
  j["datasets"] = nlohmann::json::object();
  for (const auto& [name, path] : c.datasets) j["datasets"][name] = path.generic_string();
  j["train_datasets"] = c.train_datasets;
  j["eval_datasets"] = c.eval_datasets;
  j["scale_indices"] = c.scale_indices;
  j["frame_counts"] = c.frame_counts;
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"weight_decay", c.train.weight_decay},
                {"momentum", c.train.momentum},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"decay_mode", detail::decay_name(c.train.decay_mode)},
                {"init", {{"kind", c.train.init.kind == nn::InitKind::He ? "he" : "gaussian"},
                          {"std", c.train.init.std}}}};
  j["network"] = {{"conv_channels", c.network.conv_channels},
                  {"fc_dims", c.network.fc_dims},
                  {"dropout", c.network.dropout}};
  j["svm"] = {{"C_grid", c.svm.C_grid},
              {"gamma_scales", c.svm.gamma_scales},
              {"gamma_grid", c.svm.gamma_grid},
              {"tol", c.svm.tol}};
  j["folds"] = c.folds;
  j["score_level"] = c.score_level == eval::ScoreLevel::Sequence ? "sequence" : "frame";
  j["output_dir"] = c.output_dir.generic_string();
  j["cache_dir"] = c.cache_dir.generic_string();
  j["rng_seed"] = c.rng_seed;
  return j;
}

// Relative paths are resolved against `base_dir` (the config file's directory).
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    detail::reject_unknown(j,
                           {"protocol", "datasets", "train_datasets", "eval_datasets", "scale_indices",
                            "frame_counts", "train", "network", "svm", "folds", "score_level", "output_dir",
                            "cache_dir", "rng_seed"},
                           "config");
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path path(p);
      return path.is_absolute() ? path : (base_dir / path).lexically_normal();
    };
    c.protocol = protocol_from_string(j.at("protocol").get<std::string>());
    for (const auto& [name, path] : j.at("datasets").items()) c.datasets[name] = resolve(path.get<std::string>());
    c.train_datasets = j.at("train_datasets").get<std::vector<std::string>>();
    c.eval_datasets = detail::get_or(j, "eval_datasets", std::vector<std::string>{});
    c.scale_indices = detail::get_or(j, "scale_indices", c.scale_indices);
    c.frame_counts = detail::get_or(j, "frame_counts", c.frame_counts);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      detail::reject_unknown(t, {"learning_rate", "weight_decay", "momentum", "batch_size", "epochs", "decay_mode", "init"},
                             "config.train");
      c.train.learning_rate = detail::get_or(t, "learning_rate", c.train.learning_rate);
      c.train.weight_decay = detail::get_or(t, "weight_decay", c.train.weight_decay);
      c.train.momentum = detail::get_or(t, "momentum", c.train.momentum);
      c.train.batch_size = detail::get_or(t, "batch_size", c.train.batch_size);
      c.train.epochs = detail::get_or(t, "epochs", c.train.epochs);
      const std::string decay = detail::get_or<std::string>(t, "decay_mode", "weight");
      if (decay == "weight") c.train.decay_mode = nn::DecayMode::WeightDecay;
      else if (decay == "learning_rate") c.train.decay_mode = nn::DecayMode::LearningRate;
      else throw ConfigError("config.train.decay_mode must be 'weight' or 'learning_rate'");
      if (t.contains("init")) {
        const auto& i = t.at("init");
        detail::reject_unknown(i, {"kind", "std"}, "config.train.init");
        const std::string kind = detail::get_or<std::string>(i, "kind", "gaussian");
        if (kind == "gaussian") c.train.init.kind = nn::InitKind::Gaussian;
        else if (kind == "he") c.train.init.kind = nn::InitKind::He;
        else throw ConfigError("config.train.init.kind must be 'gaussian' or 'he'");
        c.train.init.std = detail::get_or(i, "std", c.train.init.std);
      }
    }
    if (j.contains("network")) {
      const auto& n = j.at("network");
      detail::reject_unknown(n, {"conv_channels", "fc_dims", "dropout"}, "config.network");
      c.network.conv_channels = detail::get_or(n, "conv_channels", c.network.conv_channels);
      c.network.fc_dims = detail::get_or(n, "fc_dims", c.network.fc_dims);
      c.network.dropout = detail::get_or(n, "dropout", c.network.dropout);
    }
    if (j.contains("svm")) {
      const auto& s = j.at("svm");
      detail::reject_unknown(s, {"C_grid", "gamma_scales", "gamma_grid", "tol"}, "config.svm");
      c.svm.C_grid = detail::get_or(s, "C_grid", c.svm.C_grid);
      c.svm.gamma_scales = detail::get_or(s, "gamma_scales", c.svm.gamma_scales);
      c.svm.gamma_grid = detail::get_or(s, "gamma_grid", c.svm.gamma_grid);
      c.svm.tol = detail::get_or(s, "tol", c.svm.tol);
    }
    c.folds = detail::get_or<std::size_t>(j, "folds", 0);
    const std::string level = detail::get_or<std::string>(j, "score_level", "sequence");
    if (level == "frame") c.score_level = eval::ScoreLevel::Frame;
    else if (level == "sequence") c.score_level = eval::ScoreLevel::Sequence;
    else throw ConfigError("config.score_level must be 'frame' or 'sequence'");
    c.output_dir = resolve(detail::get_or<std::string>(j, "output_dir", "out"));
    const std::string cache = detail::get_or<std::string>(j, "cache_dir", "");
    if (!cache.empty()) c.cache_dir = resolve(cache);
    c.rng_seed = detail::get_or<std::uint64_t>(j, "rng_seed", c.rng_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.eval_datasets.empty() && c.protocol != Protocol::Inter) c.eval_datasets = c.train_datasets;
  return c;
}

// Accepts an experiment config or a run.json snapshot (its "config" member).
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  if (j.is_object() && j.contains("config") && j.contains("format") && j.at("format") == "antispoof-run")
    j = j.at("config");
  return config_from_json(j, std::filesystem::absolute(path).parent_path());
}

inline void ExperimentConfig::validate() const {
  auto unique = [](const std::vector<std::string>& v) { return std::set<std::string>(v.begin(), v.end()).size() == v.size(); };
  if (train_datasets.empty()) throw ConfigError("config: train_datasets is empty");
  if (eval_datasets.empty()) throw ConfigError("config: eval_datasets is empty");
  if (!unique(train_datasets) || !unique(eval_datasets)) throw ConfigError("config: duplicated dataset name");
  for (const auto* list : {&train_datasets, &eval_datasets})
    for (const auto& name : *list)
      if (!datasets.count(name)) throw ConfigError("config: dataset '" + name + "' has no manifest entry");
  std::set<std::filesystem::path> manifests;
  for (const auto& name : train_datasets)
    if (!manifests.insert(datasets.at(name)).second)
      throw ConfigError("config: datasets share the manifest " + datasets.at(name).string());
  switch (protocol) {
    case Protocol::Intra:
      if (train_datasets.size() != 1 || eval_datasets != train_datasets)
        throw ConfigError("intra protocol trains and evaluates on one and the same dataset");
      break;
    case Protocol::Inter:
      if (train_datasets.size() != 1 || eval_datasets.size() != 1)
        throw ConfigError("inter protocol needs exactly one train and one eval dataset");
      if (train_datasets == eval_datasets || datasets.at(train_datasets[0]) == datasets.at(eval_datasets[0]))
        throw ConfigError("inter protocol needs different train and eval datasets");
      break;
    case Protocol::Combined: {
      if (train_datasets.size() < 2) throw ConfigError("combined protocol needs at least 2 train datasets");
      const std::set<std::string> a(train_datasets.begin(), train_datasets.end()),
          b(eval_datasets.begin(), eval_datasets.end());
      if (a != b) throw ConfigError("combined protocol evaluates on its train datasets");
      break;
    }
  }
  if (folds == 1) throw ConfigError("config: folds must be 0 or at least 2");
  if (folds > 0 && protocol != Protocol::Intra) throw ConfigError("config: folds apply to the intra protocol only");
  auto check_ints = [](const std::vector<int>& v, int lo, int hi, const char* what) {
    if (v.empty()) throw ConfigError(std::string("config: ") + what + " is empty");
    if (std::set<int>(v.begin(), v.end()).size() != v.size())
      throw ConfigError(std::string("config: duplicated ") + what);
    for (int x : v)
      if (x < lo || x > hi)
        throw ConfigError(std::string("config: ") + what + " must lie in " + std::to_string(lo) + ".." +
                          std::to_string(hi));
  };
  check_ints(scale_indices, 1, 5, "scale_indices");
  check_ints(frame_counts, 1, 3, "frame_counts");
  train.validate();
  nn::NetworkOptions probe = network;
  probe.frames = 1;
  try {
    nn::infer_shapes(nn::make_network(probe));
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("config.network: ") + e.what());
  }
  if (svm.C_grid.empty()) throw ConfigError("config: svm.C_grid is empty");
  if (svm.gamma_grid.empty() && svm.gamma_scales.empty()) throw ConfigError("config: svm gamma grid is empty");
  for (double v : svm.C_grid)
    if (!(v > 0)) throw ConfigError("config: svm.C_grid values must be > 0");
  for (const auto* g : {&svm.gamma_grid, &svm.gamma_scales})
    for (double v : *g)
      if (!(v > 0)) throw ConfigError("config: svm gamma values must be > 0");
  if (!(svm.tol > 0)) throw ConfigError("config: svm.tol must be > 0");
}

}  // namespace antispoof::harness
