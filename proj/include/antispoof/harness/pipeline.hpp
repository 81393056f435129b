#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "antispoof/data/manifest.hpp"
#include "antispoof/data/samples.hpp"
#include "antispoof/error.hpp"
#include "antispoof/eval/csv.hpp"
#include "antispoof/eval/folds.hpp"
#include "antispoof/eval/report.hpp"
#include "antispoof/eval/roc.hpp"
#include "antispoof/harness/artifacts.hpp"
#include "antispoof/harness/config.hpp"
#include "antispoof/nn/checkpoint.hpp"
#include "antispoof/nn/network.hpp"
#include "antispoof/nn/trainer.hpp"
#include "antispoof/svm/grid.hpp"
#include "antispoof/svm/svm.hpp"

namespace antispoof::harness {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "1.0.0";

// One CNN + SVM training: a (scale, frames) cell, optionally one fold of it.
struct Job {
  int scale_index = 3;
  int frame_count = 1;
  std::optional<std::size_t> fold;

  std::string cell_name() const {
    return "s" + std::to_string(scale_index) + "_f" + std::to_string(frame_count);
  }
  std::string name() const { return fold ? cell_name() + "_k" + std::to_string(*fold) : cell_name(); }
};

using Log = std::function<void(const std::string&)>;

inline Log stderr_log() {
  return [](const std::string& m) { std::cerr << m << '\n'; };
}

// Loaded manifests plus everything derived from the config once per run.
struct Context {
  ExperimentConfig cfg;
  std::map<std::string, data::Manifest> manifests;
  std::map<std::string, eval::FoldPlan> folds;  // intra with folds only
  Log log = stderr_log();

  fs::path out() const { return cfg.output_dir; }
};

inline std::vector<std::string> subjects_of(const data::Manifest& m, data::Split split) {
  std::set<std::string> s;
  for (const auto& r : m.records)
    if (r.split == split) s.insert(r.subject_id);
  return {s.begin(), s.end()};
}

inline bool has_split(const data::Manifest& m, data::Split split) {
  for (const auto& r : m.records)
    if (r.split == split) return true;
  return false;
}

// Validates the config, loads every manifest and checks the protocol's split needs.
inline Context make_context(const ExperimentConfig& cfg, Log log = stderr_log()) {
  cfg.validate();
  Context ctx{cfg, {}, {}, std::move(log)};
  std::set<std::string> names(cfg.train_datasets.begin(), cfg.train_datasets.end());
  names.insert(cfg.eval_datasets.begin(), cfg.eval_datasets.end());
  for (const auto& n : names) ctx.manifests[n] = data::load_manifest(cfg.datasets.at(n));
  for (const auto& n : cfg.train_datasets)
    if (!has_split(ctx.manifests.at(n), data::Split::Train))
      throw ConfigError("dataset '" + n + "' has no train split");
  for (const auto& n : cfg.eval_datasets) {
    if (!has_split(ctx.manifests.at(n), data::Split::Test)) throw ConfigError("dataset '" + n + "' has no test split");
    if (cfg.folds == 0 && !has_split(ctx.manifests.at(n), data::Split::Dev))
      throw ConfigError("dataset '" + n + "' has no dev split; set folds to use cross validation");
  }
  if (cfg.folds > 0) {
    const auto& n = cfg.train_datasets.front();
    ctx.folds[n] = eval::make_folds(subjects_of(ctx.manifests.at(n), data::Split::Train), cfg.folds, cfg.rng_seed);
  }
  return ctx;
}

inline std::vector<Job> jobs_of(const ExperimentConfig& cfg) {
  std::vector<Job> jobs;
  for (int f : cfg.frame_counts)
    for (int s : cfg.scale_indices) {
      if (cfg.folds == 0) jobs.push_back({s, f, std::nullopt});
      else
        for (std::size_t k = 0; k < cfg.folds; ++k) jobs.push_back({s, f, k});
    }
  return jobs;
}

// Seeds depend on the job only, so a model trained for one protocol is the
// same model another protocol would train on the same data.
inline std::pair<std::uint64_t, std::uint64_t> job_seeds(std::uint64_t seed, const Job& job) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(job.scale_index),
                    std::uint32_t(job.frame_count), std::uint32_t(job.fold ? *job.fold + 1 : 0)};
  std::uint32_t w[4];
  seq.generate(w, w + 4);
  return {std::uint64_t(w[0]) << 32 | w[1], std::uint64_t(w[2]) << 32 | w[3]};
}

// ---------------------------------------------------------------------------
// Output layout

struct Paths {
  fs::path root;
  Job job;

  fs::path prepared(const std::string& role) const { return root / "prepared" / job.name() / (role + ".bin"); }
  fs::path checkpoint() const { return root / "checkpoints" / (job.name() + ".ck"); }
  fs::path train_log() const { return root / "checkpoints" / (job.name() + "_loss.csv"); }
  fs::path features(const std::string& role) const { return root / "features" / job.name() / (role + ".bin"); }
  fs::path svm_model() const { return root / "svm" / (job.name() + ".json"); }
  fs::path svm_grid() const { return root / "svm" / (job.name() + "_grid.csv"); }
  fs::path scores(const std::string& role) const { return root / "scores" / job.name() / (role + ".csv"); }
  fs::path roc(const std::string& suffix) const { return root / "roc" / (job.name() + suffix + ".csv"); }
  fs::path result() const { return root / "results" / (job.name() + ".json"); }
  fs::path failure() const { return root / "failures" / (job.name() + ".txt"); }
};

// Sample roles of a job. "svm_dev" selects SVM hyperparameters and comes from
// the training side; "dev" fixes the threshold and comes from the eval side.
inline std::vector<std::string> roles_of(const ExperimentConfig& cfg) {
  std::vector<std::string> r{"train", "svm_dev", "dev"};
  for (const auto& n : cfg.eval_datasets) r.push_back("test_" + n);
  return r;
}

inline std::vector<std::string> feature_roles(const ExperimentConfig& cfg) { return roles_of(cfg); }

// ---------------------------------------------------------------------------
// Stage 1: prepare

namespace detail {

inline void append(std::vector<data::SampleTensor>& dst, std::vector<data::SampleTensor> src,
                   const std::string& dataset) {
  for (auto& s : src) {
    s.source.dataset = dataset;
    dst.push_back(std::move(s));
  }
}

inline std::vector<data::SampleTensor> split_samples(const Context& ctx, const std::string& dataset,
                                                     data::Split split, const Job& job, data::WindowMode mode) {
  std::vector<data::SampleTensor> out;
  append(out,
         data::build_samples(ctx.manifests.at(dataset), {split, job.scale_index, job.frame_count, mode}),
         dataset);
  return out;
}

inline std::vector<data::SampleTensor> keep_fold(std::vector<data::SampleTensor> v, const eval::FoldPlan& plan,
                                                 std::size_t fold, bool inside) {
  std::vector<data::SampleTensor> out;
  for (auto& s : v)
    if (plan.in_fold(s.source.subject_id, fold) == inside) out.push_back(std::move(s));
  return out;
}

inline void require_samples(const std::vector<data::SampleTensor>& v, const std::string& role) {
  if (v.empty()) throw EmptyDatasetError("no samples for " + role + " (too few frames per sequence?)");
}

}  // namespace detail

inline void stage_prepare(const Context& ctx, const Job& job) {
  const auto& cfg = ctx.cfg;
  const Paths p{ctx.out(), job};
  using data::Split;
  using data::WindowMode;
  std::vector<data::SampleTensor> train, svm_dev, dev;
  if (job.fold) {
    const auto& name = cfg.train_datasets.front();
    const auto& plan = ctx.folds.at(name);
    train = detail::keep_fold(detail::split_samples(ctx, name, Split::Train, job, WindowMode::Tile), plan,
                              *job.fold, false);
    dev = detail::keep_fold(detail::split_samples(ctx, name, Split::Train, job, WindowMode::Slide), plan,
                            *job.fold, true);
    svm_dev = dev;
  } else {
    for (const auto& n : cfg.train_datasets) {
      detail::append(train, detail::split_samples(ctx, n, Split::Train, job, WindowMode::Tile), n);
      if (has_split(ctx.manifests.at(n), Split::Dev))
        detail::append(svm_dev, detail::split_samples(ctx, n, Split::Dev, job, WindowMode::Slide), n);
    }
    for (const auto& n : cfg.eval_datasets)
      detail::append(dev, detail::split_samples(ctx, n, Split::Dev, job, WindowMode::Slide), n);
    if (svm_dev.empty()) svm_dev = dev;  // training side without a dev split
  }
  detail::require_samples(train, "train");
  detail::require_samples(svm_dev, "svm_dev");
  detail::require_samples(dev, "dev");
  save_sample_set(p.prepared("train"), to_sample_set(train));
  save_sample_set(p.prepared("svm_dev"), to_sample_set(svm_dev));
  save_sample_set(p.prepared("dev"), to_sample_set(dev));
  for (const auto& n : cfg.eval_datasets) {
    auto test = detail::split_samples(ctx, n, Split::Test, job, WindowMode::Slide);
    detail::require_samples(test, "test_" + n);
    save_sample_set(p.prepared("test_" + n), to_sample_set(test));
  }
}

// ---------------------------------------------------------------------------
// Stage 2: train-cnn

namespace detail {

inline nn::Tensorf set_mean(const SampleSet& s) {
  if (s.size() == 0) throw EmptyDatasetError("mean of an empty set");
  nn::Shape shape(s.values.shape().begin() + 1, s.values.shape().end());
  const std::size_t row = s.values.size() / s.size();
  std::vector<double> acc(row, 0.0);
  const float* v = s.values.data();
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t k = 0; k < row; ++k) acc[k] += v[i * row + k];
  nn::Tensorf mean(shape);
  for (std::size_t k = 0; k < row; ++k) mean[k] = float(acc[k] / double(s.size()));
  return mean;
}

inline nn::Tensorf centralized(const SampleSet& s, const nn::Tensorf& mean) {
  nn::Shape row_shape(s.values.shape().begin() + 1, s.values.shape().end());
  nn::require_shape(mean, row_shape, "centralize");
  nn::Tensorf out = s.values;
  const std::size_t row = mean.size();
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t k = 0; k < row; ++k) out[i * row + k] -= mean[k];
  return out;
}

inline std::string cache_key(const std::string& stage, const std::vector<std::string>& parts) {
  Fnv1a h;
  h.add(stage).add(kVersion);
  for (const auto& s : parts) h.add(s);
  return h.hex();
}

inline bool cache_fetch(const Context& ctx, const std::string& stage, const std::string& key, const fs::path& dst) {
  if (ctx.cfg.cache_dir.empty()) return false;
  const fs::path src = ctx.cfg.cache_dir / stage / key;
  if (!fs::exists(src)) return false;
  fs::create_directories(dst.parent_path());
  fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
  return true;
}

inline void cache_store(const Context& ctx, const std::string& stage, const std::string& key, const fs::path& src) {
  if (ctx.cfg.cache_dir.empty()) return;
  const fs::path dst = ctx.cfg.cache_dir / stage / key;
  fs::create_directories(dst.parent_path());
  const fs::path tmp = dst.string() + ".tmp";
  fs::copy_file(src, tmp, fs::copy_options::overwrite_existing);
  fs::rename(tmp, dst);
}

}  // namespace detail

inline nn::NetworkSpec network_for(const ExperimentConfig& cfg, const Job& job) {
  nn::NetworkOptions o = cfg.network;
  o.frames = std::size_t(job.frame_count);
  return nn::make_network(o);
}

inline void stage_train_cnn(const Context& ctx, const Job& job) {
  const Paths p{ctx.out(), job};
  const std::string train_bytes = read_file(p.prepared("train"));
  const nn::NetworkSpec spec = network_for(ctx.cfg, job);
  nn::TrainConfig tc = ctx.cfg.train;
  const auto [init_seed, train_seed] = job_seeds(ctx.cfg.rng_seed, job);
  tc.rng_seed = train_seed;
  const nlohmann::json train_json = to_json(ctx.cfg)["train"];
  const std::string key = detail::cache_key(
      "cnn", {train_bytes, nn::to_json(spec).dump(), train_json.dump(), std::to_string(init_seed),
              std::to_string(train_seed)});
  if (detail::cache_fetch(ctx, "cnn", key + ".ck", p.checkpoint()) &&
      detail::cache_fetch(ctx, "cnn", key + "_loss.csv", p.train_log())) {
    ctx.log(job.name() + ": checkpoint taken from cache");
    return;
  }
  const SampleSet train = deserialize_sample_set(train_bytes, p.prepared("train").string());
  nn::Checkpoint ck;
  ck.spec = spec;
  ck.mean = detail::set_mean(train);
  ck.parameters = nn::init_parameters<float>(spec, tc.init, init_seed);
  std::vector<std::size_t> labels;
  for (const auto& m : train.meta)
    labels.push_back(m.label == data::Label::Genuine ? nn::kGenuineClass : nn::kAttackClass);
  const nn::Tensorf inputs = detail::centralized(train, ck.mean);
  std::string loss_csv = "epoch,loss\n";
  const auto started = std::chrono::steady_clock::now();
  const nn::TrainReport rep =
      nn::train_network(spec, ck.parameters, inputs, labels, tc, [&](std::size_t epoch, double loss) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s: epoch %zu/%zu loss %.4f (%.0f s)", job.name().c_str(), epoch + 1,
                      tc.epochs, loss, secs);
        ctx.log(buf);
        loss_csv += std::to_string(epoch + 1) + "," + eval::format_real(loss) + "\n";
      });
  loss_csv += "final," + eval::format_real(rep.final_loss) + "\n";
  fs::create_directories(p.checkpoint().parent_path());
  nn::save_checkpoint(ck, p.checkpoint());
  write_file(p.train_log(), loss_csv);
  detail::cache_store(ctx, "cnn", key + ".ck", p.checkpoint());
  detail::cache_store(ctx, "cnn", key + "_loss.csv", p.train_log());
}

// ---------------------------------------------------------------------------
// Stage 3: extract

// Last-FC activations in eval mode (dropout off), one row per sample.
inline SampleSet extract_features(const nn::Checkpoint& ck, const SampleSet& s, std::size_t batch = 32) {
  const nn::Tensorf inputs = detail::centralized(s, ck.mean);
  const std::size_t width = nn::feature_width(ck.spec);
  std::vector<float> feats;
  feats.reserve(s.size() * width);
  for (std::size_t start = 0; start < s.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(s.size(), start + batch); ++i) idx.push_back(i);
    const auto r = nn::network_forward(ck.spec, ck.parameters, nn::gather_batch(inputs, idx), nn::Mode::Eval);
    feats.insert(feats.end(), r.features.values().begin(), r.features.values().end());
  }
  return {s.meta, nn::Tensorf({s.size(), width}, std::move(feats))};
}

inline void stage_extract(const Context& ctx, const Job& job) {
  const Paths p{ctx.out(), job};
  const nn::Checkpoint ck = nn::load_checkpoint(p.checkpoint());
  for (const auto& role : feature_roles(ctx.cfg))
    save_sample_set(p.features(role), extract_features(ck, load_sample_set(p.prepared(role))));
}

// ---------------------------------------------------------------------------
// Stage 4: train-svm

inline svm::LabeledSet labeled(const SampleSet& f) {
  svm::LabeledSet s;
  const std::size_t width = f.values.size() / std::max<std::size_t>(f.size(), 1);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const float* row = f.values.data() + i * width;
    s.x.emplace_back(row, row + width);
    s.y.push_back(f.meta[i].label == data::Label::Genuine ? 1 : -1);
  }
  return s;
}

inline std::vector<eval::ScoredSample> scored(const SampleSet& f, const svm::Vector& scores) {
  std::vector<eval::ScoredSample> out;
  for (std::size_t i = 0; i < f.size(); ++i)
    out.push_back({scores[i], f.meta[i].label == data::Label::Genuine ? eval::Truth::Genuine : eval::Truth::Attack,
                   f.meta[i].source.dataset, f.meta[i].source.subject_id, f.meta[i].source.sequence_id});
  return out;
}

inline svm::Vector decisions(const svm::SvmModel& m, const svm::LabeledSet& s) {
  svm::Vector f;
  f.reserve(s.size());
  for (const auto& x : s.x) f.push_back(svm::svm_decision(m, x));
  return f;
}

inline void stage_train_svm(const Context& ctx, const Job& job) {
  const Paths p{ctx.out(), job};
  const auto& sc = ctx.cfg.svm;
  const SampleSet train_f = load_sample_set(p.features("train"));
  const SampleSet dev_f = load_sample_set(p.features("svm_dev"));
  const svm::LabeledSet train = labeled(train_f), dev = labeled(dev_f);
  const auto gammas = sc.gamma_grid.empty() ? svm::default_gamma_grid(train, sc.gamma_scales) : sc.gamma_grid;
  const eval::ScoreLevel level = ctx.cfg.score_level;
  const svm::DevScorer scorer = [&](const svm::Vector& f) {
    return eval::eer_threshold(eval::at_level(scored(dev_f, f), level)).eer;
  };
  svm::SmoOptions opt;
  opt.tol = sc.tol;
  const svm::GridResult g = svm::grid_search(train, dev, sc.C_grid, gammas, scorer, opt);
  std::string grid_csv = "C,gamma,dev_eer,converged,error\n";
  for (const auto& c : g.cells) {
    grid_csv += eval::format_real(c.C) + "," + eval::format_real(c.gamma) + "," +
                (c.dev_eer ? eval::format_real(*c.dev_eer) : "NA") + "," + (c.converged ? "1" : "0") + ",";
    for (char ch : c.error) grid_csv += (ch == ',' || ch == '\n') ? ' ' : ch;
    grid_csv += "\n";
  }
  const svm::SmoResult final_model = svm::train_svm(train, g.C, g.gamma, opt);
  if (!final_model.converged)
    ctx.log("warning: " + job.name() + ": SMO hit its iteration cap; using the best-so-far model");
  svm::save_model(p.svm_model(), final_model.model);
  write_file(p.svm_grid(), grid_csv);
}

// ---------------------------------------------------------------------------
// Stage 5: eval

struct JobResult {
  double dev_eer = 0, threshold = 0, dev_far = 0, dev_frr = 0;
  std::map<std::string, eval::OperatingPoint> test;  // per eval dataset
};

inline nlohmann::json to_json(const JobResult& r) {
  nlohmann::json j;
  j["dev_eer"] = r.dev_eer;
  j["threshold"] = r.threshold;
  j["dev_far"] = r.dev_far;
  j["dev_frr"] = r.dev_frr;
  j["test"] = nlohmann::json::object();
  for (const auto& [n, op] : r.test) j["test"][n] = {{"hter", op.hter()}, {"far", op.far}, {"frr", op.frr}};
  return j;
}

inline JobResult job_result_from_json(const nlohmann::json& j) {
  JobResult r;
  r.dev_eer = j.at("dev_eer").get<double>();
  r.threshold = j.at("threshold").get<double>();
  r.dev_far = j.at("dev_far").get<double>();
  r.dev_frr = j.at("dev_frr").get<double>();
  for (const auto& [n, t] : j.at("test").items())
    r.test[n] = {r.threshold, t.at("far").get<double>(), t.at("frr").get<double>()};
  return r;
}

inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline JobResult stage_eval(const Context& ctx, const Job& job) {
  const Paths p{ctx.out(), job};
  const svm::SvmModel model = svm::load_model(p.svm_model());
  const eval::ScoreLevel level = ctx.cfg.score_level;
  auto score_role = [&](const std::string& role) {
    const SampleSet f = load_sample_set(p.features(role));
    auto s = scored(f, decisions(model, labeled(f)));
    eval::write_scores(p.scores(role), s);
    return eval::at_level(s, level);
  };
  JobResult r;
  const eval::EerResult e = eval::eer_threshold(score_role("dev"));
  r.dev_eer = e.eer;
  r.threshold = e.threshold;
  r.dev_far = e.far;
  r.dev_frr = e.frr;
  const bool single = ctx.cfg.eval_datasets.size() == 1;
  for (const auto& n : ctx.cfg.eval_datasets) {
    const auto test = score_role("test_" + n);
    r.test[n] = eval::operating_point(test, r.threshold);
    eval::write_roc(p.roc(single ? "" : "_" + n), eval::roc_points(test));
  }
  write_file(p.result(), json_text(to_json(r)));
  return r;
}

// ---------------------------------------------------------------------------
// Drivers

using Stage = std::function<void(const Context&, const Job&)>;

struct StageDef {
  const char* name;
  Stage run;
};

inline const std::vector<StageDef>& stages() {
  static const std::vector<StageDef> s = {
      {"prepare", stage_prepare},
      {"train-cnn", stage_train_cnn},
      {"extract", stage_extract},
      {"train-svm", stage_train_svm},
      {"eval", [](const Context& c, const Job& j) { stage_eval(c, j); }},
  };
  return s;
}

inline std::optional<std::string> failure_of(const Context& ctx, const Job& job) {
  const fs::path f = Paths{ctx.out(), job}.failure();
  if (!fs::exists(f)) return std::nullopt;
  return read_file(f);
}

// Runs one stage over every job. A job that failed earlier is skipped; a new
// failure is recorded and the job is left out of later stages and the report.
// Returns the number of jobs that failed so far.
inline std::size_t run_stage(const Context& ctx, const std::string& stage_name) {
  const StageDef* def = nullptr;
  for (const auto& s : stages())
    if (stage_name == s.name) def = &s;
  if (!def) throw ConfigError("unknown stage " + stage_name);
  std::size_t failed = 0;
  for (const auto& job : jobs_of(ctx.cfg)) {
    const Paths p{ctx.out(), job};
    if (def == &stages().front()) fs::remove(p.failure());
    if (failure_of(ctx, job)) {
      ++failed;
      continue;
    }
    try {
      ctx.log(job.name() + ": " + def->name);
      def->run(ctx, job);
    } catch (const Error& e) {
      ++failed;
      write_file(p.failure(), std::string(def->name) + ": " + e.what() + "\n");
      ctx.log("error: " + job.name() + ": " + def->name + ": " + e.what());
    } catch (const std::filesystem::filesystem_error& e) {
      ++failed;
      write_file(p.failure(), std::string(def->name) + ": " + e.what() + "\n");
      ctx.log("error: " + job.name() + ": " + def->name + ": " + e.what());
    }
  }
  return failed;
}

// Per-eval-dataset reports assembled from the job results on disk. Cells with
// a failed or missing job are left empty.
struct ReportSet {
  std::vector<std::pair<std::string, eval::EvalReport>> reports;
  std::vector<eval::ScenarioResult> scenarios;  // first eval dataset, for inspection
  std::map<std::string, std::string> failures;  // job name -> cause
};

inline ReportSet collect_reports(const Context& ctx) {
  ReportSet out;
  const auto& cfg = ctx.cfg;
  const auto jobs = jobs_of(cfg);
  std::map<std::string, JobResult> results;
  for (const auto& job : jobs) {
    const Paths p{ctx.out(), job};
    if (auto f = failure_of(ctx, job)) {
      while (!f->empty() && f->back() == '\n') f->pop_back();
      out.failures[job.name()] = *f;
      continue;
    }
    if (!fs::exists(p.result())) {
      out.failures[job.name()] = "no result (stages not run)";
      continue;
    }
    results[job.name()] = job_result_from_json(nlohmann::json::parse(read_file(p.result())));
  }
  for (const auto& n : cfg.eval_datasets) {
    std::vector<eval::ScenarioResult> cells;
    for (int f : cfg.frame_counts)
      for (int s : cfg.scale_indices) {
        std::vector<eval::ScenarioResult> parts;
        bool complete = true;
        for (const auto& job : jobs) {
          if (job.scale_index != s || job.frame_count != f) continue;
          auto it = results.find(job.name());
          if (it == results.end()) {
            complete = false;
            continue;
          }
          eval::ScenarioResult r;
          r.scale_index = s;
          r.frame_count = f;
          r.dev_eer = it->second.dev_eer;
          r.test_hter = it->second.test.at(n).hter();
          r.thresholds = {it->second.threshold};
          parts.push_back(r);
        }
        if (complete && !parts.empty()) cells.push_back(eval::aggregate_cross_validation(parts));
      }
    if (n == cfg.eval_datasets.front()) out.scenarios = cells;
    out.reports.emplace_back(n, eval::build_partial_report(cells));
  }
  return out;
}

inline std::string report_text(const ExperimentConfig& cfg, const ReportSet& r) {
  if (cfg.protocol == Protocol::Combined) return eval::combined_report_csv(r.reports);
  return eval::report_csv(r.reports.front().second);
}

inline fs::path report_path(const ExperimentConfig& cfg) { return cfg.output_dir / "report.csv"; }

inline ReportSet stage_report(const Context& ctx) {
  ReportSet r = collect_reports(ctx);
  write_file(report_path(ctx.cfg), report_text(ctx.cfg, r));
  for (const auto& [job, cause] : r.failures) ctx.log("cell " + job + " missing: " + cause);
  return r;
}

inline void write_run_json(const Context& ctx, const ReportSet& r, double seconds) {
  nlohmann::json j;
  j["format"] = "antispoof-run";
  j["version"] = kVersion;
  j["config"] = to_json(ctx.cfg);
  nlohmann::json digests = nlohmann::json::object();
  for (const auto& [name, path] : ctx.cfg.datasets)
    if (ctx.manifests.count(name)) digests[name] = Fnv1a().add(read_file(path)).hex();
  j["manifest_digests"] = digests;
  j["failures"] = r.failures;
  j["wall_clock_seconds"] = seconds;
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& job : jobs_of(ctx.cfg)) {
    const Paths p{ctx.out(), job};
    artifacts.push_back({{"job", job.name()},
                         {"checkpoint", fs::relative(p.checkpoint(), ctx.out()).generic_string()},
                         {"svm_model", fs::relative(p.svm_model(), ctx.out()).generic_string()},
                         {"scores", fs::relative(p.scores("dev").parent_path(), ctx.out()).generic_string()}});
  }
  j["artifacts"] = artifacts;
  j["report"] = "report.csv";
  write_file(ctx.out() / "run.json", json_text(j));
}

struct RunOutcome {
  ReportSet reports;
  std::size_t failed_jobs = 0;
};

// Every stage over every job, then the report and run.json.
inline RunOutcome run_all(const Context& ctx) {
  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(ctx.out());
  std::size_t failed = 0;
  for (const auto& s : stages()) failed = run_stage(ctx, s.name);
  RunOutcome out{stage_report(ctx), failed};
  write_run_json(ctx, out.reports,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
  return out;
}

inline void require_protocol(const ExperimentConfig& cfg, Protocol p) {
  if (cfg.protocol != p)
    throw ConfigError(std::string("config protocol is ") + to_string(cfg.protocol) + ", expected " + to_string(p));
}

inline eval::EvalReport run_intra(const ExperimentConfig& cfg, Log log = stderr_log()) {
  require_protocol(cfg, Protocol::Intra);
  return run_all(make_context(cfg, std::move(log))).reports.reports.front().second;
}

inline eval::EvalReport run_inter(const ExperimentConfig& cfg, Log log = stderr_log()) {
  require_protocol(cfg, Protocol::Inter);
  return run_all(make_context(cfg, std::move(log))).reports.reports.front().second;
}

inline std::vector<std::pair<std::string, eval::EvalReport>> run_combined(const ExperimentConfig& cfg,
                                                                          Log log = stderr_log()) {
  require_protocol(cfg, Protocol::Combined);
  return run_all(make_context(cfg, std::move(log))).reports.reports;
}

}  // namespace antispoof::harness
