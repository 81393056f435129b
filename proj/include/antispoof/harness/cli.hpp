#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "antispoof/data/synth.hpp"
#include "antispoof/error.hpp"
#include "antispoof/eval/csv.hpp"
#include "antispoof/eval/roc.hpp"
#include "antispoof/harness/config.hpp"
#include "antispoof/harness/pipeline.hpp"

namespace antispoof::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

struct Overrides {
  std::vector<int> scales;
  std::vector<int> frames;
  std::optional<std::uint64_t> seed;
  std::string out;

  void apply(ExperimentConfig& c) const {
    if (!scales.empty()) c.scale_indices = scales;
    if (!frames.empty()) c.frame_counts = frames;
    if (seed) c.rng_seed = *seed;
    if (!out.empty()) c.output_dir = std::filesystem::absolute(out);
  }
};

inline void add_overrides(CLI::App* app, std::string& config, Overrides& o, bool config_required) {
  auto* c = app->add_option("--config", config, "experiment config (JSON)");
  if (config_required) c->required();
  app->add_option("--scale", o.scales, "scale indices to run (1..5), comma separated")->delimiter(',');
  app->add_option("--frames", o.frames, "frame counts to run (1..3), comma separated")->delimiter(',');
  app->add_option("--seed", o.seed, "rng seed");
  app->add_option("--out", o.out, "output directory");
}

namespace detail {

inline std::string fmt(double v, const char* f = "%.6g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace detail

// Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Face anti-spoofing pipeline: CNN features + RBF-SVM, EER/HTER evaluation", "antispoof"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config;
  Overrides ov;

  std::string synth_out, synth_domain = "default";
  std::uint64_t synth_seed = 42;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset and its manifest");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--domain", synth_domain, "generator family: default or shifted")
      ->check(CLI::IsMember({"default", "shifted"}));

  std::vector<CLI::App*> stage_cmds;
  for (const auto& s : stages()) {
    if (std::string(s.name) == "eval") continue;
    stage_cmds.push_back(app.add_subcommand(s.name, std::string("run the ") + s.name + " stage for every job"));
    add_overrides(stage_cmds.back(), config, ov, true);
  }

  std::string scores_file, dev_file, level = "frame";
  auto* ev = app.add_subcommand("eval", "score every job, or evaluate score files (--scores with --dev)");
  add_overrides(ev, config, ov, false);
  auto* scores_opt = ev->add_option("--scores", scores_file, "test score CSV");
  auto* dev_opt = ev->add_option("--dev", dev_file, "dev score CSV that fixes the threshold");
  scores_opt->needs(dev_opt);
  dev_opt->needs(scores_opt);
  ev->add_option("--level", level, "frame or sequence")->check(CLI::IsMember({"frame", "sequence"}));

  auto* run = app.add_subcommand("run", "full protocol: every stage, then the report");
  add_overrides(run, config, ov, true);
  auto* report = app.add_subcommand("report", "assemble report.csv from finished jobs");
  add_overrides(report, config, ov, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  auto load = [&] {
    ExperimentConfig c = load_config(config);
    ov.apply(c);
    return make_context(c);
  };

  try {
    if (synth->parsed()) {
      data::SynthConfig sc;
      if (synth_domain == "shifted") sc.domain = data::shifted_domain();
      const auto r = data::synth_dataset(sc, synth_seed, synth_out);
      out << r.manifest.records.size() << " frames written to "
          << (std::filesystem::path(synth_out) / "manifest.jsonl").string() << '\n';
      return kExitOk;
    }
    if (ev->parsed() && !scores_file.empty()) {
      const auto lv = level == "sequence" ? eval::ScoreLevel::Sequence : eval::ScoreLevel::Frame;
      const auto dev = eval::at_level(eval::read_scores(dev_file), lv);
      const auto test = eval::at_level(eval::read_scores(scores_file), lv);
      const auto e = eval::eer_threshold(dev);
      out << "eer,threshold,hter\n"
          << detail::fmt(e.eer, "%.4f") << ',' << eval::format_real(e.threshold) << ','
          << detail::fmt(eval::hter_at_threshold(test, e.threshold), "%.4f") << '\n';
      return kExitOk;
    }
    if (ev->parsed() && config.empty()) {
      err << "error: eval needs --config, or --scores with --dev\n\n" << app.help();
      return kExitConfig;
    }
    for (auto* cmd : stage_cmds)
      if (cmd->parsed()) {
        const Context ctx = load();
        const std::size_t failed = run_stage(ctx, cmd->get_name());
        return failed ? kExitRuntime : kExitOk;
      }
    if (ev->parsed()) {
      const Context ctx = load();
      return run_stage(ctx, "eval") ? kExitRuntime : kExitOk;
    }
    if (report->parsed()) {
      const Context ctx = load();
      const ReportSet r = stage_report(ctx);
      out << report_text(ctx.cfg, r);
      return r.failures.empty() ? kExitOk : kExitRuntime;
    }
    if (run->parsed()) {
      const Context ctx = load();
      const RunOutcome r = run_all(ctx);
      out << report_text(ctx.cfg, r.reports);
      err << "report written to " << report_path(ctx.cfg).string() << '\n';
      return r.failed_jobs ? kExitRuntime : kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << app.help();
  return kExitConfig;
}

}  // namespace antispoof::harness
