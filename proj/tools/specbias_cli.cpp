#include <iostream>

#include "CLI11.hpp"
#include "specbias/commands.hpp"

namespace fs = std::filesystem;
using namespace specbias;

int main(int argc, char** argv) {
  CLI::App app{"Spectral-bias measurement toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int workers = 1;
  double scale = 1.0;
  bool quiet = false;

  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    auto* opt = sub->add_option("--config", config_path, "Experiment config (JSON)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    sub->add_option("--workers", workers, "Concurrent sweep children")->check(CLI::PositiveNumber);
    sub->add_option("--scale", scale, "Multiplier for probe pair counts")->check(CLI::PositiveNumber);
    sub->add_flag("--quiet", quiet, "Suppress progress messages");
  };

  auto* train = app.add_subcommand("train", "Train a model and write a run directory");
  add_common(train);

  std::vector<std::string> checkpoints;
  int dump_paths = 0;
  auto* probe = app.add_subcommand("probe", "Interpolation spectroscopy of checkpoints");
  add_common(probe);
  probe->add_option("--checkpoint", checkpoints, "Checkpoint files (default: probe.epochs)");
  probe->add_option("--dump-predictions", dump_paths, "Write predictions for the first N paths");

  auto* oracle = app.add_subcommand("oracle", "Spectroscopy of the label-smoothing oracle");
  add_common(oracle);

  std::string axis;
  std::vector<std::string> values;
  auto* sweep = app.add_subcommand("sweep", "One run per value of a config field");
  add_common(sweep);
  sweep->add_option("--axis", axis, "Dotted config field")->required();
  sweep->add_option("--values", values, "Values for the axis")->required();

  auto* distill = app.add_subcommand("distill", "Train a student on a teacher run");
  add_common(distill);

  std::string analyze_ckpt;
  auto* analyze = app.add_subcommand("analyze", "Correlate class frequency profile with C-scores");
  add_common(analyze);
  analyze->add_option("--checkpoint", analyze_ckpt, "Checkpoint (default: final epoch)");

  std::vector<std::string> runs;
  auto* report = app.add_subcommand("report", "Join run directories into report.csv");
  add_common(report, false);
  report->add_option("--runs", runs, "Run directories (default: all under --out)");

  CLI11_PARSE(app, argc, argv);

  try {
    CommandOptions opts;
    if (!out_dir.empty()) opts.out = out_dir;
    opts.workers = workers;
    opts.scale = scale;
    if (!quiet) opts.log = &std::cerr;

    if (report->parsed()) {
      fs::path root = out_dir;
      if (root.empty()) root = config_path.empty() ? fs::path("runs") : fs::path(load_config(config_path).output_dir);
      std::vector<fs::path> dirs(runs.begin(), runs.end());
      std::cout << cmd_report(root, dirs).string() << '\n';
      return 0;
    }

    ExperimentConfig cfg = load_config(config_path);
    apply_scale(cfg, scale);
    fs::path result;
    if (train->parsed()) {
      result = cmd_train(cfg, opts);
    } else if (probe->parsed()) {
      result = cmd_probe(cfg, opts, std::vector<fs::path>(checkpoints.begin(), checkpoints.end()), dump_paths);
    } else if (oracle->parsed()) {
      result = cmd_oracle(cfg, opts);
    } else if (sweep->parsed()) {
      result = cmd_sweep(cfg, opts, axis, values);
    } else if (distill->parsed()) {
      result = cmd_distill(cfg, opts);
    } else if (analyze->parsed()) {
      std::optional<fs::path> ck;
      if (!analyze_ckpt.empty()) ck = analyze_ckpt;
      result = cmd_analyze(cfg, opts, ck);
    }
    std::cout << result.string() << '\n';
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
