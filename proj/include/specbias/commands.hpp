#ifndef SPECBIAS_COMMANDS_HPP
#define SPECBIAS_COMMANDS_HPP

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "specbias/config.hpp"

namespace specbias {

struct CommandOptions {
  /// Overrides the config's output_dir.
  std::optional<std::filesystem::path> out;
  int workers = 1;
  /// Multiplies probe.per_class and probe.per_class_pair.
  double scale = 1.0;
  /// Progress messages; nullptr for silence.
  std::ostream* log = nullptr;
};

/// Applies --scale to the probe counts and records the result in the echo.
void apply_scale(ExperimentConfig& cfg, double scale);

std::filesystem::path output_root(const ExperimentConfig& cfg, const CommandOptions& opts);
std::filesystem::path run_dir(const ExperimentConfig& cfg, const CommandOptions& opts);

/// {out}/{run_id}/{config.json, record.csv, epoch_E.ckpt}.
std::filesystem::path cmd_train(const ExperimentConfig& cfg, const CommandOptions& opts);

/// Probes the given checkpoints, or probe.epochs of the config's run
/// directory when none are given. Writes probe_paths.csv and
/// probe_summary.csv into the run directory. With dump_paths > 0 the
/// predictions along the first dump_paths paths of each checkpoint are
/// written as pred_e{E}_p{pair_id}.bin.
std::filesystem::path cmd_probe(const ExperimentConfig& cfg, const CommandOptions& opts,
                                const std::vector<std::filesystem::path>& checkpoints = {},
                                int dump_paths = 0);

/// oracle_curves.csv and oracle_hf.csv over probe.oracle_frequencies.
std::filesystem::path cmd_oracle(const ExperimentConfig& cfg, const CommandOptions& opts);

/// One child run per value (plus a final-epoch probe when probe.in_sweep),
/// then {out}/sweep_{id}/summary.csv. Returns the summary path.
std::filesystem::path cmd_sweep(const ExperimentConfig& cfg, const CommandOptions& opts,
                                const std::string& axis, const std::vector<std::string>& values);

/// Trains a student on the outputs of distill.teacher_run at its early-stop
/// epoch. Zero student epochs give an evaluation-only stub directory.
std::filesystem::path cmd_distill(const ExperimentConfig& cfg, const CommandOptions& opts);

/// Within-class frequency profile of the run's final checkpoint (or the given
/// one) correlated against analysis.cscores. Writes class_profile.csv,
/// coherence.csv and coherence_summary.csv.
std::filesystem::path cmd_analyze(const ExperimentConfig& cfg, const CommandOptions& opts,
                                  const std::optional<std::filesystem::path>& checkpoint = {});

/// Joins record.csv and probe_summary.csv of the given run directories (all
/// run directories under root when none are given) into root/report.csv.
std::filesystem::path cmd_report(const std::filesystem::path& root,
                                 const std::vector<std::filesystem::path>& runs = {});

}  // namespace specbias

#endif  // SPECBIAS_COMMANDS_HPP
