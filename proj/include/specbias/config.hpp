#ifndef SPECBIAS_CONFIG_HPP
#define SPECBIAS_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "specbias/data.hpp"
#include "specbias/noise.hpp"
#include "specbias/spectral.hpp"
#include "specbias/trainer.hpp"

namespace specbias {

struct DatasetConfig {
  std::string source = "synthetic";  // "synthetic" or "cifar10"
  std::vector<std::filesystem::path> cifar_train;
  std::vector<std::filesystem::path> cifar_validation;
  SyntheticSpec synthetic;
  int val_per_class = 100;
  std::uint64_t val_noise_seed = 0;
  bool normalize = true;
  MeanNormSource mean_norm_source = MeanNormSource::normalized;
};

struct NoiseConfig {
  NoiseKind kind = NoiseKind::radial;
  double f = 0.0;
  double alpha = 0.5;
  int direction_k = 0;
  double phase = 0.0;
};

struct ProbeConfig {
  int per_class = 200;
  int per_class_pair = 200;
  double delta = 1.0;
  double threshold = kDefaultThreshold;
  FrequencyUnits units = FrequencyUnits::per_sample;
  int n_buckets = 20;
  int max_samples = kMaxPathSamples;
  std::vector<int> epochs;  // 0 stands for the final epoch
  std::vector<double> oracle_frequencies;
  bool in_sweep = true;
};

struct AnalysisConfig {
  std::string cscores;
  int j = 10;
};

struct DistillConfig {
  std::string teacher_run;
  std::optional<double> early_stop_loss;
  bool hard_labels = false;
};

/// Parsed experiment description. `echo` is the canonical JSON form with all
/// defaults filled in; it is what gets written to run directories and what
/// run ids hash.
struct ExperimentConfig {
  DatasetConfig dataset;
  TrainConfig train;
  std::optional<NoiseConfig> noise;
  ProbeConfig probe;
  AnalysisConfig analysis;
  std::optional<DistillConfig> distill;
  std::uint64_t probe_seed = 0;
  std::string output_dir = "runs";
  nlohmann::json echo;
};

/// Validates and fills defaults. Every seed must be given explicitly.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// 16 hex digits of the FNV-1a 64-bit hash of the compact canonical echo,
/// leaving out output_dir, probe and analysis (they do not affect training).
std::string run_id(const ExperimentConfig& cfg);
std::uint64_t fnv1a64(const std::string& bytes);

/// Dotted config fields that `sweep` may vary.
const std::vector<std::string>& sweep_axes();

/// Copy of the canonical echo with `axis` set to `value` (parsed as a JSON
/// number/bool when possible, else kept as a string).
nlohmann::json with_axis(const nlohmann::json& echo, const std::string& axis, const std::string& value);
/// Value of a dotted field as it would be written on a command line.
std::string axis_value(const nlohmann::json& echo, const std::string& axis);

struct PreparedData {
  LabeledDataset train;
  LabeledDataset val;
  DatasetStats stats;
};

/// Loads or generates the datasets, applies the n_train subset and the
/// normalization, and computes statistics on the (subset) training set.
PreparedData prepare_data(const ExperimentConfig& cfg);

/// NoiseSpec for the configured noise, with mean_norm or direction filled in.
NoiseSpec make_noise_spec(const NoiseConfig& nc, const PreparedData& data, MeanNormSource source);

/// TrainConfig with the configured noise resolved against the data.
TrainConfig resolve_train_config(const ExperimentConfig& cfg, const PreparedData& data);

ProbeOptions probe_options(const ProbeConfig& pc);

}  // namespace specbias

#endif  // SPECBIAS_CONFIG_HPP
