#ifndef SPECBIAS_TRAINER_HPP
#define SPECBIAS_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "specbias/data.hpp"
#include "specbias/model.hpp"
#include "specbias/noise.hpp"
#include "specbias/optim.hpp"

namespace specbias {

struct Seeds {
  std::uint64_t init = 0;
  std::uint64_t shuffle = 0;
  std::uint64_t mixup = 0;
};

struct TrainConfig {
  std::string arch = "tiny-cnn";
  ArchOptions arch_options;
  int epochs = 10;
  int batch_size = 128;
  double base_lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  Seeds seeds;
  std::optional<MixupSpec> mixup;
  /// Radial specs must carry mean_norm (computed from the training set).
  std::optional<NoiseSpec> noise;
  /// Train on a seeded subset of this size when smaller than the train set.
  std::optional<Index> n_train;
  /// Checkpoint every k epochs (0: final epoch only). The final epoch is
  /// always checkpointed when a checkpoint hook is installed.
  int checkpoint_every = 0;

  void validate(bool allow_zero_epochs = false) const;
};

/// Per-epoch series; index e holds the state after e + 1 epochs of training.
struct TrainRecord {
  std::vector<double> train_loss;
  std::vector<double> clean_val_loss;
  std::vector<double> noisy_val_loss;
  std::vector<double> noise_fitting;
  std::vector<double> lr;
  double initial_clean_val_loss = 0.0;
  double initial_noisy_val_loss = 0.0;
  std::vector<std::string> checkpoints;
  bool has_noise = false;
  bool eval_only = false;
  /// Non-empty for distilled students: provenance of the teacher.
  std::string teacher;

  std::size_t epochs() const { return train_loss.size(); }
};

struct TrainHooks {
  /// Called after epochs selected by the checkpoint cadence (1-based epoch);
  /// returns a reference recorded in TrainRecord::checkpoints.
  std::function<std::string(int epoch, const Model&)> checkpoint;
  std::function<void(int epoch, const TrainRecord&)> progress;
};

TrainRecord run_training(const TrainConfig& cfg, const LabeledDataset& train,
                         const LabeledDataset& val, const TrainHooks& hooks = {},
                         Model* final_model = nullptr);

/// Training against explicit targets (n_classes x train.size()).
TrainRecord train_with_targets(const TrainConfig& cfg, const LabeledDataset& train,
                               const Matrix& train_targets, const LabeledDataset& val,
                               const TrainHooks& hooks = {}, Model* final_model = nullptr);

double noise_fitting(double clean_val_loss, double noisy_val_loss);

/// out[0] = in[0]; out[t] = beta * out[t - 1] + (1 - beta) * in[t].
std::vector<double> ema_smooth(const std::vector<double>& series, double beta);

struct NoiseFittingMin {
  double value = 0.0;
  int epoch = 0;  // series index, earliest on ties
  double raw_value = 0.0;
  int raw_epoch = 0;
};

inline constexpr double kDefaultEmaBeta = 0.9;

NoiseFittingMin min_noise_fitting(const TrainRecord& record, double beta = kDefaultEmaBeta);

/// First series index whose train loss is <= threshold, else the last index.
int early_stop_epoch(const TrainRecord& record, double train_loss_threshold);

struct DistillOptions {
  bool hard_labels = false;
  std::string teacher_ref = "teacher";
};

/// Student trained from scratch on the teacher's softmax outputs for every
/// training image (argmax one-hots with hard_labels). Zero student epochs
/// produce an evaluation-only record.
TrainRecord distill(const Model& teacher, const TrainConfig& student_cfg,
                    const LabeledDataset& train, const LabeledDataset& val,
                    const DistillOptions& opts = {}, const TrainHooks& hooks = {},
                    Model* final_model = nullptr);
TrainRecord distill(const std::filesystem::path& teacher_ckpt, const TrainConfig& student_cfg,
                    const LabeledDataset& train, const LabeledDataset& val,
                    const DistillOptions& opts = {}, const TrainHooks& hooks = {},
                    Model* final_model = nullptr);

/// CSV columns epoch,train_loss,clean_val_loss,noisy_val_loss,noise_fitting,lr
/// with 1-based epochs and 17 significant digits.
void write_record_csv(const TrainRecord& record, const std::filesystem::path& path);
TrainRecord read_record_csv(const std::filesystem::path& path);

}  // namespace specbias

#endif  // SPECBIAS_TRAINER_HPP
