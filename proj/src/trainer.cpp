#include "specbias/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "specbias/csv.hpp"

namespace specbias {

void TrainConfig::validate(bool allow_zero_epochs) const {
  if (epochs < (allow_zero_epochs ? 0 : 1)) throw Error("train: epochs must be >= 1");
  if (batch_size < 1) throw Error("train: batch_size must be >= 1");
  if (!(base_lr >= 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0))
    throw Error("train: base_lr, momentum and weight_decay must be non-negative");
  if (checkpoint_every < 0) throw Error("train: checkpoint_every must be >= 0");
  if (n_train && *n_train < 1) throw Error("train: n_train must be >= 1");
  if (mixup && !(mixup->strength >= 0.0)) throw Error("train: mixup strength must be >= 0");
  if (noise) noise->validate();
}

namespace {

struct Evaluation {
  double clean = 0.0;
  double noisy = 0.0;
};

Evaluation evaluate(const Model& model, const LabeledDataset& val, const Matrix& clean_targets,
                    const Matrix& noisy_targets) {
  const Matrix probs = predict(model, val.images);
  return {cross_entropy(probs, clean_targets), cross_entropy(probs, noisy_targets)};
}

}  // namespace

TrainRecord train_with_targets(const TrainConfig& cfg, const LabeledDataset& train_in,
                               const Matrix& train_targets_in, const LabeledDataset& val,
                               const TrainHooks& hooks, Model* final_model) {
  cfg.validate(true);
  if (train_in.empty() || val.empty()) throw Error("train: empty train or validation set");
  if (train_in.shape != val.shape || train_in.n_classes != val.n_classes)
    throw Error("train: train and validation shapes differ");
  if (train_targets_in.rows() != train_in.n_classes || train_targets_in.cols() != train_in.size())
    throw Error("train: targets do not align with the training set");
  if (cfg.noise) cfg.noise->validate_for(val.shape);

  // Seeded subset; targets follow their examples.
  const LabeledDataset* train = &train_in;
  const Matrix* train_targets = &train_targets_in;
  LabeledDataset sub;
  Matrix sub_targets;
  if (cfg.n_train && *cfg.n_train > train_in.size())
    throw Error("train: n_train = " + std::to_string(*cfg.n_train) + " exceeds the " +
                std::to_string(train_in.size()) + " training examples");
  if (cfg.n_train && *cfg.n_train < train_in.size()) {
    std::vector<Index> order(static_cast<std::size_t>(train_in.size()));
    std::iota(order.begin(), order.end(), Index(0));
    std::mt19937_64 rng(cfg.seeds.shuffle);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(std::size_t(*cfg.n_train));
    sub = train_in;
    sub.images.resize(train_in.images.rows(), *cfg.n_train);
    sub.labels.resize(order.size());
    sub.ids.resize(order.size());
    sub_targets.resize(train_targets_in.rows(), *cfg.n_train);
    for (Index i = 0; i < *cfg.n_train; ++i) {
      const Index j = order[std::size_t(i)];
      sub.images.col(i) = train_in.images.col(j);
      sub.labels[i] = train_in.labels[j];
      sub.ids[i] = train_in.ids[j];
      sub_targets.col(i) = train_targets_in.col(j);
    }
    train = &sub;
    train_targets = &sub_targets;
  }

  const ArchSpec arch = make_arch(cfg.arch, train->shape, train->n_classes, cfg.arch_options);
  Model model = init_model(arch, cfg.seeds.init);

  const Matrix val_clean = val.one_hot_targets();
  const Matrix val_noisy = cfg.noise ? smoothed_targets(val, *cfg.noise) : val_clean;

  TrainRecord rec;
  rec.has_noise = cfg.noise.has_value();
  rec.eval_only = cfg.epochs == 0;
  const Evaluation init = evaluate(model, val, val_clean, val_noisy);
  rec.initial_clean_val_loss = init.clean;
  rec.initial_noisy_val_loss = init.noisy;

  const Index n = train->size();
  const Index bs = std::min<Index>(cfg.batch_size, n);
  const long steps_per_epoch = long((n + bs - 1) / bs);
  OptState opt = make_opt_state(
      model, {cfg.base_lr, cfg.momentum, cfg.weight_decay, std::max(1L, steps_per_epoch * cfg.epochs)});

  std::mt19937_64 shuffle_rng(cfg.seeds.shuffle);
  std::mt19937_64 mixup_rng(cfg.seeds.mixup);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  Matrix xb, tb;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    rec.lr.push_back(cosine_lr(opt.step, opt.hp.total_steps, opt.hp.base_lr));
    double loss_sum = 0.0;
    for (Index start = 0; start < n; start += bs) {
      const Index len = std::min(bs, n - start);
      xb.resize(train->images.rows(), len);
      tb.resize(train_targets->rows(), len);
      for (Index k = 0; k < len; ++k) {
        xb.col(k) = train->images.col(order[std::size_t(start + k)]);
        tb.col(k) = train_targets->col(order[std::size_t(start + k)]);
      }
      LossGrad lg;
      if (cfg.mixup && len >= 2) {
        const MixedBatch mixed = mixup_batch(xb, tb, *cfg.mixup, mixup_rng);
        lg = loss_and_grads(model, mixed.batch, mixed.targets);
      } else {
        lg = loss_and_grads(model, xb, tb);
      }
      if (!std::isfinite(lg.loss) || !lg.grads.allFinite())
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                    std::to_string(opt.step));
      sgd_step(model, lg.grads, opt);
      loss_sum += lg.loss * double(len);
    }
    const Evaluation ev = evaluate(model, val, val_clean, val_noisy);
    rec.train_loss.push_back(loss_sum / double(n));
    rec.clean_val_loss.push_back(ev.clean);
    rec.noisy_val_loss.push_back(ev.noisy);
    rec.noise_fitting.push_back(noise_fitting(ev.clean, ev.noisy));

    const bool due = epoch == cfg.epochs ||
                     (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0);
    if (hooks.checkpoint && due) rec.checkpoints.push_back(hooks.checkpoint(epoch, model));
    if (hooks.progress) hooks.progress(epoch, rec);
  }
  if (hooks.checkpoint && cfg.epochs == 0) rec.checkpoints.push_back(hooks.checkpoint(0, model));
  if (final_model) *final_model = std::move(model);
  return rec;
}

TrainRecord run_training(const TrainConfig& cfg, const LabeledDataset& train,
                         const LabeledDataset& val, const TrainHooks& hooks, Model* final_model) {
  cfg.validate();
  const Matrix targets = cfg.noise ? smoothed_targets(train, *cfg.noise) : train.one_hot_targets();
  return train_with_targets(cfg, train, targets, val, hooks, final_model);
}

double noise_fitting(double clean_val_loss, double noisy_val_loss) {
  if (!std::isfinite(clean_val_loss) || !std::isfinite(noisy_val_loss))
    throw Error("noise_fitting: non-finite loss");
  return clean_val_loss - noisy_val_loss;
}

std::vector<double> ema_smooth(const std::vector<double>& series, double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) throw Error("ema_smooth: beta must lie in [0, 1)");
  if (series.empty()) throw Error("ema_smooth: empty series");
  std::vector<double> out(series.size());
  out[0] = series[0];
  for (std::size_t t = 1; t < series.size(); ++t)
    out[t] = beta * out[t - 1] + (1.0 - beta) * series[t];
  return out;
}

NoiseFittingMin min_noise_fitting(const TrainRecord& record, double beta) {
  if (!record.has_noise) throw Error("min_noise_fitting: record was trained without noise");
  const auto smooth = ema_smooth(record.noise_fitting, beta);
  NoiseFittingMin out;
  // min_element returns the first minimum, which is the earliest-epoch tie rule.
  const auto it = std::min_element(smooth.begin(), smooth.end());
  out.value = *it;
  out.epoch = int(it - smooth.begin());
  const auto raw = std::min_element(record.noise_fitting.begin(), record.noise_fitting.end());
  out.raw_value = *raw;
  out.raw_epoch = int(raw - record.noise_fitting.begin());
  return out;
}

int early_stop_epoch(const TrainRecord& record, double train_loss_threshold) {
  if (record.train_loss.empty()) throw Error("early_stop_epoch: empty record");
  if (!(train_loss_threshold > 0.0)) throw Error("early_stop_epoch: threshold must be > 0");
  for (std::size_t e = 0; e < record.train_loss.size(); ++e)
    if (record.train_loss[e] <= train_loss_threshold) return int(e);
  return int(record.train_loss.size()) - 1;
}

TrainRecord distill(const Model& teacher, const TrainConfig& student_cfg,
                    const LabeledDataset& train, const LabeledDataset& val,
                    const DistillOptions& opts, const TrainHooks& hooks, Model* final_model) {
  const ArchSpec& ta = teacher.arch();
  if (ta.input != train.shape || ta.n_outputs != train.n_classes)
    throw Error("distill: teacher expects " + to_string(ta.input) + " inputs and " +
                std::to_string(ta.n_outputs) + " classes, data is " + to_string(train.shape) +
                " with " + std::to_string(train.n_classes));
  Matrix targets = predict(teacher, train.images);
  if (opts.hard_labels) {
    for (Index i = 0; i < targets.cols(); ++i) {
      Index best = 0;
      targets.col(i).maxCoeff(&best);
      targets.col(i).setZero();
      targets(best, i) = 1.0;
    }
  }
  TrainRecord rec = train_with_targets(student_cfg, train, targets, val, hooks, final_model);
  rec.teacher = opts.teacher_ref;
  return rec;
}

TrainRecord distill(const std::filesystem::path& teacher_ckpt, const TrainConfig& student_cfg,
                    const LabeledDataset& train, const LabeledDataset& val,
                    const DistillOptions& opts, const TrainHooks& hooks, Model* final_model) {
  const Checkpoint ck = load_checkpoint(teacher_ckpt);
  DistillOptions o = opts;
  if (o.teacher_ref == DistillOptions{}.teacher_ref) o.teacher_ref = teacher_ckpt.string();
  return distill(ck.model, student_cfg, train, val, o, hooks, final_model);
}

namespace {
constexpr const char* kRecordHeader = "epoch,train_loss,clean_val_loss,noisy_val_loss,noise_fitting,lr";
}

void write_record_csv(const TrainRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << kRecordHeader << '\n';
  for (std::size_t e = 0; e < record.epochs(); ++e)
    out << e + 1 << ',' << csv::num(record.train_loss[e]) << ',' << csv::num(record.clean_val_loss[e])
        << ',' << csv::num(record.noisy_val_loss[e]) << ',' << csv::num(record.noise_fitting[e]) << ','
        << csv::num(record.lr[e]) << '\n';
}

TrainRecord read_record_csv(const std::filesystem::path& path) {
  TrainRecord rec;
  for (const auto& row : csv::read(path, kRecordHeader)) {
    rec.train_loss.push_back(csv::parse_double(row[1]));
    rec.clean_val_loss.push_back(csv::parse_double(row[2]));
    rec.noisy_val_loss.push_back(csv::parse_double(row[3]));
    rec.noise_fitting.push_back(csv::parse_double(row[4]));
    rec.lr.push_back(csv::parse_double(row[5]));
  }
  rec.has_noise = std::any_of(rec.noise_fitting.begin(), rec.noise_fitting.end(),
                              [](double v) { return v != 0.0; });
  return rec;
}

}  // namespace specbias
