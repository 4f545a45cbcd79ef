#include "specbias/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace specbias {

OptState make_opt_state(const Model& model, const SgdParams& hp) {
  if (hp.total_steps < 1) throw Error("optimizer needs total_steps >= 1");
  if (!(hp.base_lr >= 0.0) || !(hp.momentum >= 0.0) || !(hp.weight_decay >= 0.0))
    throw Error("optimizer hyperparameters must be non-negative");
  return {hp, Vector::Zero(model.parameter_count()), 0};
}

double cosine_lr(long step, long total_steps, double base_lr) {
  if (total_steps < 1 || step < 0 || step > total_steps)
    throw Error("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                std::to_string(total_steps) + "]");
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * double(step) / double(total_steps)));
}

void sgd_step(Model& model, const Vector& grads, OptState& opt) {
  if (grads.size() != model.parameter_count() || opt.buffer.size() != model.parameter_count())
    throw Error("sgd_step: gradient/buffer size does not match the model");
  if (!grads.allFinite()) throw Error("sgd_step: non-finite gradient");
  const double lr = cosine_lr(opt.step, opt.hp.total_steps, opt.hp.base_lr);
  opt.buffer = opt.hp.momentum * opt.buffer + grads + opt.hp.weight_decay * model.params();
  model.params() -= lr * opt.buffer;
  if (!model.params().allFinite()) throw Error("sgd_step: parameters became non-finite");
  opt.step = std::min(opt.step + 1, opt.hp.total_steps);
}

double sample_mixup_lambda(const MixupSpec& spec, std::mt19937_64& rng) {
  if (!(spec.strength >= 0.0)) throw Error("mixup strength must be >= 0");
  if (spec.strength == 0.0) return 1.0;
  if (std::isinf(spec.strength)) return 0.5;
  std::gamma_distribution<double> g(spec.strength, 1.0);
  const double a = g(rng), b = g(rng);
  if (a + b == 0.0) return 0.5;
  return a / (a + b);
}

MixedBatch mixup_batch(const Matrix& batch, const Matrix& targets, const MixupSpec& spec,
                       std::mt19937_64& rng) {
  if (batch.cols() < 2) throw Error("mixup needs a batch of at least 2 examples");
  if (targets.cols() != batch.cols()) throw Error("mixup: targets do not align with batch");
  MixedBatch out;
  out.partner.resize(std::size_t(batch.cols()));
  std::iota(out.partner.begin(), out.partner.end(), Index(0));
  if (spec.strength == 0.0) {
    out.batch = batch;
    out.targets = targets;
    return out;
  }
  out.lambda = sample_mixup_lambda(spec, rng);
  std::shuffle(out.partner.begin(), out.partner.end(), rng);
  out.batch.resize(batch.rows(), batch.cols());
  out.targets.resize(targets.rows(), targets.cols());
  for (Index i = 0; i < batch.cols(); ++i) {
    const Index j = out.partner[std::size_t(i)];
    out.batch.col(i) = out.lambda * batch.col(i) + (1.0 - out.lambda) * batch.col(j);
    out.targets.col(i) = out.lambda * targets.col(i) + (1.0 - out.lambda) * targets.col(j);
  }
  return out;
}

}  // namespace specbias
