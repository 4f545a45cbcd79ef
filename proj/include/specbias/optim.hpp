#ifndef SPECBIAS_OPTIM_HPP
#define SPECBIAS_OPTIM_HPP

#include <limits>
#include <random>
#include <vector>

#include "specbias/model.hpp"

namespace specbias {

struct SgdParams {
  double base_lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  long total_steps = 1;
};

struct OptState {
  SgdParams hp;
  Vector buffer;
  long step = 0;
};

OptState make_opt_state(const Model& model, const SgdParams& hp);

/// base_lr * (1 + cos(pi * step / total_steps)) / 2.
double cosine_lr(long step, long total_steps, double base_lr);

/// buffer = momentum * buffer + grads + weight_decay * params;
/// params -= cosine_lr(step) * buffer. The step counter saturates at
/// total_steps, where the learning rate is zero.
void sgd_step(Model& model, const Vector& grads, OptState& opt);

/// Symmetric Beta(strength, strength) mixing law; strength 0 is "no mixing"
/// and +infinity pins lambda to 0.5.
struct MixupSpec {
  double strength = 0.0;
  static MixupSpec infinite() { return {std::numeric_limits<double>::infinity()}; }
};

double sample_mixup_lambda(const MixupSpec& spec, std::mt19937_64& rng);

struct MixedBatch {
  Matrix batch;
  Matrix targets;
  double lambda = 1.0;
  std::vector<Index> partner;
};

/// One lambda for the whole batch; example i is mixed with partner[i], a
/// random permutation of the batch: lambda * x_i + (1 - lambda) * x_partner.
/// Strength 0 returns the batch unchanged with lambda = 1.
MixedBatch mixup_batch(const Matrix& batch, const Matrix& targets, const MixupSpec& spec,
                       std::mt19937_64& rng);

}  // namespace specbias

#endif  // SPECBIAS_OPTIM_HPP
