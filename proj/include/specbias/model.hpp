#ifndef SPECBIAS_MODEL_HPP
#define SPECBIAS_MODEL_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "specbias/types.hpp"

namespace specbias {

// Layer declarations. Activations are (channels, height, width) tensors
// vectorized channel-major, one column per example.
struct ConvSpec {
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
};
struct ReluSpec {};
struct MaxPoolSpec {
  int window = 2;
};
struct FlattenSpec {};
struct DenseSpec {
  int out_features = 0;
};

using LayerSpec = std::variant<ConvSpec, ReluSpec, MaxPoolSpec, FlattenSpec, DenseSpec>;

std::string layer_name(const LayerSpec& l);

struct TensorShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  Index size() const { return Index(channels) * height * width; }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

struct ArchSpec {
  std::string name;
  ImageShape input;
  int n_outputs = 0;
  std::vector<LayerSpec> layers;

  /// Output shape after each layer; throws naming the offending layer if
  /// propagation fails or does not end in a flat vector of n_outputs.
  std::vector<TensorShape> propagate() const;
  friend bool operator==(const ArchSpec&, const ArchSpec&);
};

struct ArchOptions {
  int hidden = 128;
  int conv1 = 16;
  int conv2 = 32;
};

/// "tiny-mlp": flatten, dense hidden, relu, dense M.
/// "tiny-cnn": conv conv1 3x3, relu, maxpool 2, conv conv2 3x3, relu,
/// maxpool 2, flatten, dense M (convolutions zero-padded to keep size).
ArchSpec make_arch(const std::string& name, const ImageShape& input, int n_outputs,
                   const ArchOptions& opts = {});

nlohmann::json arch_to_json(const ArchSpec& arch);
ArchSpec arch_from_json(const nlohmann::json& j);

/// Location of one trainable layer's weights and bias inside the flat
/// parameter vector. Weights are stored column-major (rows x cols).
struct ParamBlock {
  int layer = 0;
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;
  Index weight_size() const { return rows * cols; }
  Index bias_offset() const { return offset + weight_size(); }
  Index size() const { return weight_size() + rows; }
};

class Model {
 public:
  Model() = default;
  /// Zero parameters; use init_model for a trainable start.
  explicit Model(ArchSpec arch, std::uint64_t seed = 0);

  const ArchSpec& arch() const { return arch_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<TensorShape>& shapes() const { return shapes_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  Index parameter_count() const { return params_.size(); }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  Eigen::Map<Matrix> weights(const ParamBlock& b) {
    return Eigen::Map<Matrix>(params_.data() + b.offset, b.rows, b.cols);
  }
  Eigen::Map<const Matrix> weights(const ParamBlock& b) const {
    return Eigen::Map<const Matrix>(params_.data() + b.offset, b.rows, b.cols);
  }
  Eigen::Map<Vector> bias(const ParamBlock& b) {
    return Eigen::Map<Vector>(params_.data() + b.bias_offset(), b.rows);
  }
  Eigen::Map<const Vector> bias(const ParamBlock& b) const {
    return Eigen::Map<const Vector>(params_.data() + b.bias_offset(), b.rows);
  }

 private:
  ArchSpec arch_;
  std::uint64_t seed_ = 0;
  std::vector<TensorShape> shapes_;
  std::vector<ParamBlock> blocks_;
  Vector params_;
};

/// Weights uniform in +-sqrt(6 / fan_in), biases zero.
Model init_model(const ArchSpec& arch, std::uint64_t seed);

/// Zeros the weights and bias of the last dense layer (uniform outputs).
void zero_output_layer(Model& model);

/// Column-wise softmax with max subtraction.
Matrix softmax(const Matrix& logits);

Matrix logits(const Model& model, const Matrix& batch);
/// Softmax probabilities, one column per input column.
Matrix predict(const Model& model, const Matrix& batch);

inline constexpr double kLogFloor = 1e-12;

/// Mean over columns of -sum_m t[m] log(max(p[m], 1e-12)).
double cross_entropy(const Matrix& probs, const Matrix& targets);

struct LossGrad {
  double loss = 0.0;
  Vector grads;
};

/// Mean soft-target cross-entropy and its exact gradient. Targets must be on
/// the simplex within 1e-6.
LossGrad loss_and_grads(const Model& model, const Matrix& batch, const Matrix& targets);

// Checkpoint container: 8-byte magic "SBCKPT01", u64 LE header length, a
// compact JSON header {arch, epoch, format_version, n_params, seed}, then the
// parameters as little-endian IEEE-754 doubles.
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  int epoch = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, int epoch);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Loads and verifies the stored architecture against `expected`, naming the
/// first mismatching layer.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ArchSpec& expected);

}  // namespace specbias

#endif  // SPECBIAS_MODEL_HPP
