#ifndef SPECBIAS_DATA_HPP
#define SPECBIAS_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "specbias/types.hpp"

namespace specbias {

enum class Role { train, validation };

std::string to_string(Role r);

/// Images are held column-wise: images.col(i) is example i, vectorized in
/// ImageShape order. Labels are class indices; the one-hot vectors are
/// materialized on demand.
struct LabeledDataset {
  ImageShape shape;
  int n_classes = 0;
  Role role = Role::train;
  Matrix images;
  std::vector<int> labels;
  std::vector<std::int64_t> ids;

  Index size() const { return images.cols(); }
  bool empty() const { return images.cols() == 0; }
  Image image(Index i) const { return Image(shape, images.col(i)); }
  Vector one_hot(Index i) const;
  /// n_classes x size() matrix of one-hot columns.
  Matrix one_hot_targets() const;
  /// Checks shapes, label range, id uniqueness and finiteness.
  void validate() const;
};

std::vector<Index> class_counts(const LabeledDataset& ds);

/// True if `probs` is on the probability simplex within `tol`.
bool on_simplex(const Eigen::Ref<const Vector>& probs, double tol = 1e-9);

// CIFAR-10 binary records: one label byte, then 3072 pixel bytes
// (R plane, G plane, B plane, each 32x32 row-major).
inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr int kCifarSide = 32;
inline constexpr int kCifarChannels = 3;
inline constexpr int kCifarClasses = 10;

LabeledDataset load_cifar10(const std::vector<std::filesystem::path>& paths, Role role);

/// Writes pixels back as bytes (value * 255, rounded). Only meaningful for
/// unnormalized datasets with d = 32, c = 3 and at most 10 classes.
void write_cifar10(const LabeledDataset& ds, const std::filesystem::path& path);

struct SyntheticSpec {
  int n_classes = 10;
  int per_class = 100;
  int d = 16;
  int c = 3;
  std::uint64_t template_seed = 1;
  std::uint64_t noise_seed = 2;
  double spectral_exponent = 1.0;
  /// Pixel standard deviation of the class templates and of the additive noise.
  double template_scale = 1.0;
  double noise_scale = 1.0;
  /// Each example is multiplied by exp(contrast_spread * z), z ~ N(0, 1).
  double contrast_spread = 0.0;
};

/// One d x d x c noise image whose 2-D Fourier amplitude at wrapped spatial
/// frequency r = |(u, v)| is r^(-exponent) (the DC term is kept only for
/// exponent 0). Scaled to unit expected pixel variance.
Vector spectral_noise(int d, int c, double exponent, std::mt19937_64& rng);

LabeledDataset generate_synthetic(const SyntheticSpec& spec, Role role = Role::train);

enum class MeanNormSource { normalized, raw };

struct DatasetStats {
  ImageShape shape;
  Vector per_pixel_mean;
  Vector per_pixel_std;
  double mean_norm = 0.0;
};

inline constexpr double kStdFloor = 1e-6;

/// Average Euclidean norm of the images as stored.
double mean_norm(const LabeledDataset& ds);

DatasetStats compute_stats(const LabeledDataset& train,
                           MeanNormSource source = MeanNormSource::normalized);

LabeledDataset normalize(const LabeledDataset& ds, const DatasetStats& stats);
LabeledDataset denormalize(const LabeledDataset& ds, const DatasetStats& stats);

/// Uniform sample of n examples without replacement, in sampled order.
LabeledDataset subset(const LabeledDataset& ds, Index n, std::uint64_t seed);

}  // namespace specbias

#endif  // SPECBIAS_DATA_HPP
