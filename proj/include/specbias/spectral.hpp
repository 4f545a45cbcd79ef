#ifndef SPECBIAS_SPECTRAL_HPP
#define SPECBIAS_SPECTRAL_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "specbias/data.hpp"
#include "specbias/model.hpp"
#include "specbias/noise.hpp"

namespace specbias {

enum class PairKind { within, between };

std::string to_string(PairKind k);

/// Two validation examples; a and b index into the dataset.
struct ImagePair {
  std::int64_t pair_id = 0;
  PairKind kind = PairKind::within;
  Index a = 0;
  Index b = 0;
  std::int64_t id_a = 0;
  std::int64_t id_b = 0;
  int class_a = 0;
  int class_b = 0;
};

/// per_class distinct unordered same-class pairs for every class, drawn
/// uniformly without replacement. The draw for a class depends only on
/// (seed, class), never on the other classes.
std::vector<ImagePair> sample_within_pairs(const LabeledDataset& val, int per_class,
                                           std::uint64_t seed);

/// per_class_pair distinct (one from each class) pairs for every unordered
/// pair of distinct classes.
std::vector<ImagePair> sample_between_pairs(const LabeledDataset& val, int per_class_pair,
                                            std::uint64_t seed);

inline constexpr int kMaxPathSamples = 512;

/// Straight line X_lambda = lambda X1 + (1 - lambda) X0 sampled at
/// T = round(dist / delta) + 1 evenly spaced lambdas (T capped at
/// max_samples), so adjacent samples are exactly dist / (T - 1) apart.
struct Path {
  ImagePair pair;
  Vector lambdas;
  double spacing = 0.0;
  Matrix samples;  // one column per lambda

  Index length() const { return lambdas.size(); }
};

Path interpolate_path(const Eigen::Ref<const Vector>& x0, const Eigen::Ref<const Vector>& x1,
                      double delta, int max_samples = kMaxPathSamples);
Path interpolate_path(const LabeledDataset& val, const ImagePair& pair, double delta,
                      int max_samples = kMaxPathSamples);

/// Softmax outputs along the path, one column per sample.
Matrix predict_path(const Model& model, const Path& path);

/// The smoothed label training would assign to each interpolated image.
/// Only defined for within-class paths.
std::vector<SmoothedLabel> oracle_path(int label, int n_classes, const NoiseSpec& spec,
                                       const Path& path);
Matrix stack_probs(const std::vector<SmoothedLabel>& labels);

/// ||p_t - p_0|| for every sample t.
Vector diff_norm_curve(const Matrix& preds);

struct Curve {
  Vector lambdas;
  Vector values;
};

/// Mean of all (curve, t) values whose lambda falls in [b / n, (b + 1) / n);
/// lambda = 1 lands in the last bucket. Empty buckets are NaN.
Vector bucket_average(const std::vector<Curve>& curves, int n_buckets);

/// Per-class DFT magnitudes over one-sided bins k = 0..T/2:
/// |sum_t p_t[m] exp(-2 pi i k t / T)|. Rows are classes.
Matrix path_dft(const Matrix& preds);

/// Bin k of a length-T transform sits at k / T cycles per sample step.
Vector dft_frequencies(Index length);

enum class FrequencyUnits { per_sample, per_distance };

std::string to_string(FrequencyUnits u);
FrequencyUnits frequency_units_from_string(const std::string& s);

inline constexpr double kDefaultThreshold = 0.05;

/// Class-averaged magnitude above `threshold` over the total, DC included.
double hf_fraction(const Matrix& magnitudes, const Vector& frequencies, double threshold);

struct SpectrumResult {
  Matrix per_class;      // classes x bins
  Vector class_average;  // bins
  Vector frequencies;    // bins, in the requested units
  double threshold = kDefaultThreshold;
  double hf_fraction = 0.0;
};

SpectrumResult spectrum(const Matrix& preds, double threshold = kDefaultThreshold,
                        FrequencyUnits units = FrequencyUnits::per_sample, double spacing = 1.0);

struct PathResult {
  ImagePair pair;
  Index length = 0;
  double spacing = 0.0;
  double hf_fraction = 0.0;
};

struct PathAggregate {
  std::string group;
  double mean = 0.0;
  double sem = 0.0;  // sample std (n - 1) / sqrt(n); 0 when n = 1
  Index count = 0;
};

PathAggregate aggregate_fractions(const std::vector<double>& fractions, std::string group = "");

enum class Grouping { kind, kind_and_class };

/// One aggregate per group, groups in sorted order, members consumed in
/// pair_id order.
std::vector<PathAggregate> aggregate_paths(const std::vector<PathResult>& results,
                                           Grouping grouping = Grouping::kind);

struct ProbeOptions {
  double delta = 1.0;
  double threshold = kDefaultThreshold;
  FrequencyUnits units = FrequencyUnits::per_sample;
  int max_samples = kMaxPathSamples;
};

struct ProbeResult {
  std::vector<PathResult> paths;
  std::vector<Curve> curves;  // diff-norm curve per evaluated path
  Index skipped = 0;          // degenerate or too-short pairs
};

using PathPredictor = std::function<Matrix(const Path&)>;

PathPredictor model_predictor(const Model& model);
/// Oracle predictions for within-class paths under `spec`.
PathPredictor oracle_predictor(int n_classes, const NoiseSpec& spec);

ProbeResult probe_paths(const LabeledDataset& val, const std::vector<ImagePair>& pairs,
                        const PathPredictor& predictor, const ProbeOptions& opts);

// Prediction dump: magic "SBPRED01", u64 T, u64 M, T lambdas, then T x M
// probabilities (sample-major), all little-endian doubles.
struct PredictionDump {
  Vector lambdas;
  Matrix preds;  // M x T
};

void write_prediction_dump(const std::filesystem::path& path, const Vector& lambdas,
                           const Matrix& preds);
PredictionDump read_prediction_dump(const std::filesystem::path& path);

}  // namespace specbias

#endif  // SPECBIAS_SPECTRAL_HPP
