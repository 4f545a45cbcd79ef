#include "specbias/data.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <set>

namespace specbias {

std::string to_string(const ImageShape& s) {
  return std::to_string(s.d) + "x" + std::to_string(s.d) + "x" + std::to_string(s.c);
}

Image::Image(ImageShape s, Vector p) : shape(s), pixels(std::move(p)) {
  if (!shape.valid()) throw Error("image shape " + to_string(shape) + " is invalid");
  if (pixels.size() != shape.size())
    throw Error("image has " + std::to_string(pixels.size()) + " pixels, shape " +
                to_string(shape) + " needs " + std::to_string(shape.size()));
  if (!pixels.allFinite()) throw Error("image has non-finite pixels");
}

std::string to_string(Role r) { return r == Role::train ? "train" : "validation"; }

Vector LabeledDataset::one_hot(Index i) const {
  Vector y = Vector::Zero(n_classes);
  y(labels.at(i)) = 1.0;
  return y;
}

Matrix LabeledDataset::one_hot_targets() const {
  Matrix t = Matrix::Zero(n_classes, size());
  for (Index i = 0; i < size(); ++i) t(labels[i], i) = 1.0;
  return t;
}

void LabeledDataset::validate() const {
  if (!shape.valid()) throw Error("dataset image shape " + to_string(shape) + " is invalid");
  if (n_classes < 1) throw Error("dataset needs at least one class");
  if (images.rows() != shape.size()) throw Error("dataset image rows do not match its shape");
  if (Index(labels.size()) != size() || Index(ids.size()) != size())
    throw Error("dataset labels/ids are not aligned with images");
  for (int y : labels)
    if (y < 0 || y >= n_classes) throw Error("label " + std::to_string(y) + " out of range");
  std::set<std::int64_t> seen(ids.begin(), ids.end());
  if (Index(seen.size()) != size()) throw Error("duplicate example ids in dataset");
  if (!images.allFinite()) throw Error("dataset has non-finite pixels");
}

std::vector<Index> class_counts(const LabeledDataset& ds) {
  std::vector<Index> counts(ds.n_classes, 0);
  for (int y : ds.labels) ++counts.at(y);
  return counts;
}

bool on_simplex(const Eigen::Ref<const Vector>& probs, double tol) {
  if (probs.size() == 0 || !probs.allFinite()) return false;
  return probs.minCoeff() >= -tol && std::abs(probs.sum() - 1.0) <= tol;
}

LabeledDataset load_cifar10(const std::vector<std::filesystem::path>& paths, Role role) {
  if (paths.empty()) throw Error("load_cifar10: empty file list");
  const ImageShape shape{kCifarSide, kCifarChannels};
  std::vector<unsigned char> bytes;
  std::vector<Index> records_per_file;
  for (const auto& p : paths) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open " + p.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() % kCifarRecordBytes != 0)
      throw Error("truncated CIFAR-10 file " + p.string() + ": " + std::to_string(buf.size()) +
                  " bytes is not a multiple of 3073");
    bytes.insert(bytes.end(), buf.begin(), buf.end());
  }
  const Index n = Index(bytes.size() / kCifarRecordBytes);

  LabeledDataset ds;
  ds.shape = shape;
  ds.n_classes = kCifarClasses;
  ds.role = role;
  ds.images.resize(shape.size(), n);
  ds.labels.resize(n);
  ds.ids.resize(n);
  for (Index r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] >= kCifarClasses)
      throw Error("invalid label " + std::to_string(int(rec[0])) + " in record " + std::to_string(r));
    ds.labels[r] = rec[0];
    ds.ids[r] = r;
    for (Index k = 0; k < shape.size(); ++k) ds.images(k, r) = rec[1 + k] / 255.0;
  }
  return ds;
}

void write_cifar10(const LabeledDataset& ds, const std::filesystem::path& path) {
  if (ds.shape != ImageShape{kCifarSide, kCifarChannels} || ds.n_classes > kCifarClasses)
    throw Error("write_cifar10: dataset is not CIFAR-10 shaped");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  std::vector<unsigned char> rec(kCifarRecordBytes);
  for (Index i = 0; i < ds.size(); ++i) {
    rec[0] = static_cast<unsigned char>(ds.labels[i]);
    for (Index k = 0; k < ds.shape.size(); ++k) {
      const double v = std::clamp(std::round(ds.images(k, i) * 255.0), 0.0, 255.0);
      rec[1 + k] = static_cast<unsigned char>(v);
    }
    out.write(reinterpret_cast<const char*>(rec.data()), std::streamsize(rec.size()));
  }
}

Vector spectral_noise(int d, int c, double exponent, std::mt19937_64& rng) {
  using cd = std::complex<double>;
  using CMatrix = Eigen::MatrixXcd;
  std::normal_distribution<double> gauss(0.0, 1.0);

  CMatrix w(d, d);
  for (int i = 0; i < d; ++i)
    for (int u = 0; u < d; ++u)
      w(i, u) = std::polar(1.0, 2.0 * std::numbers::pi * double((i * u) % d) / d);

  Matrix amplitude(d, d);
  for (int u = 0; u < d; ++u)
    for (int v = 0; v < d; ++v) {
      const double fu = std::min(u, d - u), fv = std::min(v, d - v);
      const double r = std::hypot(fu, fv);
      amplitude(u, v) = r == 0.0 ? (exponent == 0.0 ? 1.0 : 0.0) : std::pow(r, -exponent);
    }
  // Re of a complex gaussian sum has variance sum(A^2)/2 per pixel.
  const double scale = 1.0 / std::sqrt(0.5 * amplitude.squaredNorm());

  Vector out(Index(d) * d * c);
  CMatrix coeff(d, d);
  for (int ch = 0; ch < c; ++ch) {
    for (int u = 0; u < d; ++u)
      for (int v = 0; v < d; ++v) {
        const double re = gauss(rng), im = gauss(rng);
        coeff(u, v) = amplitude(u, v) * std::sqrt(0.5) * cd(re, im);
      }
    const CMatrix field = w * coeff * w.transpose();
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) out((Index(ch) * d + i) * d + j) = field(i, j).real() * scale;
  }
  return out;
}

LabeledDataset generate_synthetic(const SyntheticSpec& spec, Role role) {
  if (spec.n_classes < 2) throw Error("synthetic: n_classes must be >= 2");
  if (spec.per_class < 1) throw Error("synthetic: per_class must be >= 1");
  if (spec.d < 4) throw Error("synthetic: d must be >= 4");
  if (spec.c < 1) throw Error("synthetic: c must be >= 1");
  if (!(spec.template_scale >= 0.0) || !(spec.noise_scale >= 0.0) || !(spec.contrast_spread >= 0.0))
    throw Error("synthetic: scales must be non-negative");

  LabeledDataset ds;
  ds.shape = {spec.d, spec.c};
  ds.n_classes = spec.n_classes;
  ds.role = role;
  const Index n = Index(spec.n_classes) * spec.per_class;
  ds.images.resize(ds.shape.size(), n);
  ds.labels.resize(n);
  ds.ids.resize(n);

  std::mt19937_64 template_rng(spec.template_seed);
  std::vector<Vector> templates;
  for (int k = 0; k < spec.n_classes; ++k)
    templates.push_back(spec.template_scale *
                        spectral_noise(spec.d, spec.c, spec.spectral_exponent, template_rng));

  std::mt19937_64 noise_rng(spec.noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Index i = 0;
  for (int k = 0; k < spec.n_classes; ++k)
    for (int j = 0; j < spec.per_class; ++j, ++i) {
      ds.images.col(i) = templates[k] + spec.noise_scale * spectral_noise(spec.d, spec.c,
                                                                          spec.spectral_exponent,
                                                                          noise_rng);
      if (spec.contrast_spread > 0.0) ds.images.col(i) *= std::exp(spec.contrast_spread * gauss(noise_rng));
      ds.labels[i] = k;
      ds.ids[i] = i;
    }
  return ds;
}

double mean_norm(const LabeledDataset& ds) {
  if (ds.empty()) throw Error("mean_norm: empty dataset");
  double total = 0.0;
  for (Index i = 0; i < ds.size(); ++i) total += ds.images.col(i).norm();
  return total / double(ds.size());
}

DatasetStats compute_stats(const LabeledDataset& train, MeanNormSource source) {
  if (train.empty()) throw Error("compute_stats: empty dataset");
  DatasetStats st;
  st.shape = train.shape;
  const double n = double(train.size());
  st.per_pixel_mean = train.images.rowwise().sum() / n;
  const Matrix centered = train.images.colwise() - st.per_pixel_mean;
  st.per_pixel_std = (centered.array().square().rowwise().sum() / n).sqrt().max(kStdFloor);
  st.mean_norm = source == MeanNormSource::normalized ? mean_norm(normalize(train, st))
                                                      : mean_norm(train);
  return st;
}

namespace {
void check_stats_shape(const LabeledDataset& ds, const DatasetStats& stats) {
  if (ds.shape != stats.shape || stats.per_pixel_mean.size() != ds.images.rows() ||
      stats.per_pixel_std.size() != ds.images.rows())
    throw Error("normalize: dataset shape " + to_string(ds.shape) + " does not match stats shape " +
                to_string(stats.shape));
}
}  // namespace

LabeledDataset normalize(const LabeledDataset& ds, const DatasetStats& stats) {
  check_stats_shape(ds, stats);
  LabeledDataset out = ds;
  out.images = (ds.images.colwise() - stats.per_pixel_mean).array().colwise() /
               stats.per_pixel_std.array();
  return out;
}

LabeledDataset denormalize(const LabeledDataset& ds, const DatasetStats& stats) {
  check_stats_shape(ds, stats);
  LabeledDataset out = ds;
  out.images = (ds.images.array().colwise() * stats.per_pixel_std.array()).matrix().colwise() +
               stats.per_pixel_mean;
  return out;
}

LabeledDataset subset(const LabeledDataset& ds, Index n, std::uint64_t seed) {
  if (n < 1 || n > ds.size())
    throw Error("subset: n = " + std::to_string(n) + " outside [1, " + std::to_string(ds.size()) + "]");
  std::vector<Index> order(ds.size());
  std::iota(order.begin(), order.end(), Index(0));
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(n);

  LabeledDataset out;
  out.shape = ds.shape;
  out.n_classes = ds.n_classes;
  out.role = ds.role;
  out.images.resize(ds.images.rows(), n);
  out.labels.resize(n);
  out.ids.resize(n);
  for (Index i = 0; i < n; ++i) {
    out.images.col(i) = ds.images.col(order[i]);
    out.labels[i] = ds.labels[order[i]];
    out.ids[i] = ds.ids[order[i]];
  }
  return out;
}

}  // namespace specbias
