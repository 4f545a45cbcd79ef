#ifndef SPECBIAS_TESTS_ORACLES_HPP
#define SPECBIAS_TESTS_ORACLES_HPP

// Reference implementations used only by tests. They are written for
// clarity, not speed, and share no code with the library.

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "specbias/data.hpp"
#include "specbias/model.hpp"

namespace oracle {

using specbias::Index;
using specbias::Matrix;
using specbias::Vector;

/// |sum_t x_t exp(-2 pi i k t / T)| for k = 0..T/2, by direct summation.
inline Vector naive_dft_magnitudes(const Vector& x) {
  const Index t_len = x.size();
  Vector out(t_len / 2 + 1);
  for (Index k = 0; k <= t_len / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (Index t = 0; t < t_len; ++t)
      acc += x(t) * std::polar(1.0, -2.0 * std::numbers::pi * double(k * t) / double(t_len));
    out(k) = std::abs(acc);
  }
  return out;
}

/// Full two-sided energy sum |X_k|^2 reconstructed from one-sided magnitudes
/// of a real sequence.
inline double two_sided_energy(const Vector& half, Index t_len) {
  double e = 0.0;
  for (Index k = 0; k < half.size(); ++k) {
    const bool paired = k != 0 && !(t_len % 2 == 0 && k == t_len / 2);
    e += (paired ? 2.0 : 1.0) * half(k) * half(k);
  }
  return e;
}

/// Central finite difference of `loss` with respect to parameter i.
template <typename Loss>
double central_difference(specbias::Model& model, Index i, double h, const Loss& loss) {
  const double keep = model.params()(i);
  model.params()(i) = keep + h;
  const double up = loss(model);
  model.params()(i) = keep - h;
  const double down = loss(model);
  model.params()(i) = keep;
  return (up - down) / (2.0 * h);
}

/// Spearman rho from the textbook formula 1 - 6 sum d^2 / (n (n^2 - 1)),
/// valid when neither input has ties.
inline double spearman_no_ties(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = double(k + 1);
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  double d2 = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  const double n = double(x.size());
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

/// Small labelled dataset with Gaussian pixels, balanced classes.
inline specbias::LabeledDataset gaussian_dataset(int n_classes, int per_class, specbias::ImageShape shape,
                                                 std::uint64_t seed) {
  specbias::LabeledDataset ds;
  ds.shape = shape;
  ds.n_classes = n_classes;
  const Index n = Index(n_classes) * per_class;
  ds.images.resize(shape.size(), n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < shape.size(); ++k) ds.images(k, i) = g(rng);
    ds.labels.push_back(int(i % n_classes));
    ds.ids.push_back(i);
  }
  return ds;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("specbias_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle

#endif  // SPECBIAS_TESTS_ORACLES_HPP
