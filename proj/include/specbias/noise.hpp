#ifndef SPECBIAS_NOISE_HPP
#define SPECBIAS_NOISE_HPP

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "specbias/data.hpp"
#include "specbias/types.hpp"

namespace specbias {

enum class NoiseKind { radial, directional };

std::string to_string(NoiseKind k);
NoiseKind noise_kind_from_string(const std::string& s);

/// Label-smoothing noise field S(X) = alpha * (1 + sin(2 pi f g(X))), where
/// g(X) = ||X|| - mean_norm (radial) or <X, direction> (directional).
struct NoiseSpec {
  NoiseKind kind = NoiseKind::radial;
  double f = 0.0;
  double alpha = 0.5;
  std::optional<Vector> direction;
  std::optional<double> mean_norm;

  /// Throws unless alpha is in [0, 0.5], f is finite and the kind's
  /// parameters are present (direction of unit norm within 1e-9).
  void validate() const;
  void validate_for(const ImageShape& shape) const;
};

namespace detail {
template <typename T>
T wave(T alpha, T f, T arg) {
  return alpha * (T(1) + std::sin(T(2) * std::numbers::pi_v<T> * f * arg));
}
}  // namespace detail

template <typename Derived>
typename Derived::Scalar radial_wave(const Eigen::MatrixBase<Derived>& x, const NoiseSpec& spec) {
  using T = typename Derived::Scalar;
  if (spec.kind != NoiseKind::radial) throw Error("radial_wave: spec is not radial");
  if (!spec.mean_norm) throw Error("radial_wave: spec has no mean_norm");
  return detail::wave<T>(T(spec.alpha), T(spec.f), x.norm() - T(*spec.mean_norm));
}

template <typename Derived>
typename Derived::Scalar directional_wave(const Eigen::MatrixBase<Derived>& x,
                                          const NoiseSpec& spec) {
  using T = typename Derived::Scalar;
  if (spec.kind != NoiseKind::directional) throw Error("directional_wave: spec is not directional");
  if (!spec.direction) throw Error("directional_wave: spec has no direction");
  const auto& v = *spec.direction;
  if (v.size() != x.size()) throw Error("directional_wave: direction size does not match image");
  if (std::abs(v.norm() - 1.0) > 1e-9) throw Error("directional_wave: direction is not unit norm");
  return detail::wave<T>(T(spec.alpha), T(spec.f), x.dot(v.template cast<T>()));
}

template <typename Derived>
typename Derived::Scalar noise_value(const Eigen::MatrixBase<Derived>& x, const NoiseSpec& spec) {
  return spec.kind == NoiseKind::radial ? radial_wave(x, spec) : directional_wave(x, spec);
}

/// Unit-norm diagonal stripe image cos(2 pi k (i + j) / d + phase), equal
/// across channels. 0 <= k <= d / 2.
Image fourier_basis_image(int k, const ImageShape& shape, double phase = 0.0);

struct SmoothedLabel {
  Vector probs;
  double s = 0.0;
};

/// y * (1 - s) + s / M for a one-hot y of length M.
SmoothedLabel smooth_label(const Eigen::Ref<const Vector>& y, double s);
SmoothedLabel smooth_label(int label, int n_classes, double s);

/// S(X_i) for every example, in dataset order.
Vector noise_values(const LabeledDataset& ds, const NoiseSpec& spec);
std::vector<SmoothedLabel> smooth_dataset(const LabeledDataset& ds, const NoiseSpec& spec);
/// Smoothed labels as an n_classes x size() target matrix.
Matrix smoothed_targets(const LabeledDataset& ds, const NoiseSpec& spec);

}  // namespace specbias

#endif  // SPECBIAS_NOISE_HPP
