#include "specbias/noise.hpp"

namespace specbias {

std::string to_string(NoiseKind k) { return k == NoiseKind::radial ? "radial" : "directional"; }

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "radial") return NoiseKind::radial;
  if (s == "directional") return NoiseKind::directional;
  throw Error("unknown noise kind '" + s + "' (expected radial or directional)");
}

void NoiseSpec::validate() const {
  if (!(alpha >= 0.0 && alpha <= 0.5)) throw Error("noise alpha must lie in [0, 0.5]");
  if (!std::isfinite(f)) throw Error("noise frequency must be finite");
  if (kind == NoiseKind::radial) {
    if (!mean_norm || !std::isfinite(*mean_norm)) throw Error("radial noise needs a finite mean_norm");
  } else {
    if (!direction) throw Error("directional noise needs a direction");
    if (std::abs(direction->norm() - 1.0) > 1e-9) throw Error("noise direction is not unit norm");
  }
}

void NoiseSpec::validate_for(const ImageShape& shape) const {
  validate();
  if (direction && direction->size() != shape.size())
    throw Error("noise direction has " + std::to_string(direction->size()) +
                " entries, images are " + to_string(shape));
}

Image fourier_basis_image(int k, const ImageShape& shape, double phase) {
  if (!shape.valid()) throw Error("fourier_basis_image: invalid shape");
  if (k < 0 || k > shape.d / 2)
    throw Error("fourier_basis_image: k = " + std::to_string(k) + " outside [0, " +
                std::to_string(shape.d / 2) + "]");
  Vector px(shape.size());
  for (int ch = 0; ch < shape.c; ++ch)
    for (int i = 0; i < shape.d; ++i)
      for (int j = 0; j < shape.d; ++j)
        px(shape.index(i, j, ch)) =
            std::cos(2.0 * std::numbers::pi * double(k * ((i + j) % shape.d)) / shape.d + phase);
  const double norm = px.norm();
  if (norm == 0.0) throw Error("fourier_basis_image: phase makes the image vanish");
  return Image(shape, px / norm);
}

SmoothedLabel smooth_label(const Eigen::Ref<const Vector>& y, double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw Error("smooth_label: s = " + std::to_string(s) + " outside [0, 1]");
  const Index m = y.size();
  Index hot = -1;
  for (Index i = 0; i < m; ++i) {
    if (y(i) == 1.0 && hot < 0) {
      hot = i;
    } else if (y(i) != 0.0) {
      throw Error("smooth_label: label is not one-hot");
    }
  }
  if (hot < 0) throw Error("smooth_label: label is not one-hot");
  return smooth_label(int(hot), int(m), s);
}

SmoothedLabel smooth_label(int label, int n_classes, double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw Error("smooth_label: s = " + std::to_string(s) + " outside [0, 1]");
  if (n_classes < 1 || label < 0 || label >= n_classes) throw Error("smooth_label: label out of range");
  SmoothedLabel out;
  out.s = s;
  out.probs = Vector::Constant(n_classes, s / n_classes);
  out.probs(label) = (1.0 - s) + s / n_classes;
  return out;
}

Vector noise_values(const LabeledDataset& ds, const NoiseSpec& spec) {
  spec.validate_for(ds.shape);
  Vector s(ds.size());
  for (Index i = 0; i < ds.size(); ++i) s(i) = noise_value(ds.images.col(i), spec);
  return s;
}

std::vector<SmoothedLabel> smooth_dataset(const LabeledDataset& ds, const NoiseSpec& spec) {
  const Vector s = noise_values(ds, spec);
  std::vector<SmoothedLabel> out;
  out.reserve(ds.size());
  for (Index i = 0; i < ds.size(); ++i) out.push_back(smooth_label(ds.labels[i], ds.n_classes, s(i)));
  return out;
}

Matrix smoothed_targets(const LabeledDataset& ds, const NoiseSpec& spec) {
  const auto labels = smooth_dataset(ds, spec);
  Matrix t(ds.n_classes, ds.size());
  for (Index i = 0; i < ds.size(); ++i) t.col(i) = labels[i].probs;
  return t;
}

}  // namespace specbias
