#include "doctest.h"
#include "oracles.hpp"

#include "specbias/noise.hpp"

using namespace specbias;

namespace {

NoiseSpec radial(double f, double alpha, double mean_norm) {
  NoiseSpec s;
  s.kind = NoiseKind::radial;
  s.f = f;
  s.alpha = alpha;
  s.mean_norm = mean_norm;
  return s;
}

NoiseSpec directional(double f, double alpha, Vector v) {
  NoiseSpec s;
  s.kind = NoiseKind::directional;
  s.f = f;
  s.alpha = alpha;
  s.direction = std::move(v);
  return s;
}

}  // namespace

TEST_CASE("radial_wave") {
  Vector x(4);
  x << 3.0, 4.0, 0.0, 0.0;  // norm 5
  CHECK(radial_wave(x, radial(0.3, 0.25, 5.0)) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(radial_wave(x, radial(0.3, 0.0, 1.0)) == 0.0);
  const double f = 0.2;
  CHECK(radial_wave(x, radial(f, 0.4, 5.0 - 1.0 / (4.0 * f))) == doctest::Approx(0.8).epsilon(1e-12));
  // Hand value: 0.5 (1 + sin(2 pi 0.1 (5 - 2))) = 0.5 (1 + sin(0.6 pi)).
  CHECK(radial_wave(x, radial(0.1, 0.5, 2.0)) ==
        doctest::Approx(0.5 * (1.0 + 0.9510565162951535)).epsilon(1e-12));

  NoiseSpec missing = radial(0.1, 0.5, 0.0);
  missing.mean_norm.reset();
  CHECK_THROWS_AS(radial_wave(x, missing), Error);
  CHECK_THROWS_AS(missing.validate(), Error);
}

TEST_CASE("radial_wave is invariant under norm-preserving permutations") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  const auto spec = radial(0.37, 0.5, 10.0);
  for (int t = 0; t < 20; ++t) {
    Vector x(48);
    for (auto& v : x) v = 3.0 * g(rng);
    Vector y = x;
    std::shuffle(y.begin(), y.end(), rng);
    CHECK(std::abs(radial_wave(x, spec) - radial_wave(y, spec)) < 1e-12);
  }
}

TEST_CASE("fourier_basis_image") {
  const ImageShape shape{32, 3};
  const Image f0 = fourier_basis_image(0, shape);
  CHECK((f0.pixels.array() - 1.0 / std::sqrt(32.0 * 32.0 * 3.0)).abs().maxCoeff() < 1e-15);
  for (int k = 0; k <= 16; ++k) CHECK(std::abs(fourier_basis_image(k, shape).pixels.norm() - 1.0) < 1e-12);
  double worst = 0.0;
  for (int k = 1; k <= 16; ++k)
    for (int j = k + 1; j <= 16; ++j)
      worst = std::max(worst, std::abs(fourier_basis_image(k, shape).pixels.dot(fourier_basis_image(j, shape).pixels)));
  CHECK(worst < 1e-9);

  // Stripes: pixel (i, j) depends on i + j only, identical across channels.
  const Image f3 = fourier_basis_image(3, {8, 2});
  const ImageShape s8{8, 2};
  CHECK(f3.pixels(s8.index(1, 2, 0)) == f3.pixels(s8.index(2, 1, 1)));
  CHECK_THROWS_AS(fourier_basis_image(17, shape), Error);
  CHECK_THROWS_AS(fourier_basis_image(-1, shape), Error);
}

TEST_CASE("directional_wave") {
  const ImageShape shape{4, 1};
  const Vector v = fourier_basis_image(1, shape).pixels;
  Vector x = Vector::Zero(16);
  CHECK(directional_wave(x, directional(0.7, 0.3, v)) == doctest::Approx(0.3).epsilon(1e-15));
  const double f = 0.25;
  x = v / (4.0 * f);
  CHECK(directional_wave(x, directional(f, 0.3, v)) == doctest::Approx(0.6).epsilon(1e-12));

  // V = F_0, X = c * ones: <X, V> = c * sqrt(16) = 4c.
  const Vector v0 = fourier_basis_image(0, shape).pixels;
  for (double c : {0.5, 1.0, 2.5}) {
    const Vector xc = Vector::Constant(16, c);
    const double hand = 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * 0.1 * 4.0 * c));
    CHECK(directional_wave(xc, directional(0.1, 0.5, v0)) == doctest::Approx(hand).epsilon(1e-12));
  }

  // Orthogonal additions leave s unchanged.
  const Vector v2 = fourier_basis_image(2, shape).pixels;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  Vector base(16);
  for (auto& e : base) e = g(rng);
  const auto spec = directional(0.9, 0.5, v);
  CHECK(std::abs(directional_wave(base, spec) - directional_wave(Vector(base + 5.0 * v2), spec)) < 1e-9);

  CHECK_THROWS_AS(directional_wave(x, directional(0.1, 0.5, 2.0 * v)), Error);
  NoiseSpec none = directional(0.1, 0.5, v);
  none.direction.reset();
  CHECK_THROWS_AS(directional_wave(x, none), Error);
  CHECK_THROWS_AS(directional_wave(x, radial(0.1, 0.5, 1.0)), Error);
}

TEST_CASE("noise stays in [0, 2 alpha]") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 0.5), fr(0.0, 3.0);
  std::normal_distribution<double> g;
  for (int t = 0; t < 500; ++t) {
    Vector x(12);
    for (auto& e : x) e = 2.0 * g(rng);
    const double a = u(rng);
    const double s = radial_wave(x, radial(fr(rng), a, 5.0));
    CHECK(s >= 0.0);
    CHECK(s <= 2.0 * a + 1e-15);
  }
}

TEST_CASE("smooth_label") {
  Vector y = Vector::Zero(10);
  y(3) = 1.0;
  CHECK(smooth_label(y, 0.0).probs == y);
  CHECK(smooth_label(y, 1.0).probs == Vector::Constant(10, 0.1));
  const Vector p = smooth_label(y, 0.2).probs;
  CHECK(p(3) == doctest::Approx(0.82).epsilon(1e-15));
  CHECK(p(0) == doctest::Approx(0.02).epsilon(1e-15));

  // Affine in s: the midpoint of s = 0 and s = 1 is s = 0.5.
  const Vector mid = 0.5 * (smooth_label(y, 0.0).probs + smooth_label(y, 1.0).probs);
  CHECK((smooth_label(y, 0.5).probs - mid).cwiseAbs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(smooth_label(y, 1.5), Error);
  CHECK_THROWS_AS(smooth_label(y, -0.1), Error);
  Vector two = y;
  two(4) = 1.0;
  CHECK_THROWS_AS(smooth_label(two, 0.1), Error);
  CHECK_THROWS_AS(smooth_label(Vector(Vector::Zero(3)), 0.1), Error);
}

TEST_CASE("smooth_dataset") {
  auto ds = oracle::gaussian_dataset(3, 4, {4, 1}, 2);
  const auto zero = smooth_dataset(ds, radial(0.3, 0.0, 4.0));
  for (Index i = 0; i < ds.size(); ++i) CHECK(zero[i].probs == ds.one_hot(i));

  for (Index i = 0; i < ds.size(); ++i) ds.images.col(i) *= 2.0 / ds.images.col(i).norm();
  const Vector s = noise_values(ds, radial(0.3, 0.5, 1.0));
  CHECK(s.maxCoeff() - s.minCoeff() < 1e-12);

  const Matrix t = smoothed_targets(ds, radial(0.3, 0.5, 1.0));
  CHECK(t.cols() == ds.size());
  for (Index i = 0; i < ds.size(); ++i) CHECK(on_simplex(t.col(i)));
}
