#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ksmc/emulators.hpp"
#include "ksmc/kernel.hpp"
#include "oracles.hpp"
#include "properties.hpp"

using namespace ksmc;

namespace {

Matrix standard_normal_sample(Eigen::Index n, Eigen::Index d, unsigned seed) {
  return oracle::random_matrix(n, d, seed);
}

}  // namespace

TEST_CASE("covariance emulator trivial reductions") {
  // single anchor: the centering matrix is zero, so the proposal is gamma^2 I
  Matrix one(1, 3);
  one << 0.5, -1.0, 2.0;
  const CovarianceEmulator single(one, Vector::Ones(1), 1.0, 2.0, 0.04);
  const Vector x = oracle::random_vector(3, 4);
  CHECK((single.proposal_covariance(x) - 0.04 * Matrix::Identity(3, 3)).norm() < 1e-15);

  // nu^2 = 0 gives gamma^2 I everywhere
  Matrix several = oracle::random_matrix(6, 3, 5);
  const CovarianceEmulator flat(several, Vector::Ones(6), 1.0, 0.0, 0.09);
  CHECK((flat.proposal_covariance(x) - 0.09 * Matrix::Identity(3, 3)).norm() < 1e-15);
}

TEST_CASE("two-anchor proposal covariance matches hand-expanded algebra") {
  // 1-D, two anchors: gamma^2 + nu^2 * 4 (k'_1, k'_2) C_w (k'_1, k'_2)^T
  Matrix anchors(2, 1);
  anchors << -0.4, 0.9;
  Vector weights(2);
  weights << 0.3, 0.7;
  const double l = 0.8, nu2 = 1.7, gamma2 = 0.02;
  const CovarianceEmulator emu(anchors, weights, l, nu2, gamma2);

  Vector x(1);
  x << 0.25;
  auto kprime = [&](double z) {
    const double k = std::exp(-(x[0] - z) * (x[0] - z) / (2.0 * l * l));
    return -(x[0] - z) / (l * l) * k;
  };
  const double k1 = kprime(anchors(0, 0));
  const double k2 = kprime(anchors(1, 0));
  Eigen::Matrix2d centering;
  centering << weights[0] - weights[0] * weights[0], -weights[0] * weights[1],
      -weights[0] * weights[1], weights[1] - weights[1] * weights[1];
  Eigen::Vector2d kk(k1, k2);
  const double expected = gamma2 + nu2 * 4.0 * kk.dot(centering * kk);
  CHECK_THAT(emu.proposal_covariance(x)(0, 0),
             Catch::Matchers::WithinAbs(expected, 1e-12));
}

TEST_CASE("fit keeps all particles when n is within the anchor budget") {
  const Matrix particles = oracle::random_matrix(20, 2, 9);
  CovarianceEmulatorConfig cfg;
  cfg.max_anchors = 500;
  Rng rng(1);
  const CovarianceEmulator emu =
      fit_covariance_emulator(particles, Vector::Ones(20), cfg, rng);
  CHECK(emu.anchor_count() == 20);
  CHECK((emu.anchors() - particles).norm() == 0.0);
  CHECK_THAT(emu.anchor_weights().sum(), Catch::Matchers::WithinAbs(1.0, 1e-14));
  CHECK_THAT(emu.lengthscale(),
             Catch::Matchers::WithinAbs(median_heuristic(particles), 1e-14));
}

TEST_CASE("fit subsamples by weight when n exceeds the budget") {
  const Matrix particles = oracle::random_matrix(200, 2, 10);
  Vector weights = Vector::Zero(200);
  weights.head(50).setConstant(1.0);  // only the first 50 can be drawn
  CovarianceEmulatorConfig cfg;
  cfg.max_anchors = 30;
  Rng rng(2);
  const CovarianceEmulator emu = fit_covariance_emulator(particles, weights, cfg, rng);
  CHECK(emu.anchor_count() == 30);
  for (Eigen::Index a = 0; a < emu.anchor_count(); ++a) {
    bool from_head = false;
    for (Eigen::Index i = 0; i < 50; ++i)
      if ((emu.anchors().row(a) - particles.row(i)).norm() == 0.0) from_head = true;
    CHECK(from_head);
  }
}

TEST_CASE("degenerate weight vector behaves like a single-particle fit") {
  Matrix particles(3, 2);
  particles << 0.0, 0.0, 5.0, 1.0, -2.0, 3.0;
  Vector weights(3);
  weights << 1.0, 0.0, 0.0;
  CovarianceEmulatorConfig cfg;
  Rng rng(3);
  const CovarianceEmulator weighted =
      fit_covariance_emulator(particles, weights, cfg, rng);
  const CovarianceEmulator single(particles.topRows(1), Vector::Ones(1),
                                  weighted.lengthscale(), cfg.scale_nu2,
                                  cfg.exploration_gamma2);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector x = oracle::random_vector(2, 70 + trial, 2.0);
    CHECK((weighted.proposal_covariance(x) - single.proposal_covariance(x)).norm() <
          1e-14);
  }
}

TEST_CASE("covariance fit error paths") {
  CovarianceEmulatorConfig cfg;
  Rng rng(4);
  Matrix one(1, 2);
  one.setZero();
  CHECK_THROWS_AS(fit_covariance_emulator(one, Vector::Ones(1), cfg, rng),
                  ArgumentError);
  Matrix two = oracle::random_matrix(2, 2, 11);
  CHECK_THROWS_AS(fit_covariance_emulator(two, Vector::Zero(2), cfg, rng),
                  NumericalError);

  // collapsed point set falls back to the configured lengthscale
  Matrix collapsed(4, 2);
  collapsed.setConstant(1.5);
  cfg.fallback_lengthscale = 0.77;
  const CovarianceEmulator emu =
      fit_covariance_emulator(collapsed, Vector::Ones(4), cfg, rng);
  CHECK(emu.lengthscale() == 0.77);
}

TEST_CASE("gradient emulator matches the quadratic-minimization oracle") {
  // 20 random small instances, theta within 1e-6 of steepest descent on
  // 0.5 theta' (C + lambda I) theta - theta' b
  for (unsigned trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + trial % 9;
    const Eigen::Index d = 1 + trial % 3;
    const Eigen::Index m = 2 + trial % 4;
    const double ridge = 1e-3;
    const Matrix particles = oracle::random_matrix(n, d, 3000 + trial);
    Vector weights = oracle::random_vector(n, 4000 + trial).cwiseAbs();
    weights.array() += 0.05;
    Rng map_rng(500 + trial);
    const FourierFeatureMap map = sample_feature_map(d, m, 0.9, map_rng);

    const GradientEmulator emu = fit_gradient_emulator(particles, weights, map, ridge);

    Vector b = Vector::Zero(m);
    Matrix c = Matrix::Zero(m, m);
    const double total = weights.sum();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector x = particles.row(i).transpose();
      b -= (weights[i] / total) * embed_hess_diag(map, x).rowwise().sum();
      const Matrix g = embed_grad(map, x);
      c += (weights[i] / total) * g * g.transpose();
    }
    c.diagonal().array() += ridge;
    const Vector oracle_theta = oracle::minimize_quadratic(c, b);
    CHECK((emu.theta() - oracle_theta).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("duplicated sample equals a single sample of the same total weight") {
  Matrix twice(2, 2);
  twice << 0.7, -0.3, 0.7, -0.3;
  Vector half(2);
  half << 0.5, 0.5;
  Matrix once(1, 2);
  once << 0.7, -0.3;
  Rng map_rng(77);
  const FourierFeatureMap map = sample_feature_map(2, 6, 1.0, map_rng);
  const GradientEmulator dup = fit_gradient_emulator(twice, half, map, 1e-2);
  const GradientEmulator single = fit_gradient_emulator(once, Vector::Ones(1), map, 1e-2);
  CHECK((dup.theta() - single.theta()).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("gradient emulator recovers the standard normal score") {
  const Eigen::Index n = 5000, d = 2, m = 300;
  const Matrix samples = standard_normal_sample(n, d, 123);
  Rng map_rng(9);
  const FourierFeatureMap map =
      sample_feature_map(d, m, median_heuristic(samples.topRows(400)), map_rng);
  const GradientEmulator emu = fit_gradient_emulator(samples, Vector::Ones(n), map);

  double mse = 0.0;
  for (int p = 0; p < 100; ++p) {
    const Vector x = oracle::random_vector(d, 7000 + p, 0.4);
    mse += (emu.log_density_gradient(x) + x).squaredNorm();
  }
  mse /= 100.0;
  CHECK(mse < 0.05);

  // gradient near the origin is small by symmetry
  CHECK(emu.log_density_gradient(Vector::Zero(d)).norm() < 0.1);
}

TEST_CASE("emulator gradient agrees with finite differences of f") {
  Rng map_rng(31);
  const FourierFeatureMap map = sample_feature_map(3, 15, 1.2, map_rng);
  const Matrix particles = oracle::random_matrix(30, 3, 32);
  const GradientEmulator emu =
      fit_gradient_emulator(particles, Vector::Ones(30), map, 1e-3);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector x = oracle::random_vector(3, 8000 + trial);
    const Vector fd = oracle::fd_gradient(
        [&](const Vector& p) { return emu.log_density(p); }, x, 1e-5);
    CHECK((emu.log_density_gradient(x) - fd).cwiseAbs().maxCoeff() < 1e-6);
  }

  // theta = 0 gives a zero gradient
  GradientEmulator zero(map);
  CHECK(zero.log_density_gradient(Vector::Zero(3)).norm() == 0.0);
}

TEST_CASE("singular system without ridge is rejected") {
  FourierFeatureMap map;
  map.frequencies = Matrix::Zero(4, 2);  // constant features, singular C
  map.phases = Vector::Zero(4);
  const Matrix particles = oracle::random_matrix(5, 2, 41);
  CHECK_THROWS_AS(fit_gradient_emulator(particles, Vector::Ones(5), map, 0.0),
                  NumericalError);
}

TEST_CASE("accumulated batches average their score-matching moments") {
  Rng map_rng(51);
  const FourierFeatureMap map = sample_feature_map(2, 8, 1.0, map_rng);
  const Matrix batch_a = oracle::random_matrix(15, 2, 52);
  const Matrix batch_b = oracle::random_matrix(15, 2, 53);

  GradientEmulator incremental(map, 1e-3);
  incremental.accumulate(batch_a, Vector::Ones(15));
  incremental.accumulate(batch_b, Vector::Ones(15));
  incremental.refit();

  Matrix pooled(30, 2);
  pooled << batch_a, batch_b;
  const GradientEmulator oneshot =
      fit_gradient_emulator(pooled, Vector::Ones(30), map, 1e-3);
  CHECK((incremental.theta() - oneshot.theta()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("emulators invariance suite") {
  for (const auto& check : props::emulators_properties()) {
    INFO(check.name << " " << check.detail);
    CHECK(check.ok);
  }
}
