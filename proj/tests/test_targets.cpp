#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "ksmc/sensor_network.hpp"
#include "ksmc/targets.hpp"
#include "oracles.hpp"
#include "properties.hpp"

using namespace ksmc;

TEST_CASE("banana log-density matches the hand-evaluated factors") {
  // d = 8, b = 0.1, v = 100 at the origin:
  //   log N(0; 0, 100) + log N(0; -10, 1) + 6 log N(0; 0, 1)
  const BananaTarget banana(8, 0.1, 100.0);
  const double expected = -0.5 * std::log(200.0 * std::numbers::pi) -
                          (0.5 * kLog2Pi + 50.0) - 6.0 * 0.5 * kLog2Pi;
  CHECK_THAT(banana.log_density(Vector::Zero(8)),
             Catch::Matchers::WithinAbs(expected, 1e-9));
  CHECK_THAT(expected, Catch::Matchers::WithinAbs(-59.654, 5e-4));
}

TEST_CASE("banana ridge maximizes the second coordinate conditionally") {
  const BananaTarget banana(4, 0.1, 100.0);
  Vector y = Vector::Zero(4);
  y[0] = 3.0;
  y[1] = 0.1 * (9.0 - 100.0);
  const double on_ridge = banana.log_density(y);
  for (const double off : {-0.5, 0.5, 2.0}) {
    Vector z = y;
    z[1] += off;
    CHECK(banana.log_density(z) < on_ridge);
  }
}

TEST_CASE("banana with zero twist is the diagonal Gaussian") {
  const BananaTarget banana(5, 0.0, 7.0);
  Vector diag = Vector::Ones(5);
  diag[0] = 7.0;
  const GaussianTarget gauss(Vector::Zero(5), Matrix(diag.asDiagonal()));
  for (int trial = 0; trial < 100; ++trial) {
    const Vector y = oracle::random_vector(5, 600 + trial, 2.0);
    CHECK_THAT(banana.log_density(y),
               Catch::Matchers::WithinAbs(gauss.log_density(y), 1e-12));
  }
}

TEST_CASE("banana exact sampler matches closed-form moments") {
  const BananaTarget banana(3, 0.1, 100.0);
  Rng rng(17);
  const Matrix sample = banana.sample_matrix(200000, rng);
  const Vector mean = sample.colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 0.15);
  Matrix centered = sample.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / 199999.0;
  const Matrix truth = banana.exact_covariance();
  CHECK_THAT(cov(0, 0), Catch::Matchers::WithinRel(truth(0, 0), 0.05));
  CHECK_THAT(cov(1, 1), Catch::Matchers::WithinRel(truth(1, 1), 0.05));
  CHECK_THAT(cov(2, 2), Catch::Matchers::WithinRel(truth(2, 2), 0.05));
  // SE of this cross term is ~ sqrt(10 b^2 v^3 / n) ~ 0.7
  CHECK(std::abs(cov(0, 1)) < 3.0);
}

TEST_CASE("sensor likelihood term matches the hand evaluation") {
  // One unknown sensor, one base at distance D = R = 0.3, Z = 1, Y = D.
  SensorDataset data;
  data.n_unknown = 1;
  data.n_base = 1;
  data.range = 0.3;
  data.noise_var = 0.02;
  data.base_locations = Matrix(1, 2);
  data.base_locations << 0.3, 0.0;
  data.true_locations = Matrix(1, 2);
  data.true_locations << 0.0, 0.0;
  data.observations = {{0, 1, 1, 0.3}};
  const SensorNetworkTarget target(data);

  Vector x(2);
  x << 0.0, 0.0;
  double prior = 0.0;
  for (int k = 0; k < 2; ++k) prior += gaussian_log_density_1d(x[k], 0.5, 1.0);
  const double likelihood = target.log_density(x) - prior;
  const double expected = -0.5 + (-0.5 * std::log(2.0 * std::numbers::pi * 0.02));
  CHECK_THAT(likelihood, Catch::Matchers::WithinAbs(expected, 1e-12));
  CHECK_THAT(expected, Catch::Matchers::WithinAbs(0.537, 1e-3));
}

TEST_CASE("sensor missed detection at zero distance is impossible") {
  SensorDataset data;
  data.n_unknown = 1;
  data.n_base = 1;
  data.range = 0.3;
  data.noise_var = 0.02;
  data.base_locations = Matrix(1, 2);
  data.base_locations << 0.25, 0.5;
  data.true_locations = Matrix::Zero(1, 2);
  data.observations = {{0, 1, 0, 0.0}};
  const SensorNetworkTarget target(data);
  Vector at_base(2);
  at_base << 0.25, 0.5;
  CHECK(target.log_density(at_base) == kNegInf);
}

TEST_CASE("sensor density is invariant to consistent sensor relabeling") {
  const SensorDataset data = generate_sensor_dataset(3, 2, 0.3, 0.02, 11);
  const SensorNetworkTarget target(data);

  // swap unknown sensors 0 and 1 in both the parameter vector and the
  // observation rows
  SensorDataset swapped = data;
  for (auto& obs : swapped.observations) {
    auto relabel = [](int node) { return node == 0 ? 1 : (node == 1 ? 0 : node); };
    int i = relabel(obs.i), j = relabel(obs.j);
    if (i > j) std::swap(i, j);
    obs.i = i;
    obs.j = j;
  }
  const SensorNetworkTarget target_swapped(swapped);

  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = oracle::random_vector(6, 40 + trial);
    Vector x_swapped = x;
    x_swapped.segment(0, 2).swap(x_swapped.segment(2, 2));
    CHECK_THAT(target.log_density(x),
               Catch::Matchers::WithinAbs(target_swapped.log_density(x_swapped), 1e-10));
  }
}

TEST_CASE("sensor dataset generation edge cases") {
  // R huge: every pair detected
  const SensorDataset all_seen = generate_sensor_dataset(3, 2, 1e9, 0.02, 3);
  for (const auto& obs : all_seen.observations) CHECK(obs.detected == 1);

  // sigma^2 = 0 with all detected: distances are exact
  const SensorDataset exact = generate_sensor_dataset(2, 1, 1e9, 0.0, 4);
  auto location = [&](int node) -> Eigen::Vector2d {
    if (node < exact.n_unknown) return exact.true_locations.row(node).transpose();
    return exact.base_locations.row(node - exact.n_unknown).transpose();
  };
  for (const auto& obs : exact.observations) {
    const double d = (location(obs.i) - location(obs.j)).norm();
    CHECK_THAT(obs.distance, Catch::Matchers::WithinAbs(d, 1e-12));
  }

  // determinism
  const SensorDataset a = generate_sensor_dataset(3, 2, 0.3, 0.02, 5);
  const SensorDataset b = generate_sensor_dataset(3, 2, 0.3, 0.02, 5);
  CHECK(a.true_locations == b.true_locations);
  CHECK(a.base_locations == b.base_locations);
  REQUIRE(a.observations.size() == b.observations.size());
  for (std::size_t k = 0; k < a.observations.size(); ++k) {
    CHECK(a.observations[k].detected == b.observations[k].detected);
    CHECK(a.observations[k].distance == b.observations[k].distance);
  }

  // base-base pairs are never observed
  for (const auto& obs : a.observations) CHECK((obs.i < 3 || obs.j < 3));
}

TEST_CASE("sensor dataset round-trips through its text format") {
  const SensorDataset data = generate_sensor_dataset(3, 2, 0.3, 0.02, 21);
  const auto path = std::filesystem::temp_directory_path() / "ksmc_sensor_test.txt";
  save_sensor_dataset(data, path.string());
  const SensorDataset loaded = load_sensor_dataset(path.string());
  CHECK(loaded.n_unknown == data.n_unknown);
  CHECK(loaded.n_base == data.n_base);
  CHECK(loaded.range == data.range);
  CHECK(loaded.noise_var == data.noise_var);
  CHECK(loaded.seed == data.seed);
  CHECK(loaded.base_locations == data.base_locations);
  CHECK(loaded.true_locations == data.true_locations);
  REQUIRE(loaded.observations.size() == data.observations.size());
  for (std::size_t k = 0; k < data.observations.size(); ++k) {
    CHECK(loaded.observations[k].i == data.observations[k].i);
    CHECK(loaded.observations[k].j == data.observations[k].j);
    CHECK(loaded.observations[k].detected == data.observations[k].detected);
    CHECK(loaded.observations[k].distance == data.observations[k].distance);
  }
  std::filesystem::remove(path);
}

TEST_CASE("gaussian and mixture targets evaluate exactly") {
  const GaussianTarget standard(Vector::Zero(1), Matrix::Identity(1, 1));
  Vector origin(1);
  origin << 0.0;
  CHECK_THAT(standard.log_density(origin),
             Catch::Matchers::WithinAbs(-0.918939, 1e-6));

  // a 50/50 mixture of identical components equals the single component
  const GaussianMixtureTarget mix(
      {0.5, 0.5}, {Vector::Zero(2), Vector::Zero(2)},
      {Matrix::Identity(2, 2), Matrix::Identity(2, 2)});
  const GaussianTarget single(Vector::Zero(2), Matrix::Identity(2, 2));
  for (int trial = 0; trial < 50; ++trial) {
    const Vector x = oracle::random_vector(2, 900 + trial, 2.0);
    CHECK_THAT(mix.log_density(x),
               Catch::Matchers::WithinAbs(single.log_density(x), 1e-12));
  }

  Matrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // indefinite
  CHECK_THROWS_AS(GaussianTarget(Vector::Zero(2), bad), NumericalError);
}

TEST_CASE("noisy wrapper is unbiased on the natural scale") {
  const auto inner = std::make_shared<GaussianTarget>(Vector::Zero(1),
                                                      Matrix::Identity(1, 1));
  const NoisyTargetWrapper noisy(inner, 0.25);
  CHECK(noisy.is_noisy());

  Vector x(1);
  x << 0.4;
  const double exact = inner->log_density(x);

  Rng rng(2025);
  double mean_ratio = 0.0;
  const int draws = 100000;
  for (int k = 0; k < draws; ++k)
    mean_ratio += std::exp(noisy.log_density(x, rng) - exact);
  mean_ratio /= static_cast<double>(draws);
  CHECK(mean_ratio > 0.99);
  CHECK(mean_ratio < 1.01);

  // distinct rng states give distinct evaluations
  Rng r1(1), r2(2);
  CHECK(noisy.log_density(x, r1) != noisy.log_density(x, r2));

  // tau^2 = 0 reduces to the exact density, with or without a stream
  const NoisyTargetWrapper noiseless(inner, 0.0);
  CHECK(noiseless.log_density(x) == exact);
  Rng r3(3);
  CHECK(noiseless.log_density(x, r3) == exact);
  CHECK_FALSE(noiseless.is_noisy());
  CHECK_THROWS_AS(noisy.log_density(x), ArgumentError);
}

TEST_CASE("targets invariance suite") {
  for (const auto& check : props::targets_properties()) {
    INFO(check.name << " " << check.detail);
    CHECK(check.ok);
  }
}
