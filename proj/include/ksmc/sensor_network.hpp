#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ksmc/common.hpp"
#include "ksmc/rng.hpp"
#include "ksmc/targets.hpp"

namespace ksmc {

/// One pairwise measurement between network nodes. Nodes 0..S-1 are the
/// unknown sensors, S..S+B-1 the base sensors with known locations;
/// base-base pairs never appear.
struct SensorObservation {
  int i = 0;
  int j = 0;
  int detected = 0;     // Z_ij
  double distance = 0;  // Y_ij, meaningful only when detected == 1
};

/// Synthetic sensor-localization dataset: detection follows
/// Z_ij ~ Binom(1, exp(-||x_i - x_j||^2 / (2 R^2))) and detected distances are
/// Y_ij ~ N(||x_i - x_j||, sigma^2).
struct SensorDataset {
  int n_unknown = 0;  // S
  int n_base = 0;     // B
  double range = 0.3;
  double noise_var = 0.02;
  std::uint64_t seed = 0;
  Matrix base_locations;   // B x 2
  Matrix true_locations;   // S x 2, kept for diagnostics
  std::vector<SensorObservation> observations;
};

/// Posterior over the 2S unknown coordinates: N(0.5, I) prior per coordinate
/// plus the detection/distance likelihood over all sensor-sensor and
/// sensor-base pairs.
class SensorNetworkTarget final : public TargetDensity {
 public:
  explicit SensorNetworkTarget(SensorDataset data) : data_(std::move(data)) {
    if (data_.n_unknown < 1)
      throw ArgumentError("SensorNetworkTarget: need at least one unknown sensor");
  }

  Eigen::Index dim() const override { return 2 * data_.n_unknown; }

  double log_density(const Vector& x) const override {
    if (x.size() != dim())
      throw ArgumentError("SensorNetworkTarget: dimension mismatch");
    double lp = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k)
      lp += gaussian_log_density_1d(x[k], 0.5, 1.0);
    const double two_r2 = 2.0 * data_.range * data_.range;
    for (const auto& obs : data_.observations) {
      const Eigen::Vector2d pi = node_location(x, obs.i);
      const Eigen::Vector2d pj = node_location(x, obs.j);
      const double d2 = (pi - pj).squaredNorm();
      if (obs.detected) {
        lp += -d2 / two_r2 +
              gaussian_log_density_1d(obs.distance, std::sqrt(d2), data_.noise_var);
      } else {
        // log(1 - exp(-d^2/(2R^2))); -inf at coincident nodes, by convention
        // returned rather than thrown.
        lp += log1m_exp_neg(d2 / two_r2);
        if (lp == kNegInf) return kNegInf;
      }
    }
    return lp;
  }

  const SensorDataset& dataset() const { return data_; }

 private:
  Eigen::Vector2d node_location(const Vector& x, int node) const {
    if (node < data_.n_unknown)
      return Eigen::Vector2d(x[2 * node], x[2 * node + 1]);
    const int b = node - data_.n_unknown;
    return data_.base_locations.row(b).transpose();
  }

  SensorDataset data_;
};

/// Draws a dataset: true unknown locations from the N(0.5, I) prior, base
/// locations uniform in the unit square, then Z and Y from the observation
/// model. Deterministic given the seed.
inline SensorDataset generate_sensor_dataset(int n_unknown, int n_base,
                                             double range, double noise_var,
                                             std::uint64_t seed) {
  if (n_unknown < 1) throw ArgumentError("generate_sensor_dataset: S must be >= 1");
  if (n_base < 0) throw ArgumentError("generate_sensor_dataset: B must be >= 0");
  SensorDataset data;
  data.n_unknown = n_unknown;
  data.n_base = n_base;
  data.range = range;
  data.noise_var = noise_var;
  data.seed = seed;

  Rng rng = substream(seed, 0, 0, StreamId::kInit);
  std::normal_distribution<double> prior(0.5, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  data.true_locations.resize(n_unknown, 2);
  for (int s = 0; s < n_unknown; ++s) {
    data.true_locations(s, 0) = prior(rng);
    data.true_locations(s, 1) = prior(rng);
  }
  data.base_locations.resize(n_base, 2);
  for (int b = 0; b < n_base; ++b) {
    data.base_locations(b, 0) = unit(rng);
    data.base_locations(b, 1) = unit(rng);
  }

  auto location = [&](int node) -> Eigen::Vector2d {
    if (node < n_unknown) return data.true_locations.row(node).transpose();
    return data.base_locations.row(node - n_unknown).transpose();
  };

  const int total = n_unknown + n_base;
  std::normal_distribution<double> meas(0.0, std::sqrt(noise_var));
  for (int i = 0; i < total; ++i) {
    for (int j = i + 1; j < total; ++j) {
      if (i >= n_unknown && j >= n_unknown) continue;  // base-base pairs unobserved
      const double d = (location(i) - location(j)).norm();
      const double p_detect = std::exp(-d * d / (2.0 * range * range));
      SensorObservation obs;
      obs.i = i;
      obs.j = j;
      obs.detected = (unit(rng) < p_detect) ? 1 : 0;
      obs.distance = obs.detected ? d + (noise_var > 0.0 ? meas(rng) : 0.0) : 0.0;
      data.observations.push_back(obs);
    }
  }
  return data;
}

inline void save_sensor_dataset(const SensorDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("save_sensor_dataset: cannot open " + path);
  out.precision(17);
  out << "ksmc-sensor-dataset v1\n";
  out << "S " << data.n_unknown << "\n";
  out << "B " << data.n_base << "\n";
  out << "R " << data.range << "\n";
  out << "sigma2 " << data.noise_var << "\n";
  out << "seed " << data.seed << "\n";
  for (int b = 0; b < data.n_base; ++b)
    out << "base " << data.base_locations(b, 0) << " " << data.base_locations(b, 1) << "\n";
  for (int s = 0; s < data.n_unknown; ++s)
    out << "true " << data.true_locations(s, 0) << " " << data.true_locations(s, 1) << "\n";
  for (const auto& obs : data.observations)
    out << "obs " << obs.i << " " << obs.j << " " << obs.detected << " "
        << obs.distance << "\n";
}

inline SensorDataset load_sensor_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("load_sensor_dataset: cannot open " + path);
  std::string header;
  std::getline(in, header);
  if (header != "ksmc-sensor-dataset v1")
    throw ArgumentError("load_sensor_dataset: unrecognized header in " + path);
  SensorDataset data;
  std::vector<Eigen::Vector2d> bases, trues;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "S") ss >> data.n_unknown;
    else if (key == "B") ss >> data.n_base;
    else if (key == "R") ss >> data.range;
    else if (key == "sigma2") ss >> data.noise_var;
    else if (key == "seed") ss >> data.seed;
    else if (key == "base") {
      Eigen::Vector2d p;
      ss >> p[0] >> p[1];
      bases.push_back(p);
    } else if (key == "true") {
      Eigen::Vector2d p;
      ss >> p[0] >> p[1];
      trues.push_back(p);
    } else if (key == "obs") {
      SensorObservation obs;
      ss >> obs.i >> obs.j >> obs.detected >> obs.distance;
      data.observations.push_back(obs);
    } else {
      throw ArgumentError("load_sensor_dataset: unknown record '" + key + "'");
    }
    if (ss.fail())
      throw ArgumentError("load_sensor_dataset: malformed record '" + line + "'");
  }
  data.base_locations.resize(static_cast<Eigen::Index>(bases.size()), 2);
  for (std::size_t b = 0; b < bases.size(); ++b)
    data.base_locations.row(static_cast<Eigen::Index>(b)) = bases[b].transpose();
  data.true_locations.resize(static_cast<Eigen::Index>(trues.size()), 2);
  for (std::size_t s = 0; s < trues.size(); ++s)
    data.true_locations.row(static_cast<Eigen::Index>(s)) = trues[s].transpose();
  if (data.base_locations.rows() != data.n_base ||
      data.true_locations.rows() != data.n_unknown)
    throw ArgumentError("load_sensor_dataset: location counts disagree with S/B");
  return data;
}

}  // namespace ksmc
