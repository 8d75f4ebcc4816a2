#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ksmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Invalid argument to a library call (dimension mismatch, bad range).
class ArgumentError : public std::invalid_argument {
 public:
  explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Numerical failure (singular system, Cholesky breakdown, dead particles).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// log(sum_i exp(v_i)), stable; returns -inf for an all -inf (or empty) input.
inline double log_sum_exp(const Vector& v) {
  if (v.size() == 0) return kNegInf;
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf (+inf never stored)
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::exp(v[i] - m);
  return m + std::log(acc);
}

/// log((1/n) sum_i exp(v_i))
inline double log_mean_exp(const Vector& v) {
  return log_sum_exp(v) - std::log(static_cast<double>(v.size()));
}

/// log(1 - exp(-a)) for a > 0 without cancellation.
inline double log1m_exp_neg(double a) {
  if (a <= 0.0) return kNegInf;
  constexpr double ln2 = 0.6931471805599453;
  return (a > ln2) ? std::log1p(-std::exp(-a)) : std::log(-std::expm1(-a));
}

/// Run fn(begin, end) over [0, n) split across up to n_threads workers.
/// With n_threads <= 1 the call runs inline on the calling thread.
template <class Fn>
void parallel_for(std::size_t n, int n_threads, Fn&& fn) {
  if (n == 0) return;
  if (n_threads <= 1 || n == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(n_threads, n);
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ksmc
