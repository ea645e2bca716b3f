#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace isds {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Thrown on dimension mismatches between model and data.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when a computation produces or receives non-finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr double kPi = 3.14159265358979323846;
constexpr double kLog2Pi = 1.8378770664093454836;

// Variance floor applied to every softplus-parameterized variance.
constexpr double kVarFloor = 1e-6;

inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double softplus_inv(double y) {
  // inverse of softplus for y > 0
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double log_sum_exp(const double* v, int n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

inline double log_sum_exp(const Vec& v) { return log_sum_exp(v.data(), static_cast<int>(v.size())); }

inline double log_sum_exp(const std::vector<double>& v) {
  return log_sum_exp(v.data(), static_cast<int>(v.size()));
}

// log N(x; mu, diag(var)), all finite, var > 0
inline double log_gaussian_diag(const Vec& x, const Vec& mu, const Vec& var) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x[i] - mu[i];
    acc += -0.5 * (kLog2Pi + std::log(var[i]) + d * d / var[i]);
  }
  return acc;
}

inline Vec softmax(const Vec& logits) {
  const double mx = logits.maxCoeff();
  Vec e = (logits.array() - mx).exp();
  return e / e.sum();
}

// Pearson correlation of two equally sized samples; returns 0 when either
// side has (numerically) zero variance.
inline double pearson(const Eigen::Ref<const Vec>& a, const Eigen::Ref<const Vec>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = a.mean();
  const double mb = b.mean();
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const double denom = std::sqrt(saa * sbb);
  if (denom <= 1e-300 * n || denom == 0.0) return 0.0;
  return sab / denom;
}

}  // namespace isds
