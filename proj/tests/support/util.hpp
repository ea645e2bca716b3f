#pragma once

#include "isds/msm.hpp"
#include "isds/rng.hpp"

#include <functional>
#include <vector>

namespace isds::test {

// Central finite difference of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x0, double h = 1e-5) {
  return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

inline double rel_err(double got, double want) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-8});
  return std::abs(got - want) / denom;
}

// Random dense MSM with finite logits and softplus covariances, suitable for
// gradient and oracle checks.
inline MsmModel random_msm(int K, int K0, int M, int m, std::uint64_t seed,
                           CovarianceMode mode = CovarianceMode::Heterogeneous,
                           Activation act = Activation::Cosine, int hidden = 4) {
  Rng rng(derive_seed(seed, "random-msm"));
  MsmModel model;
  model.K = K;
  model.K0 = K0;
  model.M = M;
  model.m = m;
  model.cov_mode = mode;
  model.pi_logits = Vec::Zero(K0);
  for (int a = 0; a < K0; ++a) model.pi_logits[a] = 0.5 * rng.normal();
  model.q_logits = Mat::Zero(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) model.q_logits(i, j) = 0.5 * rng.normal();
  for (int a = 0; a < K0; ++a) {
    InitialComponent c;
    c.mean = Vec::Zero(m * M);
    c.var_raw = Vec::Zero(m * M);
    for (int i = 0; i < m * M; ++i) {
      c.mean[i] = rng.normal();
      c.var_raw[i] = softplus_inv(rng.uniform(0.3, 1.2));
    }
    model.init.push_back(std::move(c));
  }
  for (int k = 0; k < K; ++k) {
    Transition tr;
    tr.mean_net.net = mlp_init({m * M, hidden, m}, act, derive_seed(seed, "net", k));
    Rng brng(derive_seed(seed, "bias", k));
    for (auto& b : tr.mean_net.net.biases)
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.3 * brng.normal();
    tr.cov_raw = Vec::Zero(m);
    for (int i = 0; i < m; ++i) tr.cov_raw[i] = softplus_inv(rng.uniform(0.2, 1.0));
    tr.cov_scale_raw = softplus_inv(rng.uniform(0.1, 0.4));
    model.transitions.push_back(std::move(tr));
  }
  return model;
}

inline Trajectory random_trajectory(int T, int m, std::uint64_t seed, double scale = 1.0) {
  Rng rng(derive_seed(seed, "traj"));
  Trajectory traj;
  traj.z.resize(T, m);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < m; ++i) traj.z(t, i) = scale * rng.normal();
  return traj;
}

}  // namespace isds::test
