#pragma once

#include "isds/fit.hpp"
#include "isds/sds.hpp"

#include <string>
#include <vector>

namespace isds {

struct GridCell {
  int K = 0;
  int M = 0;
  std::uint64_t seed = 0;
  double objective = 0.0;  // held-out mean log-likelihood (MSM) or ELBO (SDS)
  double runtime_sec = 0.0;
  bool ok = false;
  std::string message;
};

struct SelectionGrid {
  std::vector<int> k_values;
  std::vector<int> m_values;
  std::vector<GridCell> cells;  // row-major over (k, m), one block per seed

  const GridCell* find(int K, int M, std::uint64_t seed) const;
  // objective curve along K at fixed M (or along M at fixed K) for one seed
  std::vector<double> k_curve(int M, std::uint64_t seed) const;
  std::vector<double> m_curve(int K, std::uint64_t seed) const;
  std::string to_csv() const;
};

struct MsmSweepConfig {
  std::vector<int> k_values;
  std::vector<int> m_values;
  std::vector<std::uint64_t> seeds = {0};
  int hidden = 16;
  CovarianceMode cov_mode = CovarianceMode::Heterogeneous;
  OptimizerConfig opt;
  int workers = 1;
};

SelectionGrid sweep_msm(const std::vector<Trajectory>& train,
                        const std::vector<Trajectory>& heldout, const MsmSweepConfig& cfg);

struct SdsSweepConfig {
  std::vector<int> k_values;
  std::vector<int> m_values;
  std::vector<std::uint64_t> seeds = {0};
  int latent_dim = 3;
  int transition_hidden = 16;
  int autoencoder_hidden = 64;
  CovarianceMode cov_mode = CovarianceMode::Heterogeneous;
  TrainSchedule schedule;
  int eval_n_mc = 4;
};

SelectionGrid sweep_sds(const std::vector<Mat>& train, const std::vector<Mat>& heldout,
                        const SdsSweepConfig& cfg);

struct ElbowChoice {
  int index = 0;
  bool flagged = false;  // flat or otherwise degenerate curve
};

// First index whose range-normalized forward gain falls below rho; invariant
// to affine rescaling of the curve.
ElbowChoice elbow_select(const std::vector<double>& curve, double rho = 0.05);

// Builds a fresh MSM architecture for a sweep cell.
MsmModel make_msm_architecture(int K, int M, int m, int hidden, CovarianceMode mode);

}  // namespace isds
