#pragma once

#include "isds/graphs.hpp"
#include "isds/msm.hpp"

#include <string>
#include <vector>

namespace isds {

// Least-squares affine map true ~= A * est + b with the DP decomposition
// A ~= diag(d) * P used for latent-variable alignment.
struct AffineAlignment {
  Mat A;
  Vec b;
  Vec d;                  // diagonal of D
  std::vector<int> perm;  // perm[i] = source index; (P x)_i = x_{perm[i]}

  static AffineAlignment identity(int m);
  Vec apply(const Vec& est) const { return A * est + b; }
  Vec apply_inverse(const Vec& true_side) const;
};

struct RegimeF1Result {
  double f1 = 0.0;
  std::vector<int> sigma;  // sigma[true_k] = matched estimated label, -1 if none
  bool padded = false;     // estimated side had fewer labels than the truth
};

// Macro-F1 after optimal label assignment. Labels are per (sequence, step).
RegimeF1Result regime_f1(const std::vector<std::vector<int>>& true_labels,
                         const std::vector<std::vector<int>>& pred_labels, int k_true,
                         int k_pred);

// Argmax decoding of posterior marginals into chain labels (row 0 included).
std::vector<int> gamma_argmax_labels(const Mat& gamma, int K);

enum class MccMode { Weak, Strong };

// Mean absolute correlation between true and estimated latents, pooled over
// rows. Weak fits an affine map first; strong matches dimensions by optimal
// assignment of |correlation|.
double mcc(const Mat& true_z, const Mat& est_z, MccMode mode);

AffineAlignment fit_affine_alignment(const Mat& true_z, const Mat& est_z);

// Per-regime probe inputs in true latent coordinates (rows are stacked
// histories of length m*M).
struct RegimePartition {
  std::vector<Mat> histories;  // one matrix per true regime
};

// Histories of held-out trajectories bucketed by the argmax regime posterior
// under `model`.
RegimePartition partition_histories(const MsmModel& model, const std::vector<Trajectory>& probe);

struct MeanFunctionMetrics {
  double l2 = 0.0;
  double r2 = 0.0;
  std::vector<bool> regime_used;
};

// Affine-aligned squared L2 / R^2 between mean functions, with estimated-side
// inputs mapped through the inverse alignment. `sigma[true_k]` picks the
// estimated regime; pass AffineAlignment::identity for latent-space models.
MeanFunctionMetrics mean_function_l2(const MsmModel& true_model, const MsmModel& est_model,
                                     const AffineAlignment& alignment,
                                     const std::vector<int>& sigma,
                                     const RegimePartition& partition);

// R^2 maximized over all regime permutations (K <= 8), used when regime
// alignment by F1 is unreliable.
MeanFunctionMetrics mean_function_r2_best_perm(const MsmModel& true_model,
                                               const MsmModel& est_model,
                                               const AffineAlignment& alignment,
                                               const RegimePartition& partition,
                                               std::vector<int>* best_sigma = nullptr);

// Edge-set F1 between graphs after regime alignment sigma and node alignment
// perm (estimated adjacency conjugated by the permutation). Lags are pooled
// within a regime; the result is averaged over regimes.
double causal_f1(const RegimeGraphSet& true_graphs, const RegimeGraphSet& est_graphs,
                 const std::vector<int>& sigma, const std::vector<int>& perm);

struct MetricReport {
  double regime_f1 = 0.0;
  double weak_mcc = 0.0;
  double strong_mcc = 0.0;
  double causal_f1 = 0.0;
  double l2_err = 0.0;
  double r2 = 0.0;
  std::vector<int> sigma;
  AffineAlignment alignment;
  std::vector<std::string> flags;

  std::string to_json_string() const;
  static std::string csv_header();
  std::string csv_row(const std::string& tag, std::uint64_t seed) const;
};

}  // namespace isds
