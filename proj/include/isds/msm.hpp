#pragma once

#include "isds/common.hpp"
#include "isds/nnet.hpp"

#include <optional>
#include <string>
#include <vector>

namespace isds {

// How the per-regime diagonal transition covariance is produced.
//   Constant:         one diagonal shared by all regimes.
//   Heterogeneous:    one diagonal per regime.
//   HistoryDependent: diag = C_k * sigmoid(mean output), elementwise.
enum class CovarianceMode { Constant, Heterogeneous, HistoryDependent };

const char* covariance_mode_name(CovarianceMode mode);
CovarianceMode covariance_mode_from_name(const std::string& name);

// Hard switch used by the overlap ablation generators: inside the history-norm
// band [lo, hi] every regime evaluates the shared net instead of its own.
struct OverlapBlend {
  Mlp shared_net;
  double lo = 3.0;
  double hi = 5.0;
};

struct InitialComponent {
  Vec mean;     // length m*M, over (z_1, ..., z_M) in time order
  Vec var_raw;  // softplus(var_raw) + kVarFloor is the diagonal covariance
};

struct Transition {
  MaskedMlp mean_net;          // R^{mM} -> R^m, history ordered most recent lag first
  Vec cov_raw;                 // length m; used in Constant/Heterogeneous modes
  double cov_scale_raw = 0.0;  // used in HistoryDependent mode
  std::optional<OverlapBlend> overlap;
};

// Multi-lag Markov switching model over continuous trajectories.
//
// Regime chain: s at the initial block has K0 labels with distribution pi;
// chain states afterwards have K labels with row-stochastic transition Q.
// With K0 == K the initial label feeds Q directly (shared labeling); with
// K0 != K the first chain state is drawn uniformly, since the paper-style
// bookkeeping only covers the shared-label case.
struct MsmModel {
  int K = 1;
  int K0 = 1;
  int M = 1;
  int m = 1;

  Vec pi_logits;  // K0
  Mat q_logits;   // K x K
  std::vector<InitialComponent> init;  // K0
  std::vector<Transition> transitions;  // K
  CovarianceMode cov_mode = CovarianceMode::Heterogeneous;

  Vec pi() const { return softmax(pi_logits); }
  Mat q() const;

  // Effective raw covariance parameters for regime k (handles Constant tying).
  const Vec& cov_raw_for(int k) const {
    return cov_mode == CovarianceMode::Constant ? transitions[0].cov_raw
                                                : transitions[k].cov_raw;
  }

  // Mean of the regime-k transition at a stacked history (most recent first).
  Vec mean_eval(int k, const Vec& history) const;
  // Diagonal covariance of the regime-k transition; `mean_out` must be the
  // matching mean_eval output when mode is HistoryDependent.
  Vec cov_eval(int k, const Vec& mean_out) const;
  double cov_scale(int k) const { return softplus(transitions[k].cov_scale_raw) + kVarFloor; }
  Vec init_var(int a) const;

  bool has_overlap() const;
  void validate(int traj_dim = -1) const;
};

// T x m trajectory of continuous states; row t is z_{t+1} in 1-based notation.
struct Trajectory {
  Mat z;

  int length() const { return static_cast<int>(z.rows()); }
  int dim() const { return static_cast<int>(z.cols()); }
};

// Stacked history (z_{t-1}, ..., z_{t-M}) for the transition into row t.
Vec history_at(const Mat& z, int t, int M);

// Regime posteriors from forward-backward.
// gamma rows cover times M..T (1-based); the first row is the initial-block
// posterior over K0 labels, later rows are over K labels; the row width is
// max(K, K0) with unused tail entries zero.
// xi rows cover times M+2..T: xi(t)(k, k') = p(s_t = k, s_{t-1} = k' | z).
// xi_first covers the first chain step: (k, a) = p(s_{M+1} = k, s_M = a | z).
struct PosteriorMarginals {
  Mat gamma;                // (T-M+1) x max(K, K0)
  std::vector<Mat> xi;      // (T-M-1) entries of K x K
  Mat xi_first;             // K x K0
  double log_likelihood = 0.0;
};

double msm_log_likelihood(const MsmModel& model, const Trajectory& traj);
PosteriorMarginals msm_forward_backward(const MsmModel& model, const Trajectory& traj);

// Exact log-sum over all K0 * K^(T-M) regime paths. Guarded test oracle.
double brute_force_log_likelihood(const MsmModel& model, const Trajectory& traj);
// Brute-force regime posteriors from the same enumeration.
PosteriorMarginals brute_force_posteriors(const MsmModel& model, const Trajectory& traj);

// Gradient of msm_log_likelihood with respect to every parameter group, plus
// the gradient with respect to the trajectory itself (needed when the
// trajectory is a reparameterized sample).
struct MsmGradient {
  Vec d_pi_logits;
  Mat d_q_logits;
  std::vector<Vec> d_init_mean;
  std::vector<Vec> d_init_var_raw;
  std::vector<MlpGradients> d_net;
  std::vector<Vec> d_cov_raw;        // slot 0 only in Constant mode
  Vec d_cov_scale_raw;               // length K; HistoryDependent mode
  Mat d_traj;                        // T x m
  double log_likelihood = 0.0;
};

MsmGradient msm_gradient_zero(const MsmModel& model, int T);
MsmGradient msm_prior_gradient(const MsmModel& model, const Trajectory& traj,
                               bool want_traj_grad = true);

// Probe settings for the assumption validators: sample `count` histories from
// N(0, stddev^2 I).
struct ProbeSpec {
  int count = 10000;
  double stddev = 1.0;
  std::uint64_t seed = 0;
};

struct AssumptionReport {
  double m1_intersection_fraction = 0.0;
  bool m1_fail = false;
  double s2_satisfied_fraction = 0.0;
  bool s2_warn = false;
  bool m2_analytic = true;
  double m3_max_masked_deviation = 0.0;
  bool m3_checked = false;
  std::vector<std::string> notes;

  bool any_fail() const { return m1_fail || !m2_analytic; }
};

AssumptionReport validate_assumptions(const MsmModel& model, const ProbeSpec& probe);

// Pushforward of the model under z -> A z + b with A = diag(d) * P (P a
// permutation). Exact within the diagonal-covariance family; requires
// Constant or Heterogeneous covariance mode and mask-free dense nets.
MsmModel affine_transform_model(const MsmModel& model, const Vec& scale,
                                const std::vector<int>& perm, const Vec& shift);
Mat affine_transform_trajectory(const Mat& z, const Vec& scale,
                                const std::vector<int>& perm, const Vec& shift);

// Permutes regimes (and initial components when K0 == K) by sigma, where
// sigma[new_label] = old_label. Leaves the likelihood invariant.
MsmModel permute_regimes(const MsmModel& model, const std::vector<int>& sigma);

}  // namespace isds
