#pragma once

#include "isds/fit.hpp"
#include "isds/graphs.hpp"
#include "isds/msm.hpp"
#include "isds/optim.hpp"
#include "isds/rng.hpp"

#include <string>
#include <vector>

namespace isds {

// Switching dynamical system: MSM prior over latents, piecewise-linear decoder
// with diagonal observation noise, and a per-timestep Gaussian encoder.
struct SdsModel {
  MsmModel prior;
  Mlp decoder;         // R^m -> R^n, LeakyRelu
  Vec obs_noise_raw;   // n; softplus + floor gives the noise variance
  Mlp encoder_mean;    // R^n -> R^m
  Mlp encoder_logvar;  // R^n -> R^m

  int n() const { return decoder.output_dim(); }
  Vec obs_noise() const;
  void validate() const;
};

// (mean, variance) of q(z_t | x_t); variance = exp(logvar net output).
std::pair<Vec, Vec> encode(const SdsModel& model, const Vec& x_t);

Vec reparameterized_sample(const Vec& mean, const Vec& var_diag, const Vec& noise);

struct ElboEstimate {
  double elbo = 0.0;        // recon_term + entropy_term + prior_term (reg excluded)
  double recon_term = 0.0;  // E log p(x | z)
  double entropy_term = 0.0;  // -E log q(z | x)
  double prior_term = 0.0;  // E log p(z)
  double reg_term = 0.0;    // -eta * mean ell_1 of transition Jacobians
  int n_mc = 1;
};

struct SdsGradient {
  MsmGradient prior;
  MlpGradients d_decoder;
  Vec d_obs_noise_raw;
  MlpGradients d_enc_mean;
  MlpGradients d_enc_logvar;
};

SdsGradient sds_gradient_zero(const SdsModel& model, int T);

// Stage-dependent parameter packing.
struct SdsGroups {
  ParamGroups prior = ParamGroups::all();
  bool decoder = true;
  bool obs_noise = true;
  bool encoder = true;
};

Eigen::Index sds_param_count(const SdsModel& model, const SdsGroups& groups);
Vec sds_pack_params(const SdsModel& model, const SdsGroups& groups);
void sds_unpack_params(SdsModel& model, const SdsGroups& groups, const Vec& flat);
Vec sds_pack_gradient(const SdsModel& model, const SdsGradient& grad, const SdsGroups& groups);

// Reparameterized single-or-multi-sample ELBO with exact discrete-state
// marginalization through the prior. When `grad` is non-null all parameter
// groups are filled. The Jacobian penalty is evaluated at `reg_probe` history
// points taken from the sampled latents (treated as constants) unless
// `fixed_probe` supplies explicit rows.
ElboEstimate elbo_and_gradients(const SdsModel& model, const Mat& x, int n_mc, double eta,
                                Rng& rng, SdsGradient* grad, int reg_probe = 16,
                                const Mat* fixed_probe = nullptr);

struct PcaResult {
  Mat components;           // dims x n, orthonormal rows
  Vec mean;                 // n
  Vec explained_variance;   // dims, nonincreasing
  int requested_dims = 0;
  bool reduced = false;     // degenerate covariance forced fewer dims
};

PcaResult pca_fit(const std::vector<Vec>& data, int dims);
PcaResult pca_fit(const Mat& rows, int dims);

// Four-stage training schedule: iMSM initialisation on PCA projections,
// encoder/decoder pre-training, warmup with frozen switch parameters, then
// joint fine-tuning.
struct TrainSchedule {
  int init_msm_epochs = 50;
  int pretrain_epochs = 40;
  int warmup_epochs = 10;
  int final_epochs = 700;

  double msm_lr = 7e-3;
  double lr = 5e-4;
  double lr_decay = 0.8;
  int lr_decay_every = 200;

  int pca_dims = 0;  // 0 means the prior latent dimension
  int restarts = 5;
  int msm_restarts = 3;
  double eta = 0.05;
  int n_mc = 1;
  int batch_size = 100;
  int reg_probe = 16;
  int workers = 1;
  std::uint64_t seed = 0;
  bool verbose = false;

  void validate() const;
};

struct StageTrace {
  std::string name;
  std::vector<double> objective;  // per-epoch mean ELBO (or log-likelihood)
};

struct SdsFitReport {
  std::vector<std::vector<StageTrace>> restart_stages;
  int best_restart = -1;
  double final_objective = 0.0;
  bool diverged = false;
  std::string message;

  std::string to_json_string() const;
};

// Trains the model in place; the passed model supplies the architecture.
SdsFitReport train_sds(SdsModel& model, const std::vector<Mat>& xs, const TrainSchedule& schedule);

// One optimization stage over the given parameter groups (the building block
// of train_sds, exposed for targeted tests and custom schedules).
StageTrace sds_train_stage(SdsModel& model, const std::vector<Mat>& xs, const SdsGroups& groups,
                           int epochs, double lr, const std::string& name,
                           const TrainSchedule& cfg, std::uint64_t stage_seed);

// Mean ELBO over a dataset with a fixed evaluation seed.
double sds_mean_elbo(const SdsModel& model, const std::vector<Mat>& xs, int n_mc,
                     std::uint64_t seed, int workers = 1);

// Thresholded mean absolute transition Jacobians, partitioned by the argmax
// regime posterior of the probe trajectories.
RegimeGraphSet extract_regime_graphs(const MsmModel& model,
                                     const std::vector<Trajectory>& probe, double tau);

// PCA-based initialization used by stage 1: the encoder mean starts as the
// PCA projection and the decoder as its inverse map, built exactly from the
// LeakyRelu identity LR(v) - LR(-v) = (1 + slope) v.
void init_autoencoder_from_pca(SdsModel& model, const PcaResult& pca, std::uint64_t seed);

}  // namespace isds
