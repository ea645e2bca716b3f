#pragma once

#include "isds/msm.hpp"
#include "isds/optim.hpp"

#include <string>
#include <vector>

namespace isds {

struct OptimizerConfig {
  int epochs = 100;
  int batch_size = 100;
  double lr = 7e-3;
  int restarts = 1;
  int workers = 1;
  std::uint64_t seed = 0;

  // learning-rate decay when the objective plateaus: relative improvement
  // below plateau_rel_tol over plateau_window epochs halves the rate, up to
  // max_decays times; the next plateau after that stops training.
  double plateau_rel_tol = 1e-4;
  int plateau_window = 10;
  double lr_decay = 0.5;
  int max_decays = 2;

  bool verbose = false;  // stream per-epoch objectives to stdout
};

struct FitReport {
  std::vector<std::vector<double>> restart_traces;  // per-epoch mean log-likelihood
  std::vector<std::vector<int>> restart_decay_epochs;
  int best_restart = -1;
  double final_objective = 0.0;
  bool diverged = false;
  std::string message;

  std::string to_json_string() const;
};

// Mini-batch maximum-likelihood fitting of an MSM with the posterior-weighted
// gradient decomposition. The passed model provides the architecture and the
// restart-0 starting point; later restarts re-randomize nets and initial
// components from the data. On return the model holds the best restart.
FitReport fit_msm(MsmModel& model, const std::vector<Trajectory>& data,
                  const OptimizerConfig& opt);

// Mean per-sequence log-likelihood of a dataset.
double msm_mean_log_likelihood(const MsmModel& model, const std::vector<Trajectory>& data,
                               int workers = 1);

// Fresh fitting start: Glorot nets, initial components from random data
// windows, covariances from data scale, mildly sticky Q.
MsmModel msm_fit_init(const MsmModel& architecture, const std::vector<Trajectory>& data,
                      std::uint64_t seed);

}  // namespace isds
