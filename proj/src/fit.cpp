#include "isds/fit.hpp"

#include "isds/parallel.hpp"
#include "isds/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace isds {

using nlohmann::json;

std::string FitReport::to_json_string() const {
  json j;
  j["restart_traces"] = restart_traces;
  j["restart_decay_epochs"] = restart_decay_epochs;
  j["best_restart"] = best_restart;
  j["final_objective"] = final_objective;
  j["diverged"] = diverged;
  j["message"] = message;
  return j.dump(2);
}

double msm_mean_log_likelihood(const MsmModel& model, const std::vector<Trajectory>& data,
                               int workers) {
  std::vector<double> ll(data.size());
  parallel_for(static_cast<int>(data.size()), workers,
               [&](int i) { ll[i] = msm_log_likelihood(model, data[i]); });
  return std::accumulate(ll.begin(), ll.end(), 0.0) / static_cast<double>(data.size());
}

MsmModel msm_fit_init(const MsmModel& architecture, const std::vector<Trajectory>& data,
                      std::uint64_t seed) {
  MsmModel model = architecture;
  const int m = model.m;
  const int M = model.M;
  Rng rng(derive_seed(seed, "msm-init"));

  // data scale for covariance starting points
  double var_acc = 0.0;
  long var_n = 0;
  for (const auto& traj : data) {
    for (int t = M; t < traj.length(); ++t)
      for (int i = 0; i < m; ++i) {
        const double d = traj.z(t, i) - traj.z(t - 1, i);
        var_acc += d * d;
        ++var_n;
      }
  }
  const double step_var = std::max(1e-4, var_acc / std::max<long>(1, var_n));

  for (int k = 0; k < model.K; ++k) {
    Transition& tr = model.transitions[k];
    const auto& dims = tr.mean_net.net.dims;
    tr.mean_net.net = mlp_init(dims, tr.mean_net.net.activation,
                               derive_seed(seed, "msm-init-net", k),
                               tr.mean_net.net.leaky_slope);
    tr.mean_net.apply_masks();
    tr.cov_raw = Vec::Constant(m, softplus_inv(std::max(step_var, 2.0 * kVarFloor) - kVarFloor));
    tr.cov_scale_raw = softplus_inv(std::max(step_var, 2.0 * kVarFloor) - kVarFloor);
  }

  // initial components from random data windows
  for (int a = 0; a < model.K0; ++a) {
    const Trajectory& traj = data[rng.uniform_int(static_cast<int>(data.size()))];
    const int t0 = rng.uniform_int(traj.length() - M + 1);
    Vec mean(m * M);
    for (int t = 0; t < M; ++t) mean.segment(t * m, m) = traj.z.row(t0 + t).transpose();
    model.init[a].mean = mean;
    model.init[a].var_raw =
        Vec::Constant(m * M, softplus_inv(std::max(4.0 * step_var, 1e-2) - kVarFloor));
  }

  // mildly sticky switch prior
  model.pi_logits = Vec::Zero(model.K0);
  const double self_p = 0.8;
  const double off_p = model.K > 1 ? (1.0 - self_p) / (model.K - 1) : 1.0;
  for (int i = 0; i < model.K; ++i)
    for (int j = 0; j < model.K; ++j)
      model.q_logits(i, j) = std::log(model.K > 1 ? (i == j ? self_p : off_p) : 1.0);
  return model;
}

namespace {

struct BatchResult {
  Vec grad_sum;
  double loglik_sum = 0.0;
  bool ok = true;
};

BatchResult batch_gradient(const MsmModel& model, const std::vector<Trajectory>& data,
                           const std::vector<int>& idx, int lo, int hi,
                           const ParamGroups& groups, int workers) {
  const int count = hi - lo;
  std::vector<Vec> grads(count);
  std::vector<double> lls(count);
  std::vector<char> oks(count, 1);
  parallel_for(count, workers, [&](int i) {
    try {
      const MsmGradient g = msm_prior_gradient(model, data[idx[lo + i]], /*want_traj_grad=*/false);
      grads[i] = msm_pack_gradient(model, g, groups);
      lls[i] = g.log_likelihood;
    } catch (const std::exception&) {
      oks[i] = 0;
    }
  });
  BatchResult out;
  out.grad_sum = Vec::Zero(msm_param_count(model, groups));
  for (int i = 0; i < count; ++i) {
    if (!oks[i]) {
      out.ok = false;
      return out;
    }
    out.grad_sum += grads[i];
    out.loglik_sum += lls[i];
  }
  if (!out.grad_sum.allFinite() || !std::isfinite(out.loglik_sum)) out.ok = false;
  return out;
}

}  // namespace

FitReport fit_msm(MsmModel& model, const std::vector<Trajectory>& data,
                  const OptimizerConfig& opt) {
  if (data.empty()) throw std::invalid_argument("fit_msm: empty dataset");
  model.validate(data.front().dim());

  const ParamGroups groups = ParamGroups::all();
  const int N = static_cast<int>(data.size());
  const int batch = std::max(1, std::min(opt.batch_size, N));

  FitReport report;
  MsmModel best;
  double best_obj = -std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < std::max(1, opt.restarts); ++restart) {
    MsmModel work = (restart == 0)
                        ? model
                        : msm_fit_init(model, data, derive_seed(opt.seed, "restart", restart));
    Vec params = msm_pack_params(work, groups);
    Adam adam(params.size());
    double lr = opt.lr;
    int decays = 0;
    int last_event_epoch = 0;
    bool diverged = false;

    std::vector<double> trace;
    std::vector<int> decay_epochs;
    Rng shuffle_rng(derive_seed(opt.seed, "shuffle", restart));
    std::vector<int> idx(N);
    std::iota(idx.begin(), idx.end(), 0);

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
      for (int i = N - 1; i > 0; --i) std::swap(idx[i], idx[shuffle_rng.uniform_int(i + 1)]);
      double epoch_ll = 0.0;
      for (int lo = 0; lo < N; lo += batch) {
        const int hi = std::min(N, lo + batch);
        BatchResult res = batch_gradient(work, data, idx, lo, hi, groups, opt.workers);
        if (!res.ok) {
          diverged = true;
          break;
        }
        const double inv = 1.0 / (hi - lo);
        Vec g = res.grad_sum * inv;
        adam.ascend(params, g, lr);
        msm_unpack_params(work, groups, params);
        epoch_ll += res.loglik_sum;
      }
      if (diverged) break;
      trace.push_back(epoch_ll / N);
      if (opt.verbose)
        std::printf("[fit_msm] restart %d epoch %d mean_loglik %.6f\n", restart, epoch,
                    trace.back());

      const int W = opt.plateau_window;
      if (static_cast<int>(trace.size()) - last_event_epoch > W) {
        const double prev = trace[trace.size() - 1 - W];
        const double gain = trace.back() - prev;
        if (gain < opt.plateau_rel_tol * std::max(1.0, std::abs(prev))) {
          last_event_epoch = static_cast<int>(trace.size());
          if (decays < opt.max_decays) {
            lr *= opt.lr_decay;
            ++decays;
            decay_epochs.push_back(static_cast<int>(trace.size()) - 1);
          } else {
            break;  // third plateau stops training
          }
        }
      }
    }

    report.restart_traces.push_back(trace);
    report.restart_decay_epochs.push_back(decay_epochs);
    if (diverged) {
      report.message += "restart " + std::to_string(restart) + " diverged; ";
      continue;
    }
    const double obj = trace.empty() ? msm_mean_log_likelihood(work, data, opt.workers)
                                     : trace.back();
    if (obj > best_obj) {
      best_obj = obj;
      best = work;
      report.best_restart = restart;
    }
  }

  if (report.best_restart < 0) {
    report.diverged = true;
    throw NumericError("fit_msm: all restarts diverged: " + report.message);
  }
  report.final_objective = best_obj;
  model = best;
  return report;
}

}  // namespace isds
