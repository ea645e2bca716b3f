#include "isds/msm.hpp"

#include "isds/rng.hpp"

#include <algorithm>
#include <cmath>

namespace isds {

namespace {

constexpr double kTolEq = 1e-6;        // m1 equality tolerance
constexpr double kTolRatio = 1e-4;     // s2 ratio-distinctness tolerance
constexpr double kM1FailFraction = 1e-3;

Vec vec_softplus_floor(const Vec& raw) {
  Vec v(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) v[i] = softplus(raw[i]) + kVarFloor;
  return v;
}

// Densities shared by the likelihood, forward-backward and gradient paths.
struct DensityTable {
  Vec init_logp;   // K0
  Mat trans_logp;  // (T-M) x K, row i is the transition into z row M+i
};

DensityTable build_densities(const MsmModel& model, const Mat& z) {
  const int T = static_cast<int>(z.rows());
  const int M = model.M;
  DensityTable table;
  table.init_logp.resize(model.K0);

  Vec v0(model.m * M);
  for (int t = 0; t < M; ++t) v0.segment(t * model.m, model.m) = z.row(t).transpose();
  for (int a = 0; a < model.K0; ++a)
    table.init_logp[a] = log_gaussian_diag(v0, model.init[a].mean, model.init_var(a));

  table.trans_logp.resize(T - M, model.K);
  for (int t = M; t < T; ++t) {
    const Vec h = history_at(z, t, M);
    const Vec zt = z.row(t).transpose();
    for (int k = 0; k < model.K; ++k) {
      const Vec mean = model.mean_eval(k, h);
      const Vec var = model.cov_eval(k, mean);
      table.trans_logp(t - M, k) = log_gaussian_diag(zt, mean, var);
    }
  }
  return table;
}

// Kernel from initial labels to the first chain state: Q when labels are
// shared, uniform otherwise.
Mat initial_transition(const MsmModel& model) {
  if (model.K0 == model.K) return model.q();
  return Mat::Constant(model.K0, model.K, 1.0 / model.K);
}

struct Messages {
  Mat log_alpha;  // P x width
  Mat log_beta;   // P x width
  double loglik = 0.0;
};

// P = T - M + 1 chain positions; position 0 is the initial block.
Messages run_messages(const MsmModel& model, const DensityTable& table, bool want_beta) {
  const int K = model.K;
  const int K0 = model.K0;
  const int P = static_cast<int>(table.trans_logp.rows()) + 1;
  const int width = std::max(K, K0);

  const Vec pi = model.pi();
  const Mat Q = model.q();
  const Mat R = initial_transition(model);
  Mat logQ(K, K), logR(K0, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) logQ(i, j) = std::log(Q(i, j));
  for (int a = 0; a < K0; ++a)
    for (int j = 0; j < K; ++j) logR(a, j) = std::log(R(a, j));

  Messages msg;
  msg.log_alpha = Mat::Constant(P, width, -std::numeric_limits<double>::infinity());
  for (int a = 0; a < K0; ++a)
    msg.log_alpha(0, a) = std::log(pi[a]) + table.init_logp[a];

  std::vector<double> acc(width);
  for (int i = 1; i < P; ++i) {
    const int prev_states = (i == 1) ? K0 : K;
    const Mat& lt = (i == 1) ? logR : logQ;
    for (int k = 0; k < K; ++k) {
      for (int p = 0; p < prev_states; ++p) acc[p] = msg.log_alpha(i - 1, p) + lt(p, k);
      msg.log_alpha(i, k) = table.trans_logp(i - 1, k) + log_sum_exp(acc.data(), prev_states);
    }
  }
  {
    std::vector<double> fin(K);
    for (int k = 0; k < K; ++k) fin[k] = msg.log_alpha(P - 1, k);
    msg.loglik = log_sum_exp(fin.data(), P == 1 ? K0 : K);
  }
  if (!std::isfinite(msg.loglik))
    throw NumericError("msm: log-likelihood is not finite");

  if (want_beta) {
    msg.log_beta = Mat::Constant(P, width, -std::numeric_limits<double>::infinity());
    for (int k = 0; k < K; ++k) msg.log_beta(P - 1, k) = 0.0;
    for (int i = P - 2; i >= 1; --i) {
      for (int k = 0; k < K; ++k) {
        for (int kn = 0; kn < K; ++kn)
          acc[kn] = table.trans_logp(i, kn) + logQ(k, kn) + msg.log_beta(i + 1, kn);
        msg.log_beta(i, k) = log_sum_exp(acc.data(), K);
      }
    }
    for (int a = 0; a < K0; ++a) {
      for (int kn = 0; kn < K; ++kn)
        acc[kn] = table.trans_logp(0, kn) + logR(a, kn) + msg.log_beta(1, kn);
      msg.log_beta(0, a) = log_sum_exp(acc.data(), K);
    }
  }
  return msg;
}

void check_trajectory(const MsmModel& model, const Trajectory& traj) {
  if (traj.dim() != model.m)
    throw ShapeError("msm: trajectory dimension does not match the model");
  if (traj.length() <= model.M)
    throw ShapeError("msm: sequence too short, need T > M");
  if (!traj.z.allFinite()) throw NumericError("msm: trajectory has non-finite entries");
}

}  // namespace

const char* covariance_mode_name(CovarianceMode mode) {
  switch (mode) {
    case CovarianceMode::Constant: return "constant";
    case CovarianceMode::Heterogeneous: return "heterogeneous";
    case CovarianceMode::HistoryDependent: return "history_dependent";
  }
  return "?";
}

CovarianceMode covariance_mode_from_name(const std::string& name) {
  if (name == "constant") return CovarianceMode::Constant;
  if (name == "heterogeneous") return CovarianceMode::Heterogeneous;
  if (name == "history_dependent") return CovarianceMode::HistoryDependent;
  throw std::invalid_argument("unknown covariance mode: " + name);
}

Mat MsmModel::q() const {
  Mat out(K, K);
  for (int i = 0; i < K; ++i) out.row(i) = softmax(q_logits.row(i).transpose()).transpose();
  return out;
}

Vec MsmModel::mean_eval(int k, const Vec& history) const {
  const Transition& tr = transitions[k];
  if (tr.overlap) {
    const double nrm = history.norm();
    if (nrm >= tr.overlap->lo && nrm <= tr.overlap->hi)
      return mlp_forward(tr.overlap->shared_net, history);
  }
  return mlp_forward(tr.mean_net.net, history);
}

Vec MsmModel::cov_eval(int k, const Vec& mean_out) const {
  switch (cov_mode) {
    case CovarianceMode::Constant:
    case CovarianceMode::Heterogeneous:
      return vec_softplus_floor(cov_raw_for(k));
    case CovarianceMode::HistoryDependent: {
      const double c = cov_scale(k);
      Vec v(mean_out.size());
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = c * sigmoid(mean_out[i]);
      return v;
    }
  }
  return Vec();
}

Vec MsmModel::init_var(int a) const { return vec_softplus_floor(init[a].var_raw); }

bool MsmModel::has_overlap() const {
  for (const auto& tr : transitions)
    if (tr.overlap) return true;
  return false;
}

void MsmModel::validate(int traj_dim) const {
  if (K < 1 || K0 < 1 || M < 1 || m < 1) throw ShapeError("MsmModel: counts must be >= 1");
  if (pi_logits.size() != K0) throw ShapeError("MsmModel: pi size != K0");
  if (q_logits.rows() != K || q_logits.cols() != K) throw ShapeError("MsmModel: Q must be K x K");
  if (static_cast<int>(init.size()) != K0) throw ShapeError("MsmModel: init component count != K0");
  for (const auto& c : init) {
    if (c.mean.size() != m * M || c.var_raw.size() != m * M)
      throw ShapeError("MsmModel: initial component must live in R^{mM}");
    if (!c.mean.allFinite() || !c.var_raw.allFinite())
      throw NumericError("MsmModel: non-finite initial parameters");
  }
  if (static_cast<int>(transitions.size()) != K) throw ShapeError("MsmModel: transition count != K");
  for (const auto& tr : transitions) {
    const Mlp& net = tr.mean_net.net;
    if (net.input_dim() != m * M || net.output_dim() != m)
      throw ShapeError("MsmModel: transition net must map R^{mM} -> R^m");
    if (!activation_is_analytic(net.activation))
      throw std::invalid_argument("MsmModel: transition activation must be analytic");
    if (cov_mode != CovarianceMode::HistoryDependent && tr.cov_raw.size() != m)
      throw ShapeError("MsmModel: covariance diagonal must have length m");
  }
  if (!pi_logits.allFinite() || !q_logits.allFinite())
    throw NumericError("MsmModel: non-finite chain parameters");
  const Vec p = pi();
  if (std::abs(p.sum() - 1.0) > 1e-12) throw NumericError("MsmModel: pi does not sum to 1");
  const Mat Qm = q();
  for (int i = 0; i < K; ++i)
    if (std::abs(Qm.row(i).sum() - 1.0) > 1e-12)
      throw NumericError("MsmModel: Q row does not sum to 1");
  if (traj_dim >= 0 && traj_dim != m)
    throw ShapeError("MsmModel: data dimension does not match model");
}

Vec history_at(const Mat& z, int t, int M) {
  const int m = static_cast<int>(z.cols());
  Vec h(m * M);
  for (int lag = 1; lag <= M; ++lag) h.segment((lag - 1) * m, m) = z.row(t - lag).transpose();
  return h;
}

double msm_log_likelihood(const MsmModel& model, const Trajectory& traj) {
  check_trajectory(model, traj);
  const DensityTable table = build_densities(model, traj.z);
  return run_messages(model, table, /*want_beta=*/false).loglik;
}

PosteriorMarginals msm_forward_backward(const MsmModel& model, const Trajectory& traj) {
  check_trajectory(model, traj);
  const int T = traj.length();
  const int M = model.M;
  const int K = model.K;
  const int K0 = model.K0;
  const int P = T - M + 1;
  const int width = std::max(K, K0);

  const DensityTable table = build_densities(model, traj.z);
  const Messages msg = run_messages(model, table, /*want_beta=*/true);
  const Mat Q = model.q();
  const Mat R = initial_transition(model);

  PosteriorMarginals post;
  post.log_likelihood = msg.loglik;
  post.gamma = Mat::Zero(P, width);
  for (int i = 0; i < P; ++i) {
    const int states = (i == 0) ? K0 : K;
    for (int k = 0; k < states; ++k)
      post.gamma(i, k) = std::exp(msg.log_alpha(i, k) + msg.log_beta(i, k) - msg.loglik);
    const double s = post.gamma.row(i).sum();
    post.gamma.row(i) /= s;
  }

  post.xi_first = Mat::Zero(K, K0);
  for (int k = 0; k < K; ++k)
    for (int a = 0; a < K0; ++a) {
      const double lq = std::log(R(a, k));
      post.xi_first(k, a) = std::exp(msg.log_alpha(0, a) + lq + table.trans_logp(0, k) +
                                     msg.log_beta(1, k) - msg.loglik);
    }

  post.xi.clear();
  post.xi.reserve(std::max(0, P - 2));
  for (int i = 2; i < P; ++i) {
    Mat x(K, K);
    for (int k = 0; k < K; ++k)
      for (int kp = 0; kp < K; ++kp)
        x(k, kp) = std::exp(msg.log_alpha(i - 1, kp) + std::log(Q(kp, k)) +
                            table.trans_logp(i - 1, k) + msg.log_beta(i, k) - msg.loglik);
    post.xi.push_back(std::move(x));
  }
  return post;
}

double brute_force_log_likelihood(const MsmModel& model, const Trajectory& traj) {
  check_trajectory(model, traj);
  const int T = traj.length();
  const int M = model.M;
  const int steps = T - M;
  double paths = model.K0;
  for (int i = 0; i < steps; ++i) paths *= model.K;
  if (paths > 1e6) throw std::invalid_argument("brute_force_log_likelihood: path count exceeds guard");

  const DensityTable table = build_densities(model, traj.z);
  const Vec pi = model.pi();
  const Mat Q = model.q();
  const Mat R = initial_transition(model);

  std::vector<double> logw;
  logw.reserve(static_cast<std::size_t>(paths));
  std::vector<int> s(steps, 0);
  for (int a = 0; a < model.K0; ++a) {
    // enumerate chain states in odometer order
    std::fill(s.begin(), s.end(), 0);
    while (true) {
      double lw = std::log(pi[a]) + table.init_logp[a];
      int prev = a;
      for (int i = 0; i < steps; ++i) {
        lw += (i == 0) ? std::log(R(prev, s[i])) : std::log(Q(prev, s[i]));
        lw += table.trans_logp(i, s[i]);
        prev = s[i];
      }
      logw.push_back(lw);
      int pos = steps - 1;
      while (pos >= 0 && ++s[pos] == model.K) s[pos--] = 0;
      if (pos < 0) break;
    }
  }
  return log_sum_exp(logw);
}

PosteriorMarginals brute_force_posteriors(const MsmModel& model, const Trajectory& traj) {
  check_trajectory(model, traj);
  const int T = traj.length();
  const int M = model.M;
  const int K = model.K;
  const int K0 = model.K0;
  const int steps = T - M;
  const int P = steps + 1;
  const int width = std::max(K, K0);

  const double loglik = brute_force_log_likelihood(model, traj);
  const DensityTable table = build_densities(model, traj.z);
  const Vec pi = model.pi();
  const Mat Q = model.q();
  const Mat R = initial_transition(model);

  PosteriorMarginals post;
  post.log_likelihood = loglik;
  post.gamma = Mat::Zero(P, width);
  post.xi_first = Mat::Zero(K, K0);
  post.xi.assign(std::max(0, P - 2), Mat::Zero(K, K));

  std::vector<int> s(steps, 0);
  for (int a = 0; a < K0; ++a) {
    std::fill(s.begin(), s.end(), 0);
    while (true) {
      double lw = std::log(pi[a]) + table.init_logp[a];
      int prev = a;
      for (int i = 0; i < steps; ++i) {
        lw += (i == 0) ? std::log(R(prev, s[i])) : std::log(Q(prev, s[i]));
        lw += table.trans_logp(i, s[i]);
        prev = s[i];
      }
      const double w = std::exp(lw - loglik);
      post.gamma(0, a) += w;
      for (int i = 0; i < steps; ++i) post.gamma(i + 1, s[i]) += w;
      if (steps > 0) post.xi_first(s[0], a) += w;
      for (int i = 1; i < steps; ++i) post.xi[i - 1](s[i], s[i - 1]) += w;

      int pos = steps - 1;
      while (pos >= 0 && ++s[pos] == K) s[pos--] = 0;
      if (pos < 0) break;
    }
  }
  return post;
}

MsmGradient msm_gradient_zero(const MsmModel& model, int T) {
  MsmGradient g;
  g.d_pi_logits = Vec::Zero(model.K0);
  g.d_q_logits = Mat::Zero(model.K, model.K);
  for (int a = 0; a < model.K0; ++a) {
    g.d_init_mean.push_back(Vec::Zero(model.m * model.M));
    g.d_init_var_raw.push_back(Vec::Zero(model.m * model.M));
  }
  for (int k = 0; k < model.K; ++k) {
    g.d_net.push_back(mlp_gradients_zero(model.transitions[k].mean_net.net));
    g.d_cov_raw.push_back(Vec::Zero(model.m));
  }
  g.d_cov_scale_raw = Vec::Zero(model.K);
  g.d_traj = Mat::Zero(T, model.m);
  return g;
}

MsmGradient msm_prior_gradient(const MsmModel& model, const Trajectory& traj,
                               bool want_traj_grad) {
  check_trajectory(model, traj);
  if (model.has_overlap())
    throw std::invalid_argument("msm_prior_gradient: overlap generators are not trainable");

  const int T = traj.length();
  const int M = model.M;
  const int K = model.K;
  const int K0 = model.K0;
  const Mat& z = traj.z;

  const PosteriorMarginals post = msm_forward_backward(model, traj);
  MsmGradient grad = msm_gradient_zero(model, T);
  grad.log_likelihood = post.log_likelihood;

  // chain parameters
  const Vec pi = model.pi();
  for (int a = 0; a < K0; ++a) grad.d_pi_logits[a] = post.gamma(0, a) - pi[a];

  Mat xsum = Mat::Zero(K, K);  // xsum(k', k): expected count of k' -> k
  for (const Mat& x : post.xi) xsum += x.transpose();
  if (K0 == K) xsum += post.xi_first.transpose();  // first step ties to Q under shared labels
  const Mat Q = model.q();
  for (int i = 0; i < K; ++i) {
    const double rowsum = xsum.row(i).sum();
    for (int j = 0; j < K; ++j) grad.d_q_logits(i, j) = xsum(i, j) - rowsum * Q(i, j);
  }

  // initial components
  Vec v0(model.m * M);
  for (int t = 0; t < M; ++t) v0.segment(t * model.m, model.m) = z.row(t).transpose();
  for (int a = 0; a < K0; ++a) {
    const double g = post.gamma(0, a);
    if (g == 0.0) continue;
    const Vec var = model.init_var(a);
    const Vec& mu = model.init[a].mean;
    for (Eigen::Index i = 0; i < v0.size(); ++i) {
      const double r = v0[i] - mu[i];
      const double dmu = g * r / var[i];
      const double dvar = g * (-0.5 / var[i] + 0.5 * r * r / (var[i] * var[i]));
      grad.d_init_mean[a][i] += dmu;
      grad.d_init_var_raw[a][i] += dvar * sigmoid(model.init[a].var_raw[i]);
      if (want_traj_grad) grad.d_traj(i / model.m, i % model.m) -= dmu;
    }
  }

  // transitions, weighted by gamma
  MlpCache cache;
  for (int t = M; t < T; ++t) {
    const Vec h = history_at(z, t, M);
    const Vec zt = z.row(t).transpose();
    const int row = t - M + 1;  // gamma row for this chain position
    for (int k = 0; k < K; ++k) {
      const double g = post.gamma(row, k);
      if (g == 0.0) continue;
      const Transition& tr = model.transitions[k];
      const Vec mean = mlp_forward_cached(tr.mean_net.net, h, cache);
      const Vec var = model.cov_eval(k, mean);

      Vec up_mean(model.m);
      for (int i = 0; i < model.m; ++i) {
        const double r = zt[i] - mean[i];
        const double dmean = r / var[i];
        const double dvar = -0.5 / var[i] + 0.5 * r * r / (var[i] * var[i]);
        switch (model.cov_mode) {
          case CovarianceMode::Constant:
            up_mean[i] = g * dmean;
            grad.d_cov_raw[0][i] += g * dvar * sigmoid(model.cov_raw_for(k)[i]);
            break;
          case CovarianceMode::Heterogeneous:
            up_mean[i] = g * dmean;
            grad.d_cov_raw[k][i] += g * dvar * sigmoid(tr.cov_raw[i]);
            break;
          case CovarianceMode::HistoryDependent: {
            const double c = model.cov_scale(k);
            const double s = sigmoid(mean[i]);
            up_mean[i] = g * (dmean + dvar * c * s * (1.0 - s));
            grad.d_cov_scale_raw[k] += g * dvar * s * sigmoid(tr.cov_scale_raw);
            break;
          }
        }
        if (want_traj_grad) grad.d_traj(t, i) -= g * dmean;
      }

      MlpGradients& gn = grad.d_net[k];
      const Vec saved_dinput = gn.d_input;
      gn.d_input.setZero();
      mlp_backward_accum(tr.mean_net.net, cache, up_mean, gn, want_traj_grad);
      if (want_traj_grad) {
        for (int lag = 1; lag <= M; ++lag)
          grad.d_traj.row(t - lag) += gn.d_input.segment((lag - 1) * model.m, model.m).transpose();
      }
      gn.d_input = saved_dinput;  // d_input slot is per-call scratch here
    }
  }

  // keep masked entries exactly zero
  for (int k = 0; k < K; ++k) {
    const MaskedMlp& mn = model.transitions[k].mean_net;
    if (mn.masked())
      for (std::size_t l = 0; l < mn.masks.size(); ++l)
        grad.d_net[k].d_weights[l] = grad.d_net[k].d_weights[l].cwiseProduct(mn.masks[l]);
  }
  return grad;
}

AssumptionReport validate_assumptions(const MsmModel& model, const ProbeSpec& probe) {
  AssumptionReport report;
  for (const auto& tr : model.transitions)
    if (!activation_is_analytic(tr.mean_net.net.activation)) report.m2_analytic = false;

  Rng rng(derive_seed(probe.seed, "validate"));
  const int n = probe.count;
  const int hd = model.m * model.M;

  bool any_mask = false;
  for (const auto& tr : model.transitions) any_mask = any_mask || tr.mean_net.masked();

  long m1_hits = 0;
  long s2_hits = 0;
  Vec h(hd);
  std::vector<Vec> means(model.K), vars(model.K);
  for (int it = 0; it < n; ++it) {
    for (int i = 0; i < hd; ++i) h[i] = probe.stddev * rng.normal();
    for (int k = 0; k < model.K; ++k) {
      means[k] = model.mean_eval(k, h);
      vars[k] = model.cov_eval(k, means[k]);
    }
    bool intersects = false;
    for (int k = 0; k < model.K && !intersects; ++k)
      for (int kp = k + 1; kp < model.K && !intersects; ++kp) {
        const bool mean_eq = (means[k] - means[kp]).cwiseAbs().maxCoeff() <= kTolEq;
        const bool cov_eq = (vars[k] - vars[kp]).cwiseAbs().maxCoeff() <= kTolEq;
        intersects = mean_eq && cov_eq;
      }
    if (intersects) ++m1_hits;

    bool s2_ok = false;
    for (int k = 0; k < model.K && !s2_ok; ++k)
      for (int kp = k + 1; kp < model.K && !s2_ok; ++kp) {
        bool distinct = true;
        for (int i = 0; i < model.m && distinct; ++i)
          for (int j = i + 1; j < model.m && distinct; ++j) {
            const double ri = vars[k][i] / vars[kp][i];
            const double rj = vars[k][j] / vars[kp][j];
            distinct = std::abs(ri - rj) > kTolRatio;
          }
        s2_ok = distinct;
      }
    if (s2_ok) ++s2_hits;

    if (any_mask && it < 256) {
      // m3 restated: the Jacobian support must stay inside the declared
      // dependency pattern, i.e. |J(j, c)| == 0 wherever mask2 * mask1 is zero.
      for (int k = 0; k < model.K; ++k) {
        const MaskedMlp& mn = model.transitions[k].mean_net;
        if (!mn.masked()) continue;
        const Mat reach = mn.masks.back() * mn.masks.front();
        const Mat jac = mlp_jacobian(mn.net, h);
        for (int j = 0; j < model.m; ++j)
          for (int c = 0; c < hd; ++c)
            if (reach(j, c) == 0.0)
              report.m3_max_masked_deviation =
                  std::max(report.m3_max_masked_deviation, std::abs(jac(j, c)));
      }
      report.m3_checked = true;
    }
  }

  report.m1_intersection_fraction = static_cast<double>(m1_hits) / n;
  report.m1_fail = report.m1_intersection_fraction > kM1FailFraction;
  report.s2_satisfied_fraction = model.K >= 2 ? static_cast<double>(s2_hits) / n : 0.0;
  report.s2_warn = report.s2_satisfied_fraction < 0.99;
  if (model.K < 2) report.notes.push_back("s2: single regime, condition vacuous");
  if (report.s2_warn && model.K >= 2)
    report.notes.push_back("s2: covariance ratios not distinct; identifiability up to affine maps only");
  if (!report.m2_analytic) report.notes.push_back("m2: non-analytic transition activation");
  if (report.m1_fail) report.notes.push_back("m1: regime pair indistinguishable on a non-negligible set");
  return report;
}

namespace {
Mat block_affine(const Vec& scale, const std::vector<int>& perm, int blocks) {
  const int m = static_cast<int>(scale.size());
  Mat A = Mat::Zero(m * blocks, m * blocks);
  for (int b = 0; b < blocks; ++b)
    for (int i = 0; i < m; ++i) A(b * m + i, b * m + perm[i]) = scale[i];
  return A;
}
}  // namespace

MsmModel affine_transform_model(const MsmModel& model, const Vec& scale,
                                const std::vector<int>& perm, const Vec& shift) {
  if (model.cov_mode == CovarianceMode::HistoryDependent)
    throw std::invalid_argument("affine_transform_model: history-dependent covariance is not closed in-family");
  if (model.has_overlap())
    throw std::invalid_argument("affine_transform_model: overlap generators unsupported");
  const int m = model.m;
  const int M = model.M;

  const Mat A = block_affine(scale, perm, 1);
  const Mat Ah = block_affine(scale, perm, M);
  const Mat Ah_inv = Ah.inverse();
  Vec shift_h(m * M);
  for (int b = 0; b < M; ++b) shift_h.segment(b * m, m) = shift;

  MsmModel out = model;
  for (int a = 0; a < model.K0; ++a) {
    const Vec var = model.init_var(a);
    Vec new_mean(m * M), new_var(m * M);
    for (int b = 0; b < M; ++b)
      for (int i = 0; i < m; ++i) {
        new_mean[b * m + i] = scale[i] * model.init[a].mean[b * m + perm[i]] + shift[i];
        new_var[b * m + i] = scale[i] * scale[i] * var[b * m + perm[i]];
      }
    out.init[a].mean = new_mean;
    for (int i = 0; i < m * M; ++i) {
      if (new_var[i] <= kVarFloor)
        throw NumericError("affine_transform_model: transformed variance hits the floor");
      out.init[a].var_raw[i] = softplus_inv(new_var[i] - kVarFloor);
    }
  }

  for (int k = 0; k < model.K; ++k) {
    const Transition& tr = model.transitions[k];
    if (tr.mean_net.masked())
      throw std::invalid_argument("affine_transform_model: masked nets are not closed under input mixing");
    Mlp net = tr.mean_net.net;
    net.weights.front() = tr.mean_net.net.weights.front() * Ah_inv;
    net.biases.front() = tr.mean_net.net.biases.front() -
                         tr.mean_net.net.weights.front() * (Ah_inv * shift_h);
    net.weights.back() = A * net.weights.back();
    net.biases.back() = A * net.biases.back() + shift;
    out.transitions[k].mean_net.net = std::move(net);

    if (model.cov_mode == CovarianceMode::Constant && k > 0) continue;  // shared slot 0 only
    const Vec var = model.cov_eval(k, Vec());
    Vec new_var(m);
    for (int i = 0; i < m; ++i) new_var[i] = scale[i] * scale[i] * var[perm[i]];
    for (int i = 0; i < m; ++i) {
      if (new_var[i] <= kVarFloor)
        throw NumericError("affine_transform_model: transformed variance hits the floor");
      out.transitions[k].cov_raw[i] = softplus_inv(new_var[i] - kVarFloor);
    }
  }
  return out;
}

Mat affine_transform_trajectory(const Mat& z, const Vec& scale,
                                const std::vector<int>& perm, const Vec& shift) {
  Mat out(z.rows(), z.cols());
  for (Eigen::Index t = 0; t < z.rows(); ++t)
    for (int i = 0; i < static_cast<int>(z.cols()); ++i)
      out(t, i) = scale[i] * z(t, perm[i]) + shift[i];
  return out;
}

MsmModel permute_regimes(const MsmModel& model, const std::vector<int>& sigma) {
  if (static_cast<int>(sigma.size()) != model.K)
    throw ShapeError("permute_regimes: permutation size != K");
  MsmModel out = model;
  const Vec shared_cov = model.cov_raw_for(0);
  for (int k = 0; k < model.K; ++k) {
    out.transitions[k] = model.transitions[sigma[k]];
    for (int j = 0; j < model.K; ++j) out.q_logits(k, j) = model.q_logits(sigma[k], sigma[j]);
  }
  if (model.cov_mode == CovarianceMode::Constant) out.transitions[0].cov_raw = shared_cov;
  if (model.K0 == model.K) {
    for (int a = 0; a < model.K0; ++a) {
      out.pi_logits[a] = model.pi_logits[sigma[a]];
      out.init[a] = model.init[sigma[a]];
    }
  }
  return out;
}

}  // namespace isds
