#include "isds/sds.hpp"

#include "isds/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace isds {

using nlohmann::json;

Vec SdsModel::obs_noise() const {
  Vec v(obs_noise_raw.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = softplus(obs_noise_raw[i]) + kVarFloor;
  return v;
}

void SdsModel::validate() const {
  prior.validate();
  const int m = prior.m;
  const int nn = decoder.output_dim();
  if (decoder.input_dim() != m) throw ShapeError("SdsModel: decoder input must be R^m");
  if (nn < m) throw ShapeError("SdsModel: observation dimension must satisfy n >= m");
  if (decoder.activation != Activation::LeakyRelu)
    throw std::invalid_argument("SdsModel: decoder must be piecewise linear (LeakyRelu)");
  if (encoder_mean.input_dim() != nn || encoder_mean.output_dim() != m)
    throw ShapeError("SdsModel: encoder mean net must map R^n -> R^m");
  if (encoder_logvar.input_dim() != nn || encoder_logvar.output_dim() != m)
    throw ShapeError("SdsModel: encoder logvar net must map R^n -> R^m");
  if (obs_noise_raw.size() != nn) throw ShapeError("SdsModel: obs noise must have length n");
  if (!obs_noise_raw.allFinite()) throw NumericError("SdsModel: non-finite observation noise");
}

std::pair<Vec, Vec> encode(const SdsModel& model, const Vec& x_t) {
  Vec mean = mlp_forward(model.encoder_mean, x_t);
  Vec logvar = mlp_forward(model.encoder_logvar, x_t);
  Vec var(logvar.size());
  for (Eigen::Index i = 0; i < var.size(); ++i) var[i] = std::exp(logvar[i]);
  return {std::move(mean), std::move(var)};
}

Vec reparameterized_sample(const Vec& mean, const Vec& var_diag, const Vec& noise) {
  if (mean.size() != var_diag.size() || mean.size() != noise.size())
    throw ShapeError("reparameterized_sample: size mismatch");
  Vec out(mean.size());
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out[i] = mean[i] + std::sqrt(var_diag[i]) * noise[i];
  return out;
}

SdsGradient sds_gradient_zero(const SdsModel& model, int T) {
  SdsGradient g;
  g.prior = msm_gradient_zero(model.prior, T);
  g.d_decoder = mlp_gradients_zero(model.decoder);
  g.d_obs_noise_raw = Vec::Zero(model.n());
  g.d_enc_mean = mlp_gradients_zero(model.encoder_mean);
  g.d_enc_logvar = mlp_gradients_zero(model.encoder_logvar);
  return g;
}

namespace {

void accum_scaled(MlpGradients& dst, const MlpGradients& src, double w) {
  for (std::size_t l = 0; l < dst.d_weights.size(); ++l) {
    dst.d_weights[l] += w * src.d_weights[l];
    dst.d_biases[l] += w * src.d_biases[l];
  }
}

void accum_scaled(MsmGradient& dst, const MsmGradient& src, double w) {
  dst.d_pi_logits += w * src.d_pi_logits;
  dst.d_q_logits += w * src.d_q_logits;
  for (std::size_t a = 0; a < dst.d_init_mean.size(); ++a) {
    dst.d_init_mean[a] += w * src.d_init_mean[a];
    dst.d_init_var_raw[a] += w * src.d_init_var_raw[a];
  }
  for (std::size_t k = 0; k < dst.d_net.size(); ++k) accum_scaled(dst.d_net[k], src.d_net[k], w);
  for (std::size_t k = 0; k < dst.d_cov_raw.size(); ++k) dst.d_cov_raw[k] += w * src.d_cov_raw[k];
  dst.d_cov_scale_raw += w * src.d_cov_scale_raw;
}

}  // namespace

ElboEstimate elbo_and_gradients(const SdsModel& model, const Mat& x, int n_mc, double eta,
                                Rng& rng, SdsGradient* grad, int reg_probe,
                                const Mat* fixed_probe) {
  const int T = static_cast<int>(x.rows());
  const int n = model.n();
  const int m = model.prior.m;
  const int M = model.prior.M;
  if (static_cast<int>(x.cols()) != n) throw ShapeError("elbo: observation dimension mismatch");
  if (T <= M) throw ShapeError("elbo: sequence too short, need T > M");
  if (n_mc < 1) throw std::invalid_argument("elbo: n_mc must be >= 1");

  const Vec v_obs = model.obs_noise();
  const double inv_mc = 1.0 / n_mc;

  ElboEstimate est;
  est.n_mc = n_mc;

  // encoder outputs are sample-independent
  Mat mu(T, m), lv(T, m);
  std::vector<MlpCache> cache_mu(T), cache_lv(T);
  for (int t = 0; t < T; ++t) {
    const Vec xt = x.row(t).transpose();
    mu.row(t) = mlp_forward_cached(model.encoder_mean, xt, cache_mu[t]).transpose();
    lv.row(t) = mlp_forward_cached(model.encoder_logvar, xt, cache_lv[t]).transpose();
  }

  Mat z(T, m), eps(T, m);
  Mat last_z;
  MlpCache cache_dec;
  // per-sample accumulators, folded into `grad` with weight 1/n_mc
  MlpGradients dec_tmp, encm_tmp, enclv_tmp;
  Vec obs_tmp;
  if (grad) {
    dec_tmp = mlp_gradients_zero(model.decoder);
    encm_tmp = mlp_gradients_zero(model.encoder_mean);
    enclv_tmp = mlp_gradients_zero(model.encoder_logvar);
    obs_tmp = Vec::Zero(n);
  }

  for (int s = 0; s < n_mc; ++s) {
    double recon = 0.0, logq = 0.0;
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < m; ++i) {
        eps(t, i) = rng.normal();
        const double v = std::exp(lv(t, i));
        z(t, i) = mu(t, i) + std::sqrt(v) * eps(t, i);
        logq += -0.5 * (kLog2Pi + lv(t, i) + eps(t, i) * eps(t, i));
      }

    Trajectory traj{z};
    MsmGradient pg;
    double prior_ll;
    if (grad) {
      pg = msm_prior_gradient(model.prior, traj, /*want_traj_grad=*/true);
      prior_ll = pg.log_likelihood;
    } else {
      prior_ll = msm_log_likelihood(model.prior, traj);
    }

    Mat dz = grad ? std::move(pg.d_traj) : Mat();
    if (grad) {
      for (auto& gl : dec_tmp.d_weights) gl.setZero();
      for (auto& gl : dec_tmp.d_biases) gl.setZero();
      for (auto& gl : encm_tmp.d_weights) gl.setZero();
      for (auto& gl : encm_tmp.d_biases) gl.setZero();
      for (auto& gl : enclv_tmp.d_weights) gl.setZero();
      for (auto& gl : enclv_tmp.d_biases) gl.setZero();
      obs_tmp.setZero();
    }

    for (int t = 0; t < T; ++t) {
      const Vec zt = z.row(t).transpose();
      const Vec dec = grad ? mlp_forward_cached(model.decoder, zt, cache_dec)
                           : mlp_forward(model.decoder, zt);
      for (int i = 0; i < n; ++i) {
        const double r = x(t, i) - dec[i];
        recon += -0.5 * (kLog2Pi + std::log(v_obs[i]) + r * r / v_obs[i]);
      }
      if (grad) {
        Vec up_dec(n);
        for (int i = 0; i < n; ++i) {
          const double r = x(t, i) - dec[i];
          up_dec[i] = r / v_obs[i];
          obs_tmp[i] += (-0.5 / v_obs[i] + 0.5 * r * r / (v_obs[i] * v_obs[i])) *
                        sigmoid(model.obs_noise_raw[i]);
        }
        dec_tmp.d_input.setZero();
        mlp_backward_accum(model.decoder, cache_dec, up_dec, dec_tmp);
        dz.row(t) += dec_tmp.d_input.transpose();
        // entropy: d(-log q)/dz = (z - mu) / v
        for (int i = 0; i < m; ++i) dz(t, i) += std::exp(-lv(t, i)) * (z(t, i) - mu(t, i));
      }
    }

    if (grad) {
      for (int t = 0; t < T; ++t) {
        Vec up_mu(m), up_lv(m);
        for (int i = 0; i < m; ++i) {
          const double v = std::exp(lv(t, i));
          const double diff = z(t, i) - mu(t, i);
          up_mu[i] = dz(t, i) - diff / v;  // pathwise plus direct entropy term
          up_lv[i] = dz(t, i) * 0.5 * std::sqrt(v) * eps(t, i) + (0.5 - 0.5 * diff * diff / v);
        }
        mlp_backward_accum(model.encoder_mean, cache_mu[t], up_mu, encm_tmp, false);
        mlp_backward_accum(model.encoder_logvar, cache_lv[t], up_lv, enclv_tmp, false);
      }
      accum_scaled(grad->prior, pg, inv_mc);
      accum_scaled(grad->d_decoder, dec_tmp, inv_mc);
      accum_scaled(grad->d_enc_mean, encm_tmp, inv_mc);
      accum_scaled(grad->d_enc_logvar, enclv_tmp, inv_mc);
      grad->d_obs_noise_raw += inv_mc * obs_tmp;
    }

    est.recon_term += inv_mc * recon;
    est.entropy_term += inv_mc * (-logq);
    est.prior_term += inv_mc * prior_ll;
    last_z = z;
  }
  est.elbo = est.recon_term + est.entropy_term + est.prior_term;
  if (!std::isfinite(est.elbo)) throw NumericError("elbo: estimate is not finite");

  if (eta > 0.0) {
    Mat probe;
    if (fixed_probe) {
      probe = *fixed_probe;
    } else {
      const int avail = T - M;
      const int count = std::max(1, std::min(reg_probe, avail));
      probe.resize(count, m * M);
      for (int i = 0; i < count; ++i) {
        const int t = M + (avail <= 1 ? 0 : (i * (avail - 1)) / std::max(1, count - 1));
        probe.row(i) = history_at(last_z, t, M).transpose();
      }
    }
    const double w = eta / static_cast<double>(probe.rows());
    for (Eigen::Index p = 0; p < probe.rows(); ++p) {
      const Vec h = probe.row(p).transpose();
      for (int k = 0; k < model.prior.K; ++k) {
        const Mlp& net = model.prior.transitions[k].mean_net.net;
        const Mat jac = mlp_jacobian(net, h);
        est.reg_term -= w * jac.cwiseAbs().sum();
        if (grad) {
          Mat coeff(jac.rows(), jac.cols());
          for (Eigen::Index r = 0; r < jac.rows(); ++r)
            for (Eigen::Index c = 0; c < jac.cols(); ++c)
              coeff(r, c) = jac(r, c) > 0.0 ? -w : (jac(r, c) < 0.0 ? w : 0.0);
          mlp_jacobian_weighted_param_grad(net, h, coeff, grad->prior.d_net[k]);
        }
      }
    }
    if (grad) {
      for (int k = 0; k < model.prior.K; ++k) {
        const MaskedMlp& mn = model.prior.transitions[k].mean_net;
        if (mn.masked())
          for (std::size_t l = 0; l < mn.masks.size(); ++l)
            grad->prior.d_net[k].d_weights[l] =
                grad->prior.d_net[k].d_weights[l].cwiseProduct(mn.masks[l]);
      }
    }
  }
  return est;
}

PcaResult pca_fit(const Mat& rows, int dims) {
  const int n = static_cast<int>(rows.cols());
  const int count = static_cast<int>(rows.rows());
  if (dims < 1 || dims > n) throw ShapeError("pca_fit: dims must lie in [1, n]");
  if (count < dims) throw ShapeError("pca_fit: need at least `dims` samples");

  PcaResult out;
  out.requested_dims = dims;
  out.mean = rows.colwise().mean().transpose();
  Mat centered = rows.rowwise() - out.mean.transpose();
  Mat cov = (centered.transpose() * centered) / std::max(1, count - 1);
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  const Vec evals = eig.eigenvalues();  // ascending
  const Mat evecs = eig.eigenvectors();

  const double tol = 1e-12 * std::max(1.0, evals.maxCoeff());
  int keep = 0;
  for (int i = 0; i < dims; ++i)
    if (evals[n - 1 - i] > tol) ++keep;
  if (keep < dims) out.reduced = true;
  keep = std::max(1, keep);

  out.components.resize(keep, n);
  out.explained_variance.resize(keep);
  for (int i = 0; i < keep; ++i) {
    out.components.row(i) = evecs.col(n - 1 - i).transpose();
    out.explained_variance[i] = evals[n - 1 - i];
  }
  return out;
}

PcaResult pca_fit(const std::vector<Vec>& data, int dims) {
  if (data.empty()) throw ShapeError("pca_fit: empty data");
  Mat rows(static_cast<int>(data.size()), data.front().size());
  for (std::size_t i = 0; i < data.size(); ++i) rows.row(static_cast<int>(i)) = data[i].transpose();
  return pca_fit(rows, dims);
}

void TrainSchedule::validate() const {
  if (init_msm_epochs < 0 || pretrain_epochs < 0 || warmup_epochs < 0 || final_epochs < 0)
    throw std::invalid_argument("TrainSchedule: stage lengths must be >= 0");
  if (eta < 0.0) throw std::invalid_argument("TrainSchedule: eta must be >= 0");
  if (restarts < 1) throw std::invalid_argument("TrainSchedule: restarts must be >= 1");
}

Eigen::Index sds_param_count(const SdsModel& model, const SdsGroups& groups) {
  Eigen::Index c = msm_param_count(model.prior, groups.prior);
  if (groups.decoder) c += mlp_param_count(model.decoder);
  if (groups.obs_noise) c += model.obs_noise_raw.size();
  if (groups.encoder) c += mlp_param_count(model.encoder_mean) + mlp_param_count(model.encoder_logvar);
  return c;
}

Vec sds_pack_params(const SdsModel& model, const SdsGroups& groups) {
  Vec flat(sds_param_count(model, groups));
  double* p = flat.data();
  const Vec prior = msm_pack_params(model.prior, groups.prior);
  std::copy(prior.data(), prior.data() + prior.size(), p);
  p += prior.size();
  if (groups.decoder) {
    mlp_pack(model.decoder, p);
    p += mlp_param_count(model.decoder);
  }
  if (groups.obs_noise) {
    std::copy(model.obs_noise_raw.data(), model.obs_noise_raw.data() + model.obs_noise_raw.size(), p);
    p += model.obs_noise_raw.size();
  }
  if (groups.encoder) {
    mlp_pack(model.encoder_mean, p);
    p += mlp_param_count(model.encoder_mean);
    mlp_pack(model.encoder_logvar, p);
  }
  return flat;
}

void sds_unpack_params(SdsModel& model, const SdsGroups& groups, const Vec& flat) {
  if (flat.size() != sds_param_count(model, groups))
    throw ShapeError("sds_unpack_params: flat vector has wrong length");
  const double* p = flat.data();
  const Eigen::Index prior_n = msm_param_count(model.prior, groups.prior);
  Vec prior(prior_n);
  std::copy(p, p + prior_n, prior.data());
  msm_unpack_params(model.prior, groups.prior, prior);
  p += prior_n;
  if (groups.decoder) {
    mlp_unpack(model.decoder, p);
    p += mlp_param_count(model.decoder);
  }
  if (groups.obs_noise) {
    std::copy(p, p + model.obs_noise_raw.size(), model.obs_noise_raw.data());
    p += model.obs_noise_raw.size();
  }
  if (groups.encoder) {
    mlp_unpack(model.encoder_mean, p);
    p += mlp_param_count(model.encoder_mean);
    mlp_unpack(model.encoder_logvar, p);
  }
}

Vec sds_pack_gradient(const SdsModel& model, const SdsGradient& grad, const SdsGroups& groups) {
  Vec flat(sds_param_count(model, groups));
  double* p = flat.data();
  const Vec prior = msm_pack_gradient(model.prior, grad.prior, groups.prior);
  std::copy(prior.data(), prior.data() + prior.size(), p);
  p += prior.size();
  if (groups.decoder) {
    mlp_grad_pack(grad.d_decoder, p);
    p += mlp_param_count(model.decoder);
  }
  if (groups.obs_noise) {
    std::copy(grad.d_obs_noise_raw.data(),
              grad.d_obs_noise_raw.data() + grad.d_obs_noise_raw.size(), p);
    p += grad.d_obs_noise_raw.size();
  }
  if (groups.encoder) {
    mlp_grad_pack(grad.d_enc_mean, p);
    p += mlp_param_count(model.encoder_mean);
    mlp_grad_pack(grad.d_enc_logvar, p);
  }
  return flat;
}

void init_autoencoder_from_pca(SdsModel& model, const PcaResult& pca, std::uint64_t seed) {
  const int m = model.prior.m;
  if (static_cast<int>(pca.components.rows()) != m)
    throw ShapeError("init_autoencoder_from_pca: PCA dims must equal the latent dimension");

  const double slope = model.decoder.leaky_slope;
  const double gain = 1.0 / (1.0 + slope);
  const Mat& C = pca.components;  // m x n

  model.decoder = mlp_init(model.decoder.dims, Activation::LeakyRelu,
                           derive_seed(seed, "dec"), slope);
  model.encoder_mean = mlp_init(model.encoder_mean.dims, model.encoder_mean.activation,
                                derive_seed(seed, "enc-mean"), model.encoder_mean.leaky_slope);
  model.encoder_logvar = mlp_init(model.encoder_logvar.dims, model.encoder_logvar.activation,
                                  derive_seed(seed, "enc-logvar"), model.encoder_logvar.leaky_slope);

  const int dec_hidden = model.decoder.dims[1];
  const int enc_hidden = model.encoder_mean.dims[1];
  if (model.decoder.dims.size() != 3 || model.encoder_mean.dims.size() != 3)
    throw ShapeError("init_autoencoder_from_pca: expects two-layer encoder/decoder");
  if (dec_hidden < 2 * m || enc_hidden < 2 * m)
    throw ShapeError("init_autoencoder_from_pca: hidden width must be at least 2m");

  // decoder(z) = C^T z + mean exactly, via LR(v) - LR(-v) = (1 + slope) v;
  // spare hidden units keep random inputs but start with zero output columns
  model.decoder.weights[0] *= 0.1;
  model.decoder.weights[0].topRows(m) = Mat::Identity(m, m);
  model.decoder.weights[0].middleRows(m, m) = -Mat::Identity(m, m);
  model.decoder.biases[0].head(2 * m).setZero();
  model.decoder.weights[1].setZero();
  model.decoder.weights[1].leftCols(m) = gain * C.transpose();
  model.decoder.weights[1].middleCols(m, m) = -gain * C.transpose();
  model.decoder.biases[1] = pca.mean;

  // encoder_mean(x) = C (x - mean) exactly
  model.encoder_mean.weights[0] *= 0.1;
  model.encoder_mean.weights[0].topRows(m) = C;
  model.encoder_mean.weights[0].middleRows(m, m) = -C;
  model.encoder_mean.biases[0].head(m) = -C * pca.mean;
  model.encoder_mean.biases[0].segment(m, m) = C * pca.mean;
  model.encoder_mean.weights[1].setZero();
  model.encoder_mean.weights[1].leftCols(m) = gain * Mat::Identity(m, m);
  model.encoder_mean.weights[1].middleCols(m, m) = -gain * Mat::Identity(m, m);
  model.encoder_mean.biases[1].setZero();

  // modest, roughly constant posterior variance to start
  model.encoder_logvar.weights[1] *= 0.1;
  model.encoder_logvar.biases[1] = Vec::Constant(m, std::log(1e-2));
}

namespace {

struct StageDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ElboBatchResult {
  Vec grad_sum;
  double obj_sum = 0.0;
  double elbo_sum = 0.0;
  bool ok = true;
};

ElboBatchResult elbo_batch_gradient(const SdsModel& model, const std::vector<Mat>& xs,
                                    const std::vector<int>& idx, int lo, int hi,
                                    const SdsGroups& groups, const TrainSchedule& cfg,
                                    std::uint64_t stage_seed, long epoch) {
  const int count = hi - lo;
  std::vector<Vec> grads(count);
  std::vector<double> objs(count), elbos(count);
  std::vector<char> oks(count, 1);
  parallel_for(count, cfg.workers, [&](int i) {
    try {
      const int seq = idx[lo + i];
      Rng rng(derive_seed(stage_seed, "mc",
                          static_cast<std::uint64_t>(epoch) * xs.size() + seq));
      SdsGradient g = sds_gradient_zero(model, static_cast<int>(xs[seq].rows()));
      const ElboEstimate est =
          elbo_and_gradients(model, xs[seq], cfg.n_mc, cfg.eta, rng, &g, cfg.reg_probe);
      grads[i] = sds_pack_gradient(model, g, groups);
      objs[i] = est.elbo + est.reg_term;
      elbos[i] = est.elbo;
    } catch (const std::exception&) {
      oks[i] = 0;
    }
  });
  ElboBatchResult out;
  out.grad_sum = Vec::Zero(sds_param_count(model, groups));
  for (int i = 0; i < count; ++i) {
    if (!oks[i]) {
      out.ok = false;
      return out;
    }
    out.grad_sum += grads[i];
    out.obj_sum += objs[i];
    out.elbo_sum += elbos[i];
  }
  if (!out.grad_sum.allFinite() || !std::isfinite(out.obj_sum)) out.ok = false;
  return out;
}

}  // namespace

StageTrace sds_train_stage(SdsModel& model, const std::vector<Mat>& xs, const SdsGroups& groups,
                           int epochs, double lr0, const std::string& name,
                           const TrainSchedule& cfg, std::uint64_t stage_seed) {
  StageTrace trace;
  trace.name = name;
  if (epochs == 0) return trace;

  const int N = static_cast<int>(xs.size());
  const int batch = std::max(1, std::min(cfg.batch_size, N));
  Vec params = sds_pack_params(model, groups);
  Adam adam(params.size());
  Rng shuffle_rng(derive_seed(stage_seed, "shuffle"));
  std::vector<int> idx(N);
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double lr = lr0 * std::pow(cfg.lr_decay, epoch / std::max(1, cfg.lr_decay_every));
    for (int i = N - 1; i > 0; --i) std::swap(idx[i], idx[shuffle_rng.uniform_int(i + 1)]);
    double epoch_elbo = 0.0;
    for (int lo = 0; lo < N; lo += batch) {
      const int hi = std::min(N, lo + batch);
      ElboBatchResult res =
          elbo_batch_gradient(model, xs, idx, lo, hi, groups, cfg, stage_seed, epoch);
      if (!res.ok) throw StageDiverged("stage " + name + " diverged at epoch " +
                                       std::to_string(epoch));
      Vec g = res.grad_sum / (hi - lo);
      adam.ascend(params, g, lr);
      sds_unpack_params(model, groups, params);
      epoch_elbo += res.elbo_sum;
    }
    trace.objective.push_back(epoch_elbo / N);
    if (cfg.verbose)
      std::printf("[train_sds] stage %s epoch %d mean_elbo %.6f\n", name.c_str(), epoch,
                  trace.objective.back());
  }
  return trace;
}

std::string SdsFitReport::to_json_string() const {
  json j;
  j["best_restart"] = best_restart;
  j["final_objective"] = final_objective;
  j["diverged"] = diverged;
  j["message"] = message;
  json stages = json::array();
  for (const auto& restart : restart_stages) {
    json r = json::array();
    for (const auto& st : restart) r.push_back({{"name", st.name}, {"objective", st.objective}});
    stages.push_back(r);
  }
  j["restart_stages"] = stages;
  return j.dump(2);
}

SdsFitReport train_sds(SdsModel& model, const std::vector<Mat>& xs, const TrainSchedule& schedule) {
  schedule.validate();
  if (xs.empty()) throw std::invalid_argument("train_sds: empty dataset");
  model.validate();

  const int m = model.prior.m;
  const int pca_dims = schedule.pca_dims > 0 ? schedule.pca_dims : m;
  if (pca_dims != m)
    throw std::invalid_argument("train_sds: pca_dims must match the latent dimension");

  SdsFitReport report;
  SdsModel best;
  double best_obj = -std::numeric_limits<double>::infinity();

  // pooled PCA is restart-independent
  long total_rows = 0;
  for (const auto& x : xs) total_rows += x.rows();
  Mat pooled(total_rows, model.n());
  long at = 0;
  for (const auto& x : xs) {
    pooled.middleRows(at, x.rows()) = x;
    at += x.rows();
  }
  const PcaResult pca = pca_fit(pooled, pca_dims);
  if (static_cast<int>(pca.components.rows()) != m)
    throw NumericError("train_sds: PCA collapsed below the latent dimension");

  std::vector<Trajectory> projected(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Mat centered = xs[i].rowwise() - pca.mean.transpose();
    projected[i].z = centered * pca.components.transpose();
  }

  for (int restart = 0; restart < schedule.restarts; ++restart) {
    const std::uint64_t rs = derive_seed(schedule.seed, "sds-restart", restart);
    SdsModel work = model;
    std::vector<StageTrace> stages;
    try {
      // stage 1: iMSM on PCA projections
      OptimizerConfig msm_opt;
      msm_opt.epochs = schedule.init_msm_epochs;
      msm_opt.batch_size = schedule.batch_size;
      msm_opt.lr = schedule.msm_lr;
      msm_opt.restarts = schedule.msm_restarts;
      msm_opt.workers = schedule.workers;
      msm_opt.seed = derive_seed(rs, "msm");
      msm_opt.verbose = schedule.verbose;
      MsmModel prior = msm_fit_init(work.prior, projected, derive_seed(rs, "msm-start"));
      FitReport msm_report = fit_msm(prior, projected, msm_opt);
      work.prior = prior;
      StageTrace st1;
      st1.name = "init_msm";
      if (msm_report.best_restart >= 0)
        st1.objective = msm_report.restart_traces[msm_report.best_restart];
      stages.push_back(std::move(st1));

      init_autoencoder_from_pca(work, pca, derive_seed(rs, "ae"));
      // observation noise from the PCA reconstruction residual
      Vec resid = Vec::Zero(model.n());
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const Mat rec = (projected[i].z * pca.components).rowwise() + pca.mean.transpose();
        resid += (xs[i] - rec).array().square().colwise().sum().matrix().transpose();
      }
      resid /= static_cast<double>(total_rows);
      for (int i = 0; i < model.n(); ++i)
        work.obs_noise_raw[i] = softplus_inv(std::max(resid[i], 1e-4) - kVarFloor);

      // stage 2: encoder/decoder pretraining with the prior frozen
      SdsGroups pre;
      pre.prior = ParamGroups::none();
      stages.push_back(sds_train_stage(work, xs, pre, schedule.pretrain_epochs, schedule.lr,
                                     "pretrain_autoencoder", schedule, derive_seed(rs, "pre")));

      // stage 3: joint training with pi and Q frozen
      SdsGroups warm;
      warm.prior.prior_chain = false;
      stages.push_back(sds_train_stage(work, xs, warm, schedule.warmup_epochs, schedule.lr,
                                     "warmup_frozen_switches", schedule, derive_seed(rs, "warm")));

      // stage 4: everything
      SdsGroups full;
      stages.push_back(sds_train_stage(work, xs, full, schedule.final_epochs, schedule.lr, "final",
                                     schedule, derive_seed(rs, "final")));
    } catch (const StageDiverged& e) {
      report.message += std::string(e.what()) + " (restart " + std::to_string(restart) + "); ";
      report.restart_stages.push_back(std::move(stages));
      continue;
    }

    report.restart_stages.push_back(stages);
    double obj;
    if (!stages.back().objective.empty())
      obj = stages.back().objective.back();
    else
      obj = sds_mean_elbo(work, xs, schedule.n_mc, derive_seed(rs, "final-eval"), schedule.workers);
    if (obj > best_obj) {
      best_obj = obj;
      best = work;
      report.best_restart = restart;
    }
  }

  if (report.best_restart < 0) {
    report.diverged = true;
    throw NumericError("train_sds: all restarts diverged: " + report.message);
  }
  report.final_objective = best_obj;
  model = best;
  return report;
}

double sds_mean_elbo(const SdsModel& model, const std::vector<Mat>& xs, int n_mc,
                     std::uint64_t seed, int workers) {
  std::vector<double> vals(xs.size());
  parallel_for(static_cast<int>(xs.size()), workers, [&](int i) {
    Rng rng(derive_seed(seed, "eval-elbo", i));
    const ElboEstimate est = elbo_and_gradients(model, xs[i], n_mc, 0.0, rng, nullptr);
    vals[i] = est.elbo;
  });
  return std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(xs.size());
}

RegimeGraphSet extract_regime_graphs(const MsmModel& model,
                                     const std::vector<Trajectory>& probe, double tau) {
  const int K = model.K;
  const int m = model.m;
  const int M = model.M;

  std::vector<Mat> sums(K, Mat::Zero(m, m * M));
  std::vector<long> counts(K, 0);
  for (const auto& traj : probe) {
    const PosteriorMarginals post = msm_forward_backward(model, traj);
    for (int t = M; t < traj.length(); ++t) {
      int k_star = 0;
      const int row = t - M + 1;
      for (int k = 1; k < K; ++k)
        if (post.gamma(row, k) > post.gamma(row, k_star)) k_star = k;
      const Vec h = history_at(traj.z, t, M);
      sums[k_star] += mlp_jacobian(model.transitions[k_star].mean_net.net, h).cwiseAbs();
      ++counts[k_star];
    }
  }

  RegimeGraphSet out = RegimeGraphSet::zeros(K, m, M);
  for (int k = 0; k < K; ++k) {
    if (counts[k] == 0) {
      out.supported[k] = false;
      continue;
    }
    const Mat mean_abs = sums[k] / static_cast<double>(counts[k]);
    for (int lag = 0; lag < M; ++lag)
      for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i)
          out.adj[k][lag](j, i) = mean_abs(j, lag * m + i) > tau ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace isds
