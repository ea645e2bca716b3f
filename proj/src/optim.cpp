#include "isds/optim.hpp"

namespace isds {

Eigen::Index mlp_param_count(const Mlp& net) {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l)
    n += net.weights[l].size() + net.biases[l].size();
  return n;
}

void mlp_pack(const Mlp& net, double* out) {
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const Mat& w = net.weights[l];
    std::copy(w.data(), w.data() + w.size(), out);
    out += w.size();
    std::copy(net.biases[l].data(), net.biases[l].data() + net.biases[l].size(), out);
    out += net.biases[l].size();
  }
}

void mlp_unpack(Mlp& net, const double* in) {
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    Mat& w = net.weights[l];
    std::copy(in, in + w.size(), w.data());
    in += w.size();
    std::copy(in, in + net.biases[l].size(), net.biases[l].data());
    in += net.biases[l].size();
  }
}

void mlp_grad_pack(const MlpGradients& grad, double* out) {
  for (std::size_t l = 0; l < grad.d_weights.size(); ++l) {
    const Mat& w = grad.d_weights[l];
    std::copy(w.data(), w.data() + w.size(), out);
    out += w.size();
    std::copy(grad.d_biases[l].data(), grad.d_biases[l].data() + grad.d_biases[l].size(), out);
    out += grad.d_biases[l].size();
  }
}

Eigen::Index msm_param_count(const MsmModel& model, const ParamGroups& groups) {
  Eigen::Index n = 0;
  if (groups.prior_chain) n += model.K0 + model.K * model.K;
  if (groups.prior_init)
    for (const auto& c : model.init) n += c.mean.size() + c.var_raw.size();
  if (groups.prior_nets)
    for (const auto& tr : model.transitions) n += mlp_param_count(tr.mean_net.net);
  if (groups.prior_cov) {
    switch (model.cov_mode) {
      case CovarianceMode::Constant: n += model.m; break;
      case CovarianceMode::Heterogeneous: n += model.K * model.m; break;
      case CovarianceMode::HistoryDependent: n += model.K; break;
    }
  }
  return n;
}

Vec msm_pack_params(const MsmModel& model, const ParamGroups& groups) {
  Vec flat(msm_param_count(model, groups));
  double* p = flat.data();
  if (groups.prior_chain) {
    std::copy(model.pi_logits.data(), model.pi_logits.data() + model.K0, p);
    p += model.K0;
    std::copy(model.q_logits.data(), model.q_logits.data() + model.q_logits.size(), p);
    p += model.q_logits.size();
  }
  if (groups.prior_init)
    for (const auto& c : model.init) {
      std::copy(c.mean.data(), c.mean.data() + c.mean.size(), p);
      p += c.mean.size();
      std::copy(c.var_raw.data(), c.var_raw.data() + c.var_raw.size(), p);
      p += c.var_raw.size();
    }
  if (groups.prior_nets)
    for (const auto& tr : model.transitions) {
      mlp_pack(tr.mean_net.net, p);
      p += mlp_param_count(tr.mean_net.net);
    }
  if (groups.prior_cov) {
    switch (model.cov_mode) {
      case CovarianceMode::Constant:
        std::copy(model.transitions[0].cov_raw.data(),
                  model.transitions[0].cov_raw.data() + model.m, p);
        p += model.m;
        break;
      case CovarianceMode::Heterogeneous:
        for (const auto& tr : model.transitions) {
          std::copy(tr.cov_raw.data(), tr.cov_raw.data() + model.m, p);
          p += model.m;
        }
        break;
      case CovarianceMode::HistoryDependent:
        for (const auto& tr : model.transitions) *p++ = tr.cov_scale_raw;
        break;
    }
  }
  return flat;
}

void msm_unpack_params(MsmModel& model, const ParamGroups& groups, const Vec& flat) {
  if (flat.size() != msm_param_count(model, groups))
    throw ShapeError("msm_unpack_params: flat vector has wrong length");
  const double* p = flat.data();
  if (groups.prior_chain) {
    std::copy(p, p + model.K0, model.pi_logits.data());
    p += model.K0;
    std::copy(p, p + model.q_logits.size(), model.q_logits.data());
    p += model.q_logits.size();
  }
  if (groups.prior_init)
    for (auto& c : model.init) {
      std::copy(p, p + c.mean.size(), c.mean.data());
      p += c.mean.size();
      std::copy(p, p + c.var_raw.size(), c.var_raw.data());
      p += c.var_raw.size();
    }
  if (groups.prior_nets)
    for (auto& tr : model.transitions) {
      mlp_unpack(tr.mean_net.net, p);
      p += mlp_param_count(tr.mean_net.net);
      tr.mean_net.apply_masks();
    }
  if (groups.prior_cov) {
    switch (model.cov_mode) {
      case CovarianceMode::Constant:
        std::copy(p, p + model.m, model.transitions[0].cov_raw.data());
        p += model.m;
        break;
      case CovarianceMode::Heterogeneous:
        for (auto& tr : model.transitions) {
          std::copy(p, p + model.m, tr.cov_raw.data());
          p += model.m;
        }
        break;
      case CovarianceMode::HistoryDependent:
        for (auto& tr : model.transitions) tr.cov_scale_raw = *p++;
        break;
    }
  }
}

Vec msm_pack_gradient(const MsmModel& model, const MsmGradient& grad, const ParamGroups& groups) {
  Vec flat(msm_param_count(model, groups));
  double* p = flat.data();
  if (groups.prior_chain) {
    std::copy(grad.d_pi_logits.data(), grad.d_pi_logits.data() + model.K0, p);
    p += model.K0;
    std::copy(grad.d_q_logits.data(), grad.d_q_logits.data() + grad.d_q_logits.size(), p);
    p += grad.d_q_logits.size();
  }
  if (groups.prior_init)
    for (int a = 0; a < model.K0; ++a) {
      const Vec& dm = grad.d_init_mean[a];
      std::copy(dm.data(), dm.data() + dm.size(), p);
      p += dm.size();
      const Vec& dv = grad.d_init_var_raw[a];
      std::copy(dv.data(), dv.data() + dv.size(), p);
      p += dv.size();
    }
  if (groups.prior_nets)
    for (int k = 0; k < model.K; ++k) {
      mlp_grad_pack(grad.d_net[k], p);
      p += mlp_param_count(model.transitions[k].mean_net.net);
    }
  if (groups.prior_cov) {
    switch (model.cov_mode) {
      case CovarianceMode::Constant:
        std::copy(grad.d_cov_raw[0].data(), grad.d_cov_raw[0].data() + model.m, p);
        p += model.m;
        break;
      case CovarianceMode::Heterogeneous:
        for (int k = 0; k < model.K; ++k) {
          std::copy(grad.d_cov_raw[k].data(), grad.d_cov_raw[k].data() + model.m, p);
          p += model.m;
        }
        break;
      case CovarianceMode::HistoryDependent:
        for (int k = 0; k < model.K; ++k) *p++ = grad.d_cov_scale_raw[k];
        break;
    }
  }
  return flat;
}

}  // namespace isds
