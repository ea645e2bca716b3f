#pragma once

#include "isds/common.hpp"
#include "isds/msm.hpp"

namespace isds {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment estimation on a flat parameter vector (ascent direction).
class Adam {
 public:
  Adam(Eigen::Index dim, AdamConfig cfg = {})
      : cfg_(cfg), m_(Vec::Zero(dim)), v_(Vec::Zero(dim)) {}

  void ascend(Vec& params, const Vec& grad, double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      params[i] += lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + cfg_.eps);
    }
  }

 private:
  AdamConfig cfg_;
  Vec m_, v_;
  long step_ = 0;
};

// Which parameter groups participate in packing/updates.
struct ParamGroups {
  bool prior_nets = true;
  bool prior_cov = true;
  bool prior_init = true;
  bool prior_chain = true;  // pi and Q

  static ParamGroups all() { return {}; }
  static ParamGroups none() { return {false, false, false, false}; }
};

Eigen::Index msm_param_count(const MsmModel& model, const ParamGroups& groups);
Vec msm_pack_params(const MsmModel& model, const ParamGroups& groups);
void msm_unpack_params(MsmModel& model, const ParamGroups& groups, const Vec& flat);
Vec msm_pack_gradient(const MsmModel& model, const MsmGradient& grad, const ParamGroups& groups);

Eigen::Index mlp_param_count(const Mlp& net);
void mlp_pack(const Mlp& net, double* out);
void mlp_unpack(Mlp& net, const double* in);
void mlp_grad_pack(const MlpGradients& grad, double* out);

}  // namespace isds
