#include "isds/selection.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

namespace isds {

namespace {
double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace

MsmModel make_msm_architecture(int K, int M, int m, int hidden, CovarianceMode mode) {
  MsmModel model;
  model.K = K;
  model.K0 = K;
  model.M = M;
  model.m = m;
  model.cov_mode = mode;
  model.pi_logits = Vec::Zero(K);
  model.q_logits = Mat::Zero(K, K);
  for (int a = 0; a < K; ++a) {
    InitialComponent c;
    c.mean = Vec::Zero(m * M);
    c.var_raw = Vec::Constant(m * M, softplus_inv(1.0));
    model.init.push_back(std::move(c));
  }
  for (int k = 0; k < K; ++k) {
    Transition tr;
    tr.mean_net.net = mlp_init({m * M, hidden, m}, Activation::Cosine, 0);
    tr.cov_raw = Vec::Constant(m, softplus_inv(0.05));
    tr.cov_scale_raw = softplus_inv(0.05);
    model.transitions.push_back(std::move(tr));
  }
  return model;
}

const GridCell* SelectionGrid::find(int K, int M, std::uint64_t seed) const {
  for (const auto& c : cells)
    if (c.K == K && c.M == M && c.seed == seed) return &c;
  return nullptr;
}

std::vector<double> SelectionGrid::k_curve(int M, std::uint64_t seed) const {
  std::vector<double> out;
  for (int K : k_values) {
    const GridCell* c = find(K, M, seed);
    out.push_back(c && c->ok ? c->objective : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

std::vector<double> SelectionGrid::m_curve(int K, std::uint64_t seed) const {
  std::vector<double> out;
  for (int M : m_values) {
    const GridCell* c = find(K, M, seed);
    out.push_back(c && c->ok ? c->objective : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

std::string SelectionGrid::to_csv() const {
  std::ostringstream os;
  os << "K,M,seed,objective,runtime_sec,ok\n";
  for (const auto& c : cells)
    os << c.K << ',' << c.M << ',' << c.seed << ',' << c.objective << ',' << c.runtime_sec
       << ',' << (c.ok ? 1 : 0) << '\n';
  return os.str();
}

SelectionGrid sweep_msm(const std::vector<Trajectory>& train,
                        const std::vector<Trajectory>& heldout, const MsmSweepConfig& cfg) {
  if (train.empty() || heldout.empty()) throw std::invalid_argument("sweep_msm: empty dataset");
  const int m = train.front().dim();

  SelectionGrid grid;
  grid.k_values = cfg.k_values;
  grid.m_values = cfg.m_values;
  for (std::uint64_t seed : cfg.seeds)
    for (int K : cfg.k_values)
      for (int M : cfg.m_values) {
        GridCell cell;
        cell.K = K;
        cell.M = M;
        cell.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        try {
          MsmModel model = make_msm_architecture(K, M, m, cfg.hidden, cfg.cov_mode);
          OptimizerConfig opt = cfg.opt;
          opt.seed = derive_seed(seed, "cell", static_cast<std::uint64_t>(K) * 1000 + M);
          opt.workers = cfg.workers;
          model = msm_fit_init(model, train, derive_seed(opt.seed, "start"));
          fit_msm(model, train, opt);
          cell.objective = msm_mean_log_likelihood(model, heldout, cfg.workers);
          cell.ok = std::isfinite(cell.objective);
        } catch (const std::exception& e) {
          cell.ok = false;
          cell.message = e.what();
        }
        cell.runtime_sec = seconds_since(t0);
        grid.cells.push_back(std::move(cell));
      }
  return grid;
}

SelectionGrid sweep_sds(const std::vector<Mat>& train, const std::vector<Mat>& heldout,
                        const SdsSweepConfig& cfg) {
  if (train.empty() || heldout.empty()) throw std::invalid_argument("sweep_sds: empty dataset");
  const int n = static_cast<int>(train.front().cols());

  SelectionGrid grid;
  grid.k_values = cfg.k_values;
  grid.m_values = cfg.m_values;
  for (std::uint64_t seed : cfg.seeds)
    for (int K : cfg.k_values)
      for (int M : cfg.m_values) {
        GridCell cell;
        cell.K = K;
        cell.M = M;
        cell.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        try {
          SdsModel model;
          model.prior = make_msm_architecture(K, M, cfg.latent_dim, cfg.transition_hidden,
                                              cfg.cov_mode);
          const int h = cfg.autoencoder_hidden;
          model.decoder = mlp_init({cfg.latent_dim, h, n}, Activation::LeakyRelu, 1);
          model.encoder_mean = mlp_init({n, h, cfg.latent_dim}, Activation::LeakyRelu, 2);
          model.encoder_logvar = mlp_init({n, h, cfg.latent_dim}, Activation::LeakyRelu, 3);
          model.obs_noise_raw = Vec::Constant(n, softplus_inv(1e-2));
          TrainSchedule schedule = cfg.schedule;
          schedule.seed = derive_seed(seed, "cell", static_cast<std::uint64_t>(K) * 1000 + M);
          train_sds(model, train, schedule);
          cell.objective = sds_mean_elbo(model, heldout, cfg.eval_n_mc,
                                         derive_seed(seed, "eval"), schedule.workers);
          cell.ok = std::isfinite(cell.objective);
        } catch (const std::exception& e) {
          cell.ok = false;
          cell.message = e.what();
        }
        cell.runtime_sec = seconds_since(t0);
        grid.cells.push_back(std::move(cell));
      }
  return grid;
}

ElbowChoice elbow_select(const std::vector<double>& curve, double rho) {
  if (curve.size() < 3) throw std::invalid_argument("elbow_select: need at least 3 points");
  const double lo = *std::min_element(curve.begin(), curve.end());
  const double hi = *std::max_element(curve.begin(), curve.end());
  const double range = hi - lo;

  ElbowChoice out;
  if (!(range > 0.0)) {
    out.index = 0;
    out.flagged = true;
    return out;
  }
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double gain = (curve[i + 1] - curve[i]) / range;
    if (gain < rho) {
      out.index = static_cast<int>(i);
      return out;
    }
  }
  out.index = static_cast<int>(curve.size()) - 1;
  out.flagged = true;  // gains never leveled off
  return out;
}

}  // namespace isds
