#include "isds/synthgen.hpp"

#include "isds/sds.hpp"

#include <algorithm>

namespace isds {

namespace {

constexpr double kInitCompMeanStd = 0.7;  // component means ~ N(0, 0.7^2 I)
constexpr double kInitCompVar = 0.01;     // diagonal covariance of each component
constexpr double kConstantNoise = 0.01;   // Sigma = 0.01 I
constexpr int kHeteroResampleLimit = 1000;
constexpr int kEdgeGuardRounds = 60;

Vec raw_from_var(double var, int len) {
  return Vec::Constant(len, softplus_inv(var - kVarFloor));
}

bool s2_distinct(const std::vector<Vec>& vars, int m, double tol) {
  const int K = static_cast<int>(vars.size());
  for (int k1 = 0; k1 < K; ++k1)
    for (int k2 = k1 + 1; k2 < K; ++k2) {
      bool distinct = true;
      for (int i = 0; i < m && distinct; ++i)
        for (int j = i + 1; j < m && distinct; ++j)
          distinct = std::abs(vars[k1][i] / vars[k2][i] - vars[k1][j] / vars[k2][j]) > tol;
      if (distinct) return true;
    }
  return false;
}

std::vector<Mat> sample_graphs(const GeneratorConfig& cfg, Rng& rng, int k) {
  (void)k;
  std::vector<Mat> adj(cfg.M, Mat::Zero(cfg.m, cfg.m));
  for (int lag = 0; lag < cfg.M; ++lag)
    for (int j = 0; j < cfg.m; ++j)
      for (int i = 0; i < cfg.m; ++i)
        if (rng.uniform() < cfg.graph_edge_prob) adj[lag](j, i) = 1.0;
  for (int i = 0; i < cfg.m; ++i) adj[0](i, i) = 1.0;  // dynamics stay non-degenerate
  return adj;
}

MaskedMlp masked_transition_net(const GeneratorConfig& cfg, const std::vector<Mat>& adj,
                                std::uint64_t seed) {
  MaskedMlp out;
  const std::vector<int> dims = {cfg.m * cfg.M, cfg.transition_hidden, cfg.m};
  out.net = mlp_init(dims, Activation::Cosine, seed);
  for (auto& w : out.net.weights) w *= cfg.init_gain;
  // nonzero biases put the cosine units away from their symmetric point
  Rng brng(derive_seed(seed, "bias"));
  for (auto& b : out.net.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.3 * brng.normal();
  out.masks = dependency_masks(dims, cfg.m, cfg.M, adj);
  out.apply_masks();
  return out;
}

// Mean |Jacobian| per edge measured on the generator's own occupancy, the
// same way evaluation thresholds graphs; weak true edges get the regime's net
// resampled so that self-recovery at tau = 0.05 is exact.
void enforce_edge_strength(MsmModel& prior, const RegimeGraphSet& graphs,
                           const GeneratorConfig& cfg, std::uint64_t seed) {
  const int pilot = 24;
  for (int round = 0; round < kEdgeGuardRounds; ++round) {
    std::vector<Trajectory> pilots(pilot);
    for (int i = 0; i < pilot; ++i) {
      Rng rng(derive_seed(seed, "edge-pilot", static_cast<std::uint64_t>(round) * pilot + i));
      Mat z(cfg.T, cfg.m);
      const std::vector<int> chain = sample_regime_chain(cfg.K, cfg.T, cfg.M, rng);
      const InitialComponent& comp = prior.init[chain[0]];
      const Vec ivar = prior.init_var(chain[0]);
      for (int t = 0; t < cfg.M; ++t)
        for (int d = 0; d < cfg.m; ++d) {
          const int idx = t * cfg.m + d;
          z(t, d) = comp.mean[idx] + std::sqrt(ivar[idx]) * rng.normal();
        }
      for (int t = cfg.M; t < cfg.T; ++t) {
        const int k = chain[t - cfg.M + 1];
        const Vec h = history_at(z, t, cfg.M);
        const Vec mean = prior.mean_eval(k, h);
        const Vec var = prior.cov_eval(k, mean);
        for (int d = 0; d < cfg.m; ++d) z(t, d) = mean[d] + std::sqrt(var[d]) * rng.normal();
      }
      pilots[i].z = std::move(z);
    }

    std::vector<Mat> sums(cfg.K, Mat::Zero(cfg.m, cfg.m * cfg.M));
    std::vector<long> counts(cfg.K, 0);
    for (const auto& traj : pilots) {
      const PosteriorMarginals post = msm_forward_backward(prior, traj);
      for (int t = cfg.M; t < traj.length(); ++t) {
        int ks = 0;
        for (int k = 1; k < cfg.K; ++k)
          if (post.gamma(t - cfg.M + 1, k) > post.gamma(t - cfg.M + 1, ks)) ks = k;
        sums[ks] += mlp_jacobian(prior.transitions[ks].mean_net.net,
                                 history_at(traj.z, t, cfg.M)).cwiseAbs();
        ++counts[ks];
      }
    }

    bool all_strong = true;
    for (int k = 0; k < cfg.K; ++k) {
      bool weak = counts[k] == 0;
      if (!weak) {
        const Mat mean_abs = sums[k] / static_cast<double>(counts[k]);
        for (int lag = 0; lag < cfg.M && !weak; ++lag)
          for (int j = 0; j < cfg.m && !weak; ++j)
            for (int i = 0; i < cfg.m && !weak; ++i)
              if (graphs.adj[k][lag](j, i) != 0.0 &&
                  mean_abs(j, lag * cfg.m + i) <= cfg.edge_strength_floor)
                weak = true;
      }
      if (weak) {
        all_strong = false;
        prior.transitions[k].mean_net = masked_transition_net(
            cfg, graphs.adj[k], derive_seed(seed, "edge-resample",
                                            static_cast<std::uint64_t>(round) * cfg.K + k));
      }
    }
    if (all_strong) return;
  }
  throw std::runtime_error("build_generator: could not reach the edge-strength floor");
}

}  // namespace

const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::Zero: return "zero";
    case Ablation::Overlap: return "overlap";
  }
  return "?";
}

Ablation ablation_from_name(const std::string& name) {
  if (name == "none") return Ablation::None;
  if (name == "zero") return Ablation::Zero;
  if (name == "overlap") return Ablation::Overlap;
  throw std::invalid_argument("unknown ablation: " + name);
}

void GeneratorConfig::validate() const {
  if (m < 1 || n < m || K < 1 || M < 1) throw ShapeError("GeneratorConfig: invalid dimensions");
  if (T <= M) throw ShapeError("GeneratorConfig: need T > M");
  if (n_train < 0 || n_eval < 0) throw ShapeError("GeneratorConfig: negative sample counts");
  if (graph_edge_prob <= 0.0 || graph_edge_prob > 1.0)
    throw std::invalid_argument("GeneratorConfig: edge probability must lie in (0, 1]");
  if (obs_noise_var < 0.0) throw std::invalid_argument("GeneratorConfig: negative noise");
}

GeneratorConfig generator_preset(const std::string& setting) {
  GeneratorConfig cfg;
  cfg.setting = setting;
  if (setting == "A") {
    cfg.m = 3; cfg.K = 3; cfg.M = 1; cfg.noise_mode = CovarianceMode::Constant;
  } else if (setting == "B") {
    cfg.m = 3; cfg.K = 3; cfg.M = 1; cfg.noise_mode = CovarianceMode::Heterogeneous;
  } else if (setting == "C") {
    cfg.m = 3; cfg.K = 3; cfg.M = 1; cfg.noise_mode = CovarianceMode::HistoryDependent;
  } else if (setting == "D") {
    cfg.m = 5; cfg.K = 3; cfg.M = 2; cfg.noise_mode = CovarianceMode::HistoryDependent;
  } else if (setting == "E") {
    cfg.m = 5; cfg.K = 5; cfg.M = 2; cfg.noise_mode = CovarianceMode::Heterogeneous;
  } else if (setting == "F") {
    cfg.m = 5; cfg.K = 5; cfg.M = 5; cfg.noise_mode = CovarianceMode::Heterogeneous;
  } else if (setting.rfind("zero-", 0) == 0 || setting.rfind("overlap-", 0) == 0) {
    cfg.m = 5; cfg.n = 5; cfg.K = 3;
    cfg.M = std::stoi(setting.substr(setting.find('-') + 1));
    cfg.noise_mode = CovarianceMode::Constant;
    cfg.ablation = setting[0] == 'z' ? Ablation::Zero : Ablation::Overlap;
  } else {
    throw std::invalid_argument("unknown setting: " + setting);
  }
  cfg.validate();
  return cfg;
}

Mat cyclic_transition_matrix(int K) {
  Mat q = Mat::Zero(K, K);
  if (K == 1) {
    q(0, 0) = 1.0;
    return q;
  }
  for (int k = 0; k < K; ++k) {
    q(k, k) = 0.9;
    q(k, (k + 1) % K) = 0.1;
  }
  return q;
}

std::vector<int> sample_regime_chain(int K, int T, int M, Rng& rng) {
  std::vector<int> s(T - M + 1);
  s[0] = rng.uniform_int(K);
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double u = rng.uniform();
    s[i] = (K == 1) ? 0 : (u < 0.9 ? s[i - 1] : (s[i - 1] + 1) % K);
  }
  return s;
}

GeneratorParts build_generator(const GeneratorConfig& config, Rng& rng) {
  config.validate();
  const int m = config.m;
  const int M = config.M;
  const int K = config.K;
  const std::uint64_t seed = rng.next_u64();

  GeneratorParts parts;
  MsmModel& prior = parts.prior;
  prior.K = K;
  prior.K0 = K;
  prior.M = M;
  prior.m = m;
  prior.cov_mode = config.noise_mode;

  prior.pi_logits = Vec::Zero(K);
  prior.q_logits = Mat::Constant(K, K, -2000.0);  // exact zeros after softmax
  const Mat q = cyclic_transition_matrix(K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      if (q(i, j) > 0.0) prior.q_logits(i, j) = std::log(q(i, j));

  Rng init_rng(derive_seed(seed, "init-components"));
  for (int a = 0; a < K; ++a) {
    InitialComponent comp;
    comp.mean.resize(m * M);
    for (int i = 0; i < m * M; ++i) comp.mean[i] = kInitCompMeanStd * init_rng.normal();
    comp.var_raw = raw_from_var(kInitCompVar, m * M);
    prior.init.push_back(std::move(comp));
  }

  parts.graphs = RegimeGraphSet::zeros(K, m, M);
  Rng graph_rng(derive_seed(seed, "graphs"));
  for (int k = 0; k < K; ++k) parts.graphs.adj[k] = sample_graphs(config, graph_rng, k);

  // covariances per noise mode
  std::vector<Vec> hetero_vars(K);
  if (config.noise_mode == CovarianceMode::Heterogeneous) {
    Rng cov_rng(derive_seed(seed, "hetero"));
    int attempts = 0;
    do {
      if (++attempts > kHeteroResampleLimit)
        throw std::runtime_error("build_generator: could not satisfy (s2) while resampling");
      for (int k = 0; k < K; ++k) {
        hetero_vars[k].resize(m);
        for (int i = 0; i < m; ++i) hetero_vars[k][i] = cov_rng.uniform(0.005, 0.08);
      }
    } while (!s2_distinct(hetero_vars, m, 1e-4));
  }

  Rng scale_rng(derive_seed(seed, "hist-scale"));
  for (int k = 0; k < K; ++k) {
    Transition tr;
    tr.mean_net = masked_transition_net(config, parts.graphs.adj[k],
                                        derive_seed(seed, "net", k));
    switch (config.noise_mode) {
      case CovarianceMode::Constant:
        tr.cov_raw = raw_from_var(kConstantNoise, m);
        break;
      case CovarianceMode::Heterogeneous:
        tr.cov_raw.resize(m);
        for (int i = 0; i < m; ++i) tr.cov_raw[i] = softplus_inv(hetero_vars[k][i] - kVarFloor);
        break;
      case CovarianceMode::HistoryDependent:
        tr.cov_raw = raw_from_var(kConstantNoise, m);  // unused but kept well-formed
        tr.cov_scale_raw = softplus_inv(scale_rng.uniform(0.05, 0.1) - kVarFloor);
        break;
    }
    prior.transitions.push_back(std::move(tr));
  }

  if (config.ablation == Ablation::None)
    enforce_edge_strength(prior, parts.graphs, config, derive_seed(seed, "edge-guard"));

  parts.decoder = mlp_init({m, config.emission_hidden, config.n}, Activation::LeakyRelu,
                           derive_seed(seed, "decoder"), config.leaky_slope);
  Rng dec_rng(derive_seed(seed, "decoder-bias"));
  for (auto& b : parts.decoder.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.1 * dec_rng.normal();

  prior.validate();
  return parts;
}

GeneratorParts build_ablation_generator(const GeneratorConfig& config, Rng& rng) {
  if (config.ablation == Ablation::None)
    throw std::invalid_argument("build_ablation_generator: ablation must be zero or overlap");
  GeneratorParts parts = build_generator(config, rng);
  if (config.ablation == Ablation::Overlap) {
    const std::uint64_t seed = rng.next_u64();
    Mlp shared = mlp_init({config.m * config.M, config.transition_hidden, config.m},
                          Activation::Cosine, derive_seed(seed, "overlap-shared"));
    Rng brng(derive_seed(seed, "overlap-bias"));
    for (auto& b : shared.biases)
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.3 * brng.normal();
    for (auto& tr : parts.prior.transitions) {
      OverlapBlend blend;
      blend.shared_net = shared;
      blend.lo = 3.0;
      blend.hi = 5.0;
      tr.overlap = blend;
    }
  }
  return parts;
}

void sample_sequences(const GroundTruth& gt, int first_index, int count,
                      std::vector<Mat>& z_out, std::vector<std::vector<int>>& s_out,
                      std::vector<Mat>& x_out) {
  const GeneratorConfig& cfg = gt.config;
  z_out.assign(count, Mat());
  s_out.assign(count, {});
  x_out.assign(count, Mat());
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(cfg.seed, "seq", static_cast<std::uint64_t>(first_index) + i));
    std::vector<int> chain = sample_regime_chain(cfg.K, cfg.T, cfg.M, rng);
    Mat z(cfg.T, cfg.m);
    const InitialComponent& comp = gt.prior.init[chain[0]];
    const Vec ivar = gt.prior.init_var(chain[0]);
    for (int t = 0; t < cfg.M; ++t)
      for (int d = 0; d < cfg.m; ++d) {
        const int idx = t * cfg.m + d;
        z(t, d) = comp.mean[idx] + std::sqrt(ivar[idx]) * rng.normal();
      }
    for (int t = cfg.M; t < cfg.T; ++t) {
      const int k = chain[t - cfg.M + 1];
      const Vec h = history_at(z, t, cfg.M);
      const Vec mean = gt.prior.mean_eval(k, h);
      const Vec var = gt.prior.cov_eval(k, mean);
      for (int d = 0; d < cfg.m; ++d) z(t, d) = mean[d] + std::sqrt(var[d]) * rng.normal();
    }
    Mat x(cfg.T, cfg.n);
    for (int t = 0; t < cfg.T; ++t) {
      Vec obs = mlp_forward(gt.decoder, z.row(t).transpose());
      for (int d = 0; d < cfg.n; ++d)
        obs[d] += std::sqrt(gt.obs_noise_var[d]) * rng.normal();
      x.row(t) = obs.transpose();
    }
    z_out[i] = std::move(z);
    s_out[i] = std::move(chain);
    x_out[i] = std::move(x);
  }
}

GroundTruth generate_dataset(const GeneratorConfig& config) {
  config.validate();
  GroundTruth gt;
  gt.config = config;
  Rng rng(derive_seed(config.seed, "generator"));
  GeneratorParts parts = config.ablation == Ablation::None
                             ? build_generator(config, rng)
                             : build_ablation_generator(config, rng);
  gt.prior = std::move(parts.prior);
  gt.decoder = std::move(parts.decoder);
  gt.graphs = std::move(parts.graphs);
  gt.obs_noise_var = Vec::Constant(config.n, config.obs_noise_var);

  sample_sequences(gt, 0, config.n_train, gt.z_train, gt.s_train, gt.x_train);
  sample_sequences(gt, config.n_train, config.n_eval, gt.z_eval, gt.s_eval, gt.x_eval);
  return gt;
}

}  // namespace isds
