#include "isds/metrics.hpp"

#include "isds/hungarian.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>

namespace isds {

using nlohmann::json;

AffineAlignment AffineAlignment::identity(int m) {
  AffineAlignment a;
  a.A = Mat::Identity(m, m);
  a.b = Vec::Zero(m);
  a.d = Vec::Ones(m);
  a.perm.resize(m);
  std::iota(a.perm.begin(), a.perm.end(), 0);
  return a;
}

Vec AffineAlignment::apply_inverse(const Vec& true_side) const {
  return A.partialPivLu().solve(true_side - b);
}

std::vector<int> gamma_argmax_labels(const Mat& gamma, int K) {
  std::vector<int> labels(gamma.rows());
  for (Eigen::Index r = 0; r < gamma.rows(); ++r) {
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (gamma(r, k) > gamma(r, best)) best = k;
    labels[r] = best;
  }
  return labels;
}

RegimeF1Result regime_f1(const std::vector<std::vector<int>>& true_labels,
                         const std::vector<std::vector<int>>& pred_labels, int k_true,
                         int k_pred) {
  if (true_labels.size() != pred_labels.size())
    throw ShapeError("regime_f1: sequence counts differ");

  Mat confusion = Mat::Zero(k_pred, k_true);
  for (std::size_t s = 0; s < true_labels.size(); ++s) {
    if (true_labels[s].size() != pred_labels[s].size())
      throw ShapeError("regime_f1: sequence lengths differ");
    for (std::size_t t = 0; t < true_labels[s].size(); ++t)
      confusion(pred_labels[s][t], true_labels[s][t]) += 1.0;
  }

  // Matching pred p to true c contributes F1 = 2 C(p,c) / (rowsum_p + colsum_c),
  // which is additive over the matching, so the assignment is exact.
  Mat score(k_true, k_pred);
  for (int c = 0; c < k_true; ++c)
    for (int p = 0; p < k_pred; ++p) {
      const double denom = confusion.row(p).sum() + confusion.col(c).sum();
      score(c, p) = denom > 0.0 ? 2.0 * confusion(p, c) / denom : 0.0;
    }
  const std::vector<int> match = hungarian_max(score);

  RegimeF1Result out;
  out.sigma = match;
  out.padded = k_pred < k_true;
  double total = 0.0;
  for (int c = 0; c < k_true; ++c)
    if (match[c] >= 0) total += score(c, match[c]);
  out.f1 = total / k_true;
  return out;
}

double mcc(const Mat& true_z, const Mat& est_z, MccMode mode) {
  if (true_z.rows() != est_z.rows()) throw ShapeError("mcc: sample counts differ");
  const int m = static_cast<int>(true_z.cols());
  const int me = static_cast<int>(est_z.cols());

  if (mode == MccMode::Weak) {
    // rank-tolerant least squares; a zero-variance estimated dimension keeps
    // its correlation at zero instead of failing the regression
    Mat X(est_z.rows(), me + 1);
    X.leftCols(me) = est_z;
    X.col(me).setOnes();
    const Mat beta = Eigen::CompleteOrthogonalDecomposition<Mat>(X).solve(true_z);
    const Mat mapped = X * beta;
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += std::abs(pearson(mapped.col(i), true_z.col(i)));
    return acc / m;
  }

  Mat corr(m, me);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < me; ++j) corr(i, j) = std::abs(pearson(true_z.col(i), est_z.col(j)));
  const std::vector<int> match = hungarian_max(corr);
  double acc = 0.0;
  for (int i = 0; i < m; ++i)
    if (match[i] >= 0) acc += corr(i, match[i]);
  return acc / m;
}

AffineAlignment fit_affine_alignment(const Mat& true_z, const Mat& est_z) {
  const int m = static_cast<int>(true_z.cols());
  const int me = static_cast<int>(est_z.cols());
  if (m != me) throw ShapeError("fit_affine_alignment: dimension mismatch");
  if (true_z.rows() < m + 1) throw ShapeError("fit_affine_alignment: need at least m+1 samples");

  Mat X(est_z.rows(), me + 1);
  X.leftCols(me) = est_z;
  X.col(me).setOnes();
  const Mat gram = X.transpose() * X;
  Eigen::FullPivLU<Mat> lu(gram);
  if (!lu.isInvertible())
    throw NumericError("fit_affine_alignment: rank-deficient regression");
  const Mat beta = lu.solve(X.transpose() * true_z);  // (m+1) x m

  AffineAlignment out;
  out.A = beta.topRows(me).transpose();
  out.b = beta.row(me).transpose();
  if (std::abs(out.A.determinant()) <= 1e-8)
    throw NumericError("fit_affine_alignment: alignment is numerically singular");

  // DP decomposition by per-row maximal absolute entries; collisions fall
  // back to the optimal assignment on |A|.
  out.perm.assign(m, -1);
  std::vector<char> used(m, 0);
  bool collision = false;
  for (int i = 0; i < m; ++i) {
    int arg = 0;
    for (int j = 1; j < m; ++j)
      if (std::abs(out.A(i, j)) > std::abs(out.A(i, arg))) arg = j;
    out.perm[i] = arg;
    if (used[arg]) collision = true;
    used[arg] = 1;
  }
  if (collision) out.perm = hungarian_max(out.A.cwiseAbs());
  out.d.resize(m);
  for (int i = 0; i < m; ++i) out.d[i] = out.A(i, out.perm[i]);
  return out;
}

RegimePartition partition_histories(const MsmModel& model, const std::vector<Trajectory>& probe) {
  const int K = model.K;
  const int M = model.M;
  std::vector<std::vector<Vec>> buckets(K);
  for (const auto& traj : probe) {
    const PosteriorMarginals post = msm_forward_backward(model, traj);
    for (int t = M; t < traj.length(); ++t) {
      int best = 0;
      const int row = t - M + 1;
      for (int k = 1; k < K; ++k)
        if (post.gamma(row, k) > post.gamma(row, best)) best = k;
      buckets[best].push_back(history_at(traj.z, t, M));
    }
  }
  RegimePartition out;
  out.histories.resize(K);
  for (int k = 0; k < K; ++k) {
    Mat rows(static_cast<int>(buckets[k].size()), model.m * M);
    for (std::size_t i = 0; i < buckets[k].size(); ++i)
      rows.row(static_cast<int>(i)) = buckets[k][i].transpose();
    out.histories[k] = std::move(rows);
  }
  return out;
}

namespace {

// Maps a true-space history into estimated latent coordinates blockwise.
Vec map_history_inverse(const AffineAlignment& align, const Vec& h, int m, int M) {
  Vec out(h.size());
  for (int b = 0; b < M; ++b)
    out.segment(b * m, m) = align.apply_inverse(h.segment(b * m, m));
  return out;
}

MeanFunctionMetrics mean_function_eval(const MsmModel& true_model, const MsmModel& est_model,
                                       const AffineAlignment& alignment,
                                       const std::vector<int>& sigma,
                                       const RegimePartition& partition) {
  const int K = true_model.K;
  const int m = true_model.m;
  const int M = true_model.M;
  MeanFunctionMetrics out;
  out.regime_used.assign(K, false);

  double l2_acc = 0.0, r2_acc = 0.0;
  int used = 0;
  for (int k = 0; k < K; ++k) {
    const Mat& rows = partition.histories[k];
    if (rows.rows() == 0 || sigma[k] < 0) continue;
    out.regime_used[k] = true;
    ++used;

    Mat true_out(rows.rows(), m);
    double sq_acc = 0.0;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      const Vec h = rows.row(i).transpose();
      const Vec mt = true_model.mean_eval(k, h);
      true_out.row(i) = mt.transpose();
      const Vec he = map_history_inverse(alignment, h, m, M);
      const Vec me = alignment.apply(est_model.mean_eval(sigma[k], he));
      sq_acc += (mt - me).squaredNorm();
    }
    const double l2_k = sq_acc / rows.rows();
    const Vec mean_t = true_out.colwise().mean().transpose();
    double var_k = 0.0;
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
      var_k += (true_out.row(i).transpose() - mean_t).squaredNorm();
    var_k /= rows.rows();
    l2_acc += l2_k;
    r2_acc += var_k > 0.0 ? 1.0 - l2_k / var_k : 0.0;
  }
  if (used == 0) throw NumericError("mean_function_l2: no supported regime");
  out.l2 = l2_acc / used;
  out.r2 = r2_acc / used;
  return out;
}

}  // namespace

MeanFunctionMetrics mean_function_l2(const MsmModel& true_model, const MsmModel& est_model,
                                     const AffineAlignment& alignment,
                                     const std::vector<int>& sigma,
                                     const RegimePartition& partition) {
  if (static_cast<int>(sigma.size()) != true_model.K)
    throw ShapeError("mean_function_l2: sigma size mismatch");
  return mean_function_eval(true_model, est_model, alignment, sigma, partition);
}

MeanFunctionMetrics mean_function_r2_best_perm(const MsmModel& true_model,
                                               const MsmModel& est_model,
                                               const AffineAlignment& alignment,
                                               const RegimePartition& partition,
                                               std::vector<int>* best_sigma) {
  const int K = true_model.K;
  if (K > 8) throw std::invalid_argument("mean_function_r2_best_perm: K too large to enumerate");
  std::vector<int> perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  MeanFunctionMetrics best;
  best.r2 = -std::numeric_limits<double>::infinity();
  std::vector<int> best_p;
  do {
    const MeanFunctionMetrics cur =
        mean_function_eval(true_model, est_model, alignment, perm, partition);
    if (cur.r2 > best.r2) {
      best = cur;
      best_p = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (best_sigma) *best_sigma = best_p;
  return best;
}

double causal_f1(const RegimeGraphSet& true_graphs, const RegimeGraphSet& est_graphs,
                 const std::vector<int>& sigma, const std::vector<int>& perm) {
  if (true_graphs.m != est_graphs.m || true_graphs.M != est_graphs.M)
    throw ShapeError("causal_f1: graph shapes differ");
  const int K = true_graphs.K;
  const int m = true_graphs.m;
  const int M = true_graphs.M;

  double acc = 0.0;
  for (int k = 0; k < K; ++k) {
    long tp = 0, est_count = 0, true_count = 0;
    for (int lag = 0; lag < M; ++lag)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          const bool t_edge = true_graphs.adj[k][lag](i, j) != 0.0;
          const bool e_edge =
              sigma[k] >= 0 &&
              est_graphs.adj[sigma[k]][lag](perm[i], perm[j]) != 0.0;
          tp += (t_edge && e_edge) ? 1 : 0;
          est_count += e_edge ? 1 : 0;
          true_count += t_edge ? 1 : 0;
        }
    const double precision = est_count > 0 ? static_cast<double>(tp) / est_count : 0.0;
    const double recall = true_count > 0 ? static_cast<double>(tp) / true_count : 0.0;
    acc += (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  return acc / K;
}

std::string MetricReport::to_json_string() const {
  json j;
  j["regime_f1"] = regime_f1;
  j["weak_mcc"] = weak_mcc;
  j["strong_mcc"] = strong_mcc;
  j["causal_f1"] = causal_f1;
  j["l2_err"] = l2_err;
  j["r2"] = r2;
  j["sigma"] = sigma;
  j["flags"] = flags;
  if (alignment.A.size() > 0) {
    std::vector<std::vector<double>> a;
    for (Eigen::Index r = 0; r < alignment.A.rows(); ++r) {
      std::vector<double> row(alignment.A.cols());
      for (Eigen::Index c = 0; c < alignment.A.cols(); ++c) row[c] = alignment.A(r, c);
      a.push_back(row);
    }
    j["alignment"]["A"] = a;
    j["alignment"]["b"] = std::vector<double>(alignment.b.data(),
                                              alignment.b.data() + alignment.b.size());
    j["alignment"]["perm"] = alignment.perm;
  }
  return j.dump(2);
}

std::string MetricReport::csv_header() {
  return "tag,seed,regime_f1,weak_mcc,strong_mcc,causal_f1,l2_err,r2";
}

std::string MetricReport::csv_row(const std::string& tag, std::uint64_t seed) const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%llu,%.6f,%.6f,%.6f,%.6f,%.6g,%.6f", tag.c_str(),
                static_cast<unsigned long long>(seed), regime_f1, weak_mcc, strong_mcc,
                causal_f1, l2_err, r2);
  return std::string(buf);
}

}  // namespace isds
