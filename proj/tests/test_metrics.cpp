#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "isds/hungarian.hpp"
#include "isds/metrics.hpp"
#include "isds/msm.hpp"
#include "isds/synthgen.hpp"
#include "support/util.hpp"

#include <algorithm>
#include <numeric>

using namespace isds;
using namespace isds::test;

namespace {

std::vector<std::vector<int>> random_labels(int seqs, int len, int K, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<int>> out(seqs, std::vector<int>(len));
  for (auto& s : out)
    for (auto& v : s) v = rng.uniform_int(K);
  return out;
}

Mat random_mat(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(rows, cols);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

double exhaustive_regime_f1(const std::vector<std::vector<int>>& truth,
                            const std::vector<std::vector<int>>& pred, int K) {
  std::vector<int> perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1.0;
  do {
    // perm[true_k] = predicted label matched to true class k
    Mat confusion = Mat::Zero(K, K);
    for (std::size_t s = 0; s < truth.size(); ++s)
      for (std::size_t t = 0; t < truth[s].size(); ++t)
        confusion(pred[s][t], truth[s][t]) += 1.0;
    double total = 0.0;
    for (int c = 0; c < K; ++c) {
      const int p = perm[c];
      const double denom = confusion.row(p).sum() + confusion.col(c).sum();
      total += denom > 0.0 ? 2.0 * confusion(p, c) / denom : 0.0;
    }
    best = std::max(best, total / K);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("perfect and relabeled predictions reach F1 = 1") {
  const auto truth = random_labels(5, 40, 3, 1);
  RegimeF1Result r = regime_f1(truth, truth, 3, 3);
  CHECK(r.f1 == doctest::Approx(1.0));
  CHECK(r.sigma == std::vector<int>{0, 1, 2});

  auto relabeled = truth;
  const std::vector<int> map = {2, 0, 1};
  for (auto& s : relabeled)
    for (auto& v : s) v = map[v];
  r = regime_f1(truth, relabeled, 3, 3);
  CHECK(r.f1 == doctest::Approx(1.0));
  CHECK(r.sigma == map);
}

TEST_CASE("assignment equals exhaustive permutation search") {
  for (int trial = 0; trial < 50; ++trial) {
    const int K = 2 + trial % 4;  // up to 5
    const auto truth = random_labels(3, 30, K, derive_seed(100, "t", trial));
    const auto pred = random_labels(3, 30, K, derive_seed(101, "p", trial));
    const RegimeF1Result r = regime_f1(truth, pred, K, K);
    CHECK(r.f1 == doctest::Approx(exhaustive_regime_f1(truth, pred, K)).epsilon(1e-12));
  }
}

TEST_CASE("fewer predicted classes pads and flags") {
  const auto truth = random_labels(2, 50, 3, 7);
  auto pred = truth;
  for (auto& s : pred)
    for (auto& v : s) v = std::min(v, 1);  // collapse class 2 into 1
  const RegimeF1Result r = regime_f1(truth, pred, 3, 2);
  CHECK(r.padded);
  CHECK(r.f1 < 1.0);
  CHECK(r.f1 > 0.0);
}

TEST_CASE("mcc is exact for identity, DP maps, and affine maps") {
  const Mat z = random_mat(500, 3, 11);
  CHECK(mcc(z, z, MccMode::Weak) == doctest::Approx(1.0));
  CHECK(mcc(z, z, MccMode::Strong) == doctest::Approx(1.0));

  // diagonal-times-permutation map: strong MCC stays exactly 1
  Mat dp = Mat::Zero(3, 3);
  dp(0, 2) = 1.7;
  dp(1, 0) = -0.6;
  dp(2, 1) = 2.3;
  Mat mapped = (z * dp.transpose()).rowwise() + Eigen::RowVector3d(0.5, -1.0, 2.0);
  CHECK(mcc(z, mapped, MccMode::Strong) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(mcc(z, mapped, MccMode::Weak) == doctest::Approx(1.0).epsilon(1e-9));

  // a generic invertible map keeps weak MCC at 1 but lowers strong MCC
  Mat a = random_mat(3, 3, 12);
  a += 3.0 * Mat::Identity(3, 3);
  mapped = z * a.transpose();
  CHECK(mcc(z, mapped, MccMode::Weak) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(mcc(z, mapped, MccMode::Strong) < 0.999);
}

TEST_CASE("weak mcc affine invariance across random well-conditioned maps") {
  for (int trial = 0; trial < 50; ++trial) {
    const Mat z = random_mat(300, 3, derive_seed(200, "z", trial));
    Mat a = random_mat(3, 3, derive_seed(201, "a", trial));
    a += 2.5 * Mat::Identity(3, 3);
    Eigen::JacobiSVD<Mat> svd(a);
    if (svd.singularValues()(2) < 1e-3 ||
        svd.singularValues()(0) / svd.singularValues()(2) > 1e3)
      continue;
    Rng rng(derive_seed(202, "b", trial));
    Eigen::RowVector3d b(rng.normal(), rng.normal(), rng.normal());
    const Mat mapped = (z * a.transpose()).rowwise() + b;
    CHECK(mcc(z, mapped, MccMode::Weak) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("zero-variance dimensions yield zero correlation instead of NaN") {
  Mat z = random_mat(100, 2, 13);
  Mat est = z;
  est.col(1).setConstant(3.0);
  const double weak = mcc(z, est, MccMode::Weak);
  CHECK(std::isfinite(weak));
  CHECK(weak < 1.0);
}

TEST_CASE("affine alignment recovers identity, inverse maps, and permutations") {
  const Mat z = random_mat(400, 3, 21);
  AffineAlignment align = fit_affine_alignment(z, z);
  CHECK((align.A - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(align.b.cwiseAbs().maxCoeff() < 1e-8);

  // est = 2 * true + 1  =>  A = 0.5 I, b = -0.5
  Mat est = 2.0 * z;
  est.array() += 1.0;
  align = fit_affine_alignment(z, est);
  CHECK((align.A - 0.5 * Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-8);
  for (int i = 0; i < 3; ++i) CHECK(align.b[i] == doctest::Approx(-0.5).epsilon(1e-8));

  // permuted est: P recovers the permutation
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(derive_seed(203, "perm", trial));
    std::vector<int> perm = {0, 1, 2};
    for (int i = 2; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    Mat permuted(z.rows(), 3);
    for (int i = 0; i < 3; ++i) permuted.col(i) = z.col(perm[i]) * (1.0 + 0.3 * i);
    // est dims hold permuted copies of true dims; fit maps est -> true
    align = fit_affine_alignment(z, permuted);
    for (int i = 0; i < 3; ++i) CHECK(perm[align.perm[i]] == i);
  }

  CHECK_THROWS_AS(fit_affine_alignment(Mat::Zero(10, 3), Mat::Zero(10, 3)), NumericError);
}

TEST_CASE("mean function metrics are exact on the generator itself") {
  GeneratorConfig cfg = generator_preset("B");
  cfg.seed = 31;
  cfg.n_train = 20;
  cfg.n_eval = 0;
  cfg.T = 60;
  const GroundTruth gt = generate_dataset(cfg);
  std::vector<Trajectory> probe(gt.z_train.size());
  for (std::size_t i = 0; i < gt.z_train.size(); ++i) probe[i].z = gt.z_train[i];
  const RegimePartition partition = partition_histories(gt.prior, probe);

  std::vector<int> identity = {0, 1, 2};
  const MeanFunctionMetrics metrics = mean_function_l2(
      gt.prior, gt.prior, AffineAlignment::identity(cfg.m), identity, partition);
  CHECK(metrics.l2 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(metrics.r2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mean function metrics undo an affine pushforward exactly") {
  GeneratorConfig cfg = generator_preset("B");
  cfg.seed = 32;
  cfg.n_train = 15;
  cfg.n_eval = 0;
  cfg.T = 50;
  const GroundTruth gt = generate_dataset(cfg);

  Vec scale(cfg.m), shift(cfg.m);
  scale << 1.4, 0.7, -1.1;
  shift << 0.3, -0.2, 0.9;
  const std::vector<int> node_perm = {2, 0, 1};
  MsmModel base = gt.prior;
  for (auto& tr : base.transitions) tr.mean_net.masks.clear();
  const MsmModel moved = affine_transform_model(base, scale, node_perm, shift);

  std::vector<Trajectory> probe(gt.z_train.size());
  for (std::size_t i = 0; i < gt.z_train.size(); ++i) probe[i].z = gt.z_train[i];
  const RegimePartition partition = partition_histories(gt.prior, probe);

  // moved latents are A z + b, so the alignment maps est -> true with A^{-1}
  AffineAlignment align;
  align.A = Mat::Zero(cfg.m, cfg.m);
  for (int i = 0; i < cfg.m; ++i) align.A(node_perm[i], i) = 1.0 / scale[i];
  align.b = Vec(cfg.m);
  Vec tmp(cfg.m);
  for (int i = 0; i < cfg.m; ++i) tmp[i] = -shift[i] / scale[i];
  for (int i = 0; i < cfg.m; ++i) align.b[node_perm[i]] = tmp[i];
  align.perm.resize(cfg.m);
  for (int i = 0; i < cfg.m; ++i) {
    int arg = 0;
    for (int j = 1; j < cfg.m; ++j)
      if (std::abs(align.A(i, j)) > std::abs(align.A(i, arg))) arg = j;
    align.perm[i] = arg;
  }
  align.d.resize(cfg.m);
  for (int i = 0; i < cfg.m; ++i) align.d[i] = align.A(i, align.perm[i]);

  std::vector<int> identity = {0, 1, 2};
  const MeanFunctionMetrics metrics =
      mean_function_l2(gt.prior, moved, align, identity, partition);
  CHECK(metrics.l2 == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(metrics.r2 == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("best-permutation R2 finds the relabeling") {
  GeneratorConfig cfg = generator_preset("A");
  cfg.seed = 33;
  cfg.n_train = 15;
  cfg.n_eval = 0;
  cfg.T = 50;
  const GroundTruth gt = generate_dataset(cfg);
  std::vector<Trajectory> probe(gt.z_train.size());
  for (std::size_t i = 0; i < gt.z_train.size(); ++i) probe[i].z = gt.z_train[i];
  const RegimePartition partition = partition_histories(gt.prior, probe);

  const std::vector<int> sigma = {1, 2, 0};
  const MsmModel permuted = permute_regimes(gt.prior, sigma);
  std::vector<int> found;
  const MeanFunctionMetrics metrics = mean_function_r2_best_perm(
      gt.prior, permuted, AffineAlignment::identity(cfg.m), partition, &found);
  CHECK(metrics.r2 == doctest::Approx(1.0).epsilon(1e-12));
  // permuted regime sigma[k] holds old regime k's net at new label position:
  // new label j holds old sigma[j], so matching true k needs sigma^{-1}(k)
  for (int k = 0; k < cfg.K; ++k) CHECK(sigma[found[k]] == k);
}

TEST_CASE("causal F1 handles identity, node permutations, and empty graphs") {
  RegimeGraphSet truth = RegimeGraphSet::zeros(2, 3, 2);
  Rng rng(41);
  for (int k = 0; k < 2; ++k)
    for (int lag = 0; lag < 2; ++lag)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) truth.adj[k][lag](i, j) = rng.uniform() < 0.5 ? 1.0 : 0.0;

  const std::vector<int> id_sigma = {0, 1};
  const std::vector<int> id_perm = {0, 1, 2};
  CHECK(causal_f1(truth, truth, id_sigma, id_perm) == doctest::Approx(1.0));

  // node-permuted estimate with the matching alignment permutation
  const std::vector<int> perm = {2, 0, 1};
  RegimeGraphSet est = truth;
  for (int k = 0; k < 2; ++k)
    for (int lag = 0; lag < 2; ++lag)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          // est lives in permuted coordinates: est(p(i), p(j)) = true(i, j)
          est.adj[k][lag](i, j) = 0.0;
        }
  std::vector<int> inv(3);
  for (int i = 0; i < 3; ++i) inv[perm[i]] = i;
  for (int k = 0; k < 2; ++k)
    for (int lag = 0; lag < 2; ++lag)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          if (truth.adj[k][lag](i, j) != 0.0) est.adj[k][lag](inv[i], inv[j]) = 1.0;
  CHECK(causal_f1(truth, est, id_sigma, inv) == doctest::Approx(1.0));

  RegimeGraphSet empty = RegimeGraphSet::zeros(2, 3, 2);
  CHECK(causal_f1(truth, empty, id_sigma, id_perm) == doctest::Approx(0.0));
}

TEST_CASE("causal F1 is invariant under conjugating both sides") {
  Rng rng(42);
  for (int trial = 0; trial < 30; ++trial) {
    RegimeGraphSet truth = RegimeGraphSet::zeros(2, 4, 1);
    RegimeGraphSet est = RegimeGraphSet::zeros(2, 4, 1);
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          truth.adj[k][0](i, j) = rng.uniform() < 0.4 ? 1.0 : 0.0;
          est.adj[k][0](i, j) = rng.uniform() < 0.4 ? 1.0 : 0.0;
        }
    std::vector<int> perm = {0, 1, 2, 3};
    for (int i = 3; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    const std::vector<int> sigma = {0, 1};
    const std::vector<int> id_perm = {0, 1, 2, 3};
    const double base = causal_f1(truth, est, sigma, id_perm);
    const double moved = causal_f1(permute_graph_nodes(truth, perm),
                                   permute_graph_nodes(est, perm), sigma, id_perm);
    CHECK(moved == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("hungarian solves small assignment problems exactly") {
  Mat cost(3, 3);
  cost << 4, 1, 3,
          2, 0, 5,
          3, 2, 2;
  const auto a = hungarian_min(cost);
  CHECK(a[0] == 1);
  CHECK(a[1] == 0);
  CHECK(a[2] == 2);

  // rectangular: more columns than rows
  Mat wide(2, 4);
  wide << 5, 1, 9, 9,
          1, 5, 9, 0;
  const auto w = hungarian_max(wide);
  CHECK(w[0] == 3);
  CHECK(w[1] == 2);
}
