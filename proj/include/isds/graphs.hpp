#pragma once

#include "isds/common.hpp"

#include <vector>

namespace isds {

// Lagged latent causal structure per regime: adj[k][lag](j, i) = 1 iff
// z^(i)_{t-lag-1} is a parent of z^(j)_t under regime k.
struct RegimeGraphSet {
  int K = 0;
  int m = 0;
  int M = 0;
  std::vector<std::vector<Mat>> adj;
  std::vector<bool> supported;  // false when no probe sample hit the regime

  static RegimeGraphSet zeros(int K, int m, int M) {
    RegimeGraphSet g;
    g.K = K;
    g.m = m;
    g.M = M;
    g.adj.assign(K, std::vector<Mat>(M, Mat::Zero(m, m)));
    g.supported.assign(K, true);
    return g;
  }

  long edge_count(int k) const {
    long n = 0;
    for (const Mat& a : adj[k]) n += static_cast<long>(a.sum());
    return n;
  }
};

// Conjugates every adjacency by the node permutation perm (perm[i] = source
// index), i.e. out(i, j) = in(perm[i], perm[j]).
inline RegimeGraphSet permute_graph_nodes(const RegimeGraphSet& g, const std::vector<int>& perm) {
  RegimeGraphSet out = g;
  for (int k = 0; k < g.K; ++k)
    for (int lag = 0; lag < g.M; ++lag)
      for (int i = 0; i < g.m; ++i)
        for (int j = 0; j < g.m; ++j) out.adj[k][lag](i, j) = g.adj[k][lag](perm[i], perm[j]);
  return out;
}

}  // namespace isds
