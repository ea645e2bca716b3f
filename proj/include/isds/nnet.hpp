#pragma once

#include "isds/common.hpp"
#include "isds/rng.hpp"

#include <vector>

namespace isds {

// Activation placed between layers; the final layer is always affine.
// Cosine/Softplus/Gelu are analytic, LeakyRelu is piecewise linear.
enum class Activation { Cosine, Softplus, Gelu, LeakyRelu };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

bool activation_is_analytic(Activation a);

double act_eval(Activation a, double slope, double x);
double act_deriv(Activation a, double slope, double x);
double act_deriv2(Activation a, double slope, double x);

// Fully connected multilayer perceptron over doubles.
// weights[l] has shape dims[l+1] x dims[l]; biases[l] has length dims[l+1].
struct Mlp {
  std::vector<int> dims;
  std::vector<Mat> weights;
  std::vector<Vec> biases;
  Activation activation = Activation::Softplus;
  double leaky_slope = 0.01;  // used only when activation == LeakyRelu

  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }
  int layer_count() const { return static_cast<int>(weights.size()); }
};

// Gradients of (upstream . mlp_forward(net, x)) with the same shapes as the net,
// plus the gradient with respect to the input.
struct MlpGradients {
  std::vector<Mat> d_weights;
  std::vector<Vec> d_biases;
  Vec d_input;
};

// Scratch for forward passes that feed a backward pass.
struct MlpCache {
  std::vector<Vec> preacts;  // one per layer, length dims[l+1]
  std::vector<Vec> acts;     // activations per layer; acts[0] is the input
};

// Glorot-uniform initialization, reproducible from the seed.
Mlp mlp_init(const std::vector<int>& dims, Activation activation, std::uint64_t seed,
             double leaky_slope = 0.01);

Vec mlp_forward(const Mlp& net, const Vec& x);
Vec mlp_forward_cached(const Mlp& net, const Vec& x, MlpCache& cache);

MlpGradients mlp_gradients_zero(const Mlp& net);

// Exact gradients of upstream . forward(x); accumulates into `out`.
void mlp_backward_accum(const Mlp& net, const MlpCache& cache, const Vec& upstream,
                        MlpGradients& out, bool want_input_grad = true);
MlpGradients mlp_backward(const Mlp& net, const Vec& x, const Vec& upstream);

// Exact Jacobian (out_dim x in_dim), built by row-stacking backward passes over
// the canonical upstream basis so it matches mlp_backward bitwise.
Mat mlp_jacobian(const Mlp& net, const Vec& x);

// Gradient of sum_ij C_ij * J_ij(x) with respect to all parameters, where J is
// the input Jacobian at x. Needs second derivatives of the activation, so it is
// exact for analytic activations and almost-everywhere exact for LeakyRelu.
void mlp_jacobian_weighted_param_grad(const Mlp& net, const Vec& x, const Mat& coeff,
                                      MlpGradients& out);

// An Mlp whose weights are constrained by per-layer binary masks. Evaluation is
// identical to the base net; masked entries must be re-zeroed after every
// parameter update.
struct MaskedMlp {
  Mlp net;
  std::vector<Mat> masks;  // same shapes as net.weights; empty means dense

  bool masked() const { return !masks.empty(); }
  void apply_masks();
};

// Masks for a single-hidden-layer net mapping lagged histories (m*M inputs,
// most recent lag first) to m outputs, such that output j depends exactly on
// the inputs marked as parents. Hidden units are assigned round-robin to
// outputs. adjacency[lag] is m x m with entry (j, i) = 1 iff i -> j at lag+1.
std::vector<Mat> dependency_masks(const std::vector<int>& dims, int m, int num_lags,
                                  const std::vector<Mat>& adjacency);

}  // namespace isds
