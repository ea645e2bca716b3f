#include "isds/nnet.hpp"

namespace isds {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Cosine: return "cosine";
    case Activation::Softplus: return "softplus";
    case Activation::Gelu: return "gelu";
    case Activation::LeakyRelu: return "leaky_relu";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "cosine") return Activation::Cosine;
  if (name == "softplus") return Activation::Softplus;
  if (name == "gelu") return Activation::Gelu;
  if (name == "leaky_relu") return Activation::LeakyRelu;
  throw std::invalid_argument("unknown activation: " + name);
}

bool activation_is_analytic(Activation a) { return a != Activation::LeakyRelu; }

double act_eval(Activation a, double slope, double x) {
  switch (a) {
    case Activation::Cosine: return std::cos(x);
    case Activation::Softplus: return softplus(x);
    case Activation::Gelu: return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    case Activation::LeakyRelu: return x >= 0.0 ? x : slope * x;
  }
  return 0.0;
}

double act_deriv(Activation a, double slope, double x) {
  switch (a) {
    case Activation::Cosine: return -std::sin(x);
    case Activation::Softplus: return sigmoid(x);
    case Activation::Gelu: {
      const double phi = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * phi;
    }
    case Activation::LeakyRelu: return x >= 0.0 ? 1.0 : slope;
  }
  return 0.0;
}

double act_deriv2(Activation a, double slope, double x) {
  switch (a) {
    case Activation::Cosine: return -std::cos(x);
    case Activation::Softplus: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::Gelu: {
      const double phi = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      return (2.0 - x * x) * phi;
    }
    case Activation::LeakyRelu: return 0.0;
  }
  (void)slope;
  return 0.0;
}

Mlp mlp_init(const std::vector<int>& dims, Activation activation, std::uint64_t seed,
             double leaky_slope) {
  if (dims.size() < 2) throw ShapeError("mlp_init: need at least input and output dims");
  for (int d : dims)
    if (d <= 0) throw ShapeError("mlp_init: dims must be positive");
  if (activation == Activation::LeakyRelu && (leaky_slope <= 0.0 || leaky_slope >= 1.0))
    throw std::invalid_argument("mlp_init: leaky slope must lie in (0,1)");

  Mlp net;
  net.dims = dims;
  net.activation = activation;
  net.leaky_slope = leaky_slope;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Mat w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j) w(i, j) = rng.uniform(-a, a);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vec::Zero(fan_out));
  }
  return net;
}

Vec mlp_forward(const Mlp& net, const Vec& x) {
  if (x.size() != net.input_dim())
    throw ShapeError("mlp_forward: input has length " + std::to_string(x.size()) +
                     ", expected " + std::to_string(net.input_dim()));
  Vec h = x;
  const int L = net.layer_count();
  for (int l = 0; l < L; ++l) {
    Vec pre = net.weights[l] * h + net.biases[l];
    if (l + 1 == L) return pre;
    h.resize(pre.size());
    for (Eigen::Index i = 0; i < pre.size(); ++i)
      h[i] = act_eval(net.activation, net.leaky_slope, pre[i]);
  }
  return h;  // unreachable; layer_count >= 1
}

Vec mlp_forward_cached(const Mlp& net, const Vec& x, MlpCache& cache) {
  if (x.size() != net.input_dim())
    throw ShapeError("mlp_forward_cached: bad input length");
  const int L = net.layer_count();
  cache.preacts.resize(L);
  cache.acts.resize(L);
  cache.acts[0] = x;
  for (int l = 0; l < L; ++l) {
    cache.preacts[l] = net.weights[l] * cache.acts[l] + net.biases[l];
    if (l + 1 < L) {
      Vec& a = cache.acts[l + 1];
      a.resize(cache.preacts[l].size());
      for (Eigen::Index i = 0; i < a.size(); ++i)
        a[i] = act_eval(net.activation, net.leaky_slope, cache.preacts[l][i]);
    }
  }
  return cache.preacts[L - 1];
}

MlpGradients mlp_gradients_zero(const Mlp& net) {
  MlpGradients g;
  g.d_weights.reserve(net.layer_count());
  g.d_biases.reserve(net.layer_count());
  for (int l = 0; l < net.layer_count(); ++l) {
    g.d_weights.push_back(Mat::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.d_biases.push_back(Vec::Zero(net.biases[l].size()));
  }
  g.d_input = Vec::Zero(net.input_dim());
  return g;
}

void mlp_backward_accum(const Mlp& net, const MlpCache& cache, const Vec& upstream,
                        MlpGradients& out, bool want_input_grad) {
  const int L = net.layer_count();
  if (upstream.size() != net.output_dim())
    throw ShapeError("mlp_backward: upstream has wrong length");
  Vec delta = upstream;
  for (int l = L - 1; l >= 0; --l) {
    out.d_weights[l].noalias() += delta * cache.acts[l].transpose();
    out.d_biases[l] += delta;
    if (l == 0 && !want_input_grad) return;
    Vec next = net.weights[l].transpose() * delta;
    if (l == 0) {
      out.d_input += next;
      return;
    }
    for (Eigen::Index i = 0; i < next.size(); ++i)
      next[i] *= act_deriv(net.activation, net.leaky_slope, cache.preacts[l - 1][i]);
    delta = std::move(next);
  }
}

MlpGradients mlp_backward(const Mlp& net, const Vec& x, const Vec& upstream) {
  MlpCache cache;
  mlp_forward_cached(net, x, cache);
  MlpGradients g = mlp_gradients_zero(net);
  mlp_backward_accum(net, cache, upstream, g);
  return g;
}

Mat mlp_jacobian(const Mlp& net, const Vec& x) {
  const int out = net.output_dim();
  const int in = net.input_dim();
  MlpCache cache;
  mlp_forward_cached(net, x, cache);
  Mat jac(out, in);
  MlpGradients g = mlp_gradients_zero(net);
  for (int r = 0; r < out; ++r) {
    g.d_input.setZero();
    Vec e = Vec::Zero(out);
    e[r] = 1.0;
    mlp_backward_accum(net, cache, e, g);
    jac.row(r) = g.d_input.transpose();
  }
  return jac;
}

void mlp_jacobian_weighted_param_grad(const Mlp& net, const Vec& x, const Mat& coeff,
                                      MlpGradients& out) {
  const int L = net.layer_count();
  if (coeff.rows() != net.output_dim() || coeff.cols() != net.input_dim())
    throw ShapeError("mlp_jacobian_weighted_param_grad: bad coefficient shape");

  MlpCache cache;
  mlp_forward_cached(net, x, cache);

  // activation derivative diagonals per hidden layer
  std::vector<Vec> dact(L - 1);
  for (int l = 0; l + 1 < L; ++l) {
    dact[l].resize(cache.preacts[l].size());
    for (Eigen::Index i = 0; i < dact[l].size(); ++i)
      dact[l][i] = act_deriv(net.activation, net.leaky_slope, cache.preacts[l][i]);
  }

  // J = W_{L-1} D_{L-2} W_{L-2} ... D_0 W_0
  // right[l] = D_{l-1} W_{l-1} ... W_0 (identity-side product feeding layer l)
  // left[l]  = W_{L-1} D_{L-2} ... D_l (product applied after W_l)
  std::vector<Mat> right(L), left(L);
  right[0] = Mat::Identity(net.input_dim(), net.input_dim());
  for (int l = 1; l < L; ++l) right[l] = dact[l - 1].asDiagonal() * (net.weights[l - 1] * right[l - 1]);
  left[L - 1] = Mat::Identity(net.output_dim(), net.output_dim());
  for (int l = L - 2; l >= 0; --l) left[l] = (left[l + 1] * net.weights[l + 1]) * dact[l].asDiagonal();

  // direct terms: dPhi/dW_l via the explicit W_l factor
  for (int l = 0; l < L; ++l)
    out.d_weights[l].noalias() += left[l].transpose() * coeff * right[l].transpose();

  // indirect terms through D_j, whose preactivations depend on layers <= j
  for (int j = 0; j + 1 < L; ++j) {
    // sensitivity of Phi to the diagonal entries of D_j
    const Mat around = (left[j + 1] * net.weights[j + 1]).transpose() * coeff *
                       (net.weights[j] * right[j]).transpose();
    Vec dphi_dpre(cache.preacts[j].size());
    for (Eigen::Index i = 0; i < dphi_dpre.size(); ++i)
      dphi_dpre[i] = around(i, i) * act_deriv2(net.activation, net.leaky_slope, cache.preacts[j][i]);
    // backprop dphi_dpre from preacts[j] to the parameters of layers 0..j
    Vec delta = dphi_dpre;
    for (int l = j; l >= 0; --l) {
      out.d_weights[l].noalias() += delta * cache.acts[l].transpose();
      out.d_biases[l] += delta;
      if (l == 0) break;
      Vec next = net.weights[l].transpose() * delta;
      for (Eigen::Index i = 0; i < next.size(); ++i)
        next[i] *= act_deriv(net.activation, net.leaky_slope, cache.preacts[l - 1][i]);
      delta = std::move(next);
    }
  }
}

void MaskedMlp::apply_masks() {
  if (masks.empty()) return;
  if (masks.size() != net.weights.size())
    throw ShapeError("MaskedMlp: mask count does not match layer count");
  for (std::size_t l = 0; l < masks.size(); ++l)
    net.weights[l] = net.weights[l].cwiseProduct(masks[l]);
}

std::vector<Mat> dependency_masks(const std::vector<int>& dims, int m, int num_lags,
                                  const std::vector<Mat>& adjacency) {
  if (dims.size() != 3) throw ShapeError("dependency_masks: expects one hidden layer");
  if (dims[0] != m * num_lags || dims[2] != m)
    throw ShapeError("dependency_masks: dims inconsistent with (m, lags)");
  if (static_cast<int>(adjacency.size()) != num_lags)
    throw ShapeError("dependency_masks: need one adjacency per lag");
  const int hidden = dims[1];
  if (hidden < m) throw ShapeError("dependency_masks: hidden width below output width");

  Mat mask1 = Mat::Zero(hidden, dims[0]);
  Mat mask2 = Mat::Zero(m, hidden);
  for (int u = 0; u < hidden; ++u) {
    const int j = u % m;  // output this hidden unit serves
    mask2(j, u) = 1.0;
    for (int lag = 0; lag < num_lags; ++lag)
      for (int i = 0; i < m; ++i)
        if (adjacency[lag](j, i) != 0.0) mask1(u, lag * m + i) = 1.0;
  }
  return {mask1, mask2};
}

}  // namespace isds
