#include "ebsaea/deepkernel.hpp"

#include <algorithm>
#include <string>

#include "ebsaea/error.hpp"

namespace ebsaea {

MlpParams MlpParams::identity(std::size_t d) {
  MlpParams m;
  m.input_dim = d;
  return m;
}

MlpParams MlpParams::glorot(std::size_t d, std::span<const std::size_t> hidden, RngStream& rng) {
  MlpParams m;
  m.input_dim = d;
  std::size_t fan_in = d;
  auto add_layer = [&](std::size_t fan_out) {
    DenseLayer layer;
    layer.inputs = fan_in;
    layer.outputs = fan_out;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    layer.weights.resize(fan_in * fan_out);
    for (double& w : layer.weights) w = rng.uniform(-limit, limit);
    layer.biases.assign(fan_out, 0.0);
    m.layers.push_back(std::move(layer));
    fan_in = fan_out;
  };
  for (std::size_t h : hidden) add_layer(h);
  add_layer(d);
  return m;
}

std::vector<std::size_t> MlpParams::layer_sizes() const {
  std::vector<std::size_t> sizes{input_dim};
  for (const auto& layer : layers) sizes.push_back(layer.outputs);
  return sizes;
}

BaseKernelParams BaseKernelParams::uniform(std::size_t d, double theta, double p) {
  return {std::vector<double>(d, std::log(theta)), std::vector<double>(d, p)};
}

std::size_t DeepKernelParams::parameter_count() const {
  std::size_t n = base.log_theta.size() + base.p.size();
  for (const auto& layer : mlp.layers) n += layer.weights.size() + layer.biases.size();
  return n;
}

std::vector<double> DeepKernelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& layer : mlp.layers) {
    flat.insert(flat.end(), layer.weights.begin(), layer.weights.end());
    flat.insert(flat.end(), layer.biases.begin(), layer.biases.end());
  }
  flat.insert(flat.end(), base.log_theta.begin(), base.log_theta.end());
  flat.insert(flat.end(), base.p.begin(), base.p.end());
  return flat;
}

void DeepKernelParams::assign_flat(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw Error(ErrorCode::kShapeMismatch, "flat parameter vector has wrong length");
  }
  auto it = flat.begin();
  auto take = [&it](std::vector<double>& dst) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  for (auto& layer : mlp.layers) {
    take(layer.weights);
    take(layer.biases);
  }
  take(base.log_theta);
  take(base.p);
}

DeepKernelParams DeepKernelParams::zeros_like() const {
  DeepKernelParams z = *this;
  for (auto& layer : z.mlp.layers) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.biases.begin(), layer.biases.end(), 0.0);
  }
  std::fill(z.base.log_theta.begin(), z.base.log_theta.end(), 0.0);
  std::fill(z.base.p.begin(), z.base.p.end(), 0.0);
  return z;
}

void DeepKernelParams::clamp_base() {
  for (double& v : base.log_theta) v = std::clamp(v, kLogThetaMin, kLogThetaMax);
  for (double& v : base.p) v = std::clamp(v, kPMin, kPMax);
}

TaskIncrements TaskIncrements::zeros(std::size_t d) {
  return {std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
}

std::vector<double> TaskIncrements::flatten() const {
  std::vector<double> flat(delta_log_theta);
  flat.insert(flat.end(), delta_p.begin(), delta_p.end());
  return flat;
}

void TaskIncrements::assign_flat(std::span<const double> flat) {
  if (flat.size() != delta_log_theta.size() + delta_p.size()) {
    throw Error(ErrorCode::kShapeMismatch, "flat increment vector has wrong length");
  }
  const std::size_t d = delta_log_theta.size();
  std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(d), delta_log_theta.begin());
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(d), flat.end(), delta_p.begin());
}

BaseKernelParams effective_base(const BaseKernelParams& base, const TaskIncrements& inc) {
  if (inc.delta_log_theta.size() != base.dim() || inc.delta_p.size() != base.dim()) {
    throw Error(ErrorCode::kShapeMismatch, "increments do not match base kernel dimension");
  }
  BaseKernelParams eff = base;
  for (std::size_t k = 0; k < base.dim(); ++k) {
    eff.log_theta[k] = std::clamp(base.log_theta[k] + inc.delta_log_theta[k], kLogThetaMin, kLogThetaMax);
    eff.p[k] = std::clamp(base.p[k] + inc.delta_p[k], kPMin, kPMax);
  }
  return eff;
}

void clamp_increments(const BaseKernelParams& base, TaskIncrements& inc) {
  for (std::size_t k = 0; k < base.dim(); ++k) {
    const double lt = base.log_theta[k] + inc.delta_log_theta[k];
    if (lt < kLogThetaMin || lt > kLogThetaMax) {
      inc.delta_log_theta[k] = std::clamp(lt, kLogThetaMin, kLogThetaMax) - base.log_theta[k];
    }
    const double p = base.p[k] + inc.delta_p[k];
    if (p < kPMin || p > kPMax) inc.delta_p[k] = std::clamp(p, kPMin, kPMax) - base.p[k];
  }
}

namespace {

// Forward pass keeping every layer's pre-activation for backpropagation.
void forward_trace(const MlpParams& params, std::span<const double> x, std::vector<std::vector<double>>& pre,
                   std::vector<std::vector<double>>& act) {
  const std::size_t nl = params.layers.size();
  pre.resize(nl);
  act.resize(nl + 1);
  act[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < nl; ++l) {
    const DenseLayer& layer = params.layers[l];
    auto& z = pre[l];
    z.assign(layer.biases.begin(), layer.biases.end());
    const auto& a = act[l];
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double* w = layer.weights.data() + o * layer.inputs;
      double s = 0.0;
      for (std::size_t i = 0; i < layer.inputs; ++i) s += w[i] * a[i];
      z[o] += s;
    }
    auto& next = act[l + 1];
    next = z;
    if (l + 1 < nl) {
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    }
  }
}

void check_input(const MlpParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim) {
    throw Error(ErrorCode::kShapeMismatch, "input has length " + std::to_string(x.size()) + ", expected " +
                                               std::to_string(params.input_dim));
  }
}

}  // namespace

std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> x) {
  check_input(params, x);
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> z;
  const std::size_t nl = params.layers.size();
  for (std::size_t l = 0; l < nl; ++l) {
    const DenseLayer& layer = params.layers[l];
    z.assign(layer.biases.begin(), layer.biases.end());
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double* w = layer.weights.data() + o * layer.inputs;
      double s = 0.0;
      for (std::size_t i = 0; i < layer.inputs; ++i) s += w[i] * a[i];
      z[o] += s;
    }
    if (l + 1 < nl) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
    a.swap(z);
  }
  return a;
}

double base_kernel(const BaseKernelParams& base, std::span<const double> u, std::span<const double> v) {
  if (u.size() != base.dim() || v.size() != base.dim()) {
    throw Error(ErrorCode::kShapeMismatch, "base_kernel: feature length differs from kernel dimension");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < base.dim(); ++k) {
    const double diff = u[k] - v[k];
    const double term = base.p[k] == 2.0 ? diff * diff : abs_pow(diff, base.p[k]);
    s += std::exp(base.log_theta[k]) * term;
  }
  return std::exp(-s);
}

double deep_kernel(const DeepKernelParams& params, std::span<const double> xi, std::span<const double> xj) {
  const auto u = mlp_forward(params.mlp, xi);
  const auto v = mlp_forward(params.mlp, xj);
  return base_kernel(params.base, u, v);
}

Matrix feature_matrix(const MlpParams& params, const PointSet& xs) {
  Matrix f(xs.size(), params.output_dim());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto phi = mlp_forward(params, xs[i]);
    std::copy(phi.begin(), phi.end(), f.row(i).begin());
  }
  return f;
}

Matrix kernel_matrix_from_features(const BaseKernelParams& base, const Matrix& features, double nugget) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (d != base.dim()) throw Error(ErrorCode::kShapeMismatch, "feature width differs from kernel dimension");
  std::vector<double> theta(d);
  for (std::size_t k = 0; k < d; ++k) theta[k] = std::exp(base.log_theta[k]);
  Matrix r(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    r(i, i) = 1.0 + nugget;
    const auto fi = features.row(i);
    for (std::size_t j = 0; j < i; ++j) {
      const auto fj = features.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = fi[k] - fj[k];
        s += theta[k] * (base.p[k] == 2.0 ? diff * diff : abs_pow(diff, base.p[k]));
      }
      const double v = std::exp(-s);
      r(i, j) = v;
      r(j, i) = v;
    }
  }
  return r;
}

Matrix kernel_matrix(const DeepKernelParams& params, const PointSet& xs, double nugget) {
  return kernel_matrix_from_features(params.base, feature_matrix(params.mlp, xs), nugget);
}

BaseGradient base_kernel_gradients(const BaseKernelParams& base, const Matrix& features, const Matrix& cotangent,
                                   Matrix* feature_cotangent) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (cotangent.rows() != n || cotangent.cols() != n) {
    throw Error(ErrorCode::kShapeMismatch, "cotangent must be n x n");
  }
  if (d != base.dim()) throw Error(ErrorCode::kShapeMismatch, "feature width differs from kernel dimension");
  std::vector<double> theta(d);
  for (std::size_t k = 0; k < d; ++k) theta[k] = std::exp(base.log_theta[k]);
  BaseGradient g{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  if (feature_cotangent) *feature_cotangent = Matrix(n, d);

  std::vector<double> powed(d), logs(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto fi = features.row(i);
    for (std::size_t j = 0; j < i; ++j) {
      // Entries (i, j) and (j, i) share one value.
      const double c = cotangent(i, j) + cotangent(j, i);
      if (c == 0.0) continue;
      const auto fj = features.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double m = std::abs(fi[k] - fj[k]);
        if (m < 1e-300) {
          powed[k] = 0.0;
          logs[k] = 0.0;
        } else {
          logs[k] = std::log(m);
          powed[k] = base.p[k] == 2.0 ? m * m : std::exp(base.p[k] * logs[k]);
        }
        s += theta[k] * powed[k];
      }
      const double rij = std::exp(-s);
      const double w = -c * rij;
      for (std::size_t k = 0; k < d; ++k) {
        if (powed[k] == 0.0) continue;
        const double tp = theta[k] * powed[k];
        g.log_theta[k] += w * tp;
        g.p[k] += w * tp * logs[k];
        if (feature_cotangent) {
          const double diff = fi[k] - fj[k];
          // d|diff|^p / d diff = p |diff|^p / diff
          const double dfi = w * theta[k] * base.p[k] * powed[k] / diff;
          (*feature_cotangent)(i, k) += dfi;
          (*feature_cotangent)(j, k) -= dfi;
        }
      }
    }
  }
  return g;
}

void mlp_backward(const MlpParams& params, std::span<const double> x, std::span<const double> out_cotangent,
                  MlpParams& grad) {
  check_input(params, x);
  const std::size_t nl = params.layers.size();
  if (nl == 0) return;
  std::vector<std::vector<double>> pre, act;
  forward_trace(params, x, pre, act);
  std::vector<double> delta(out_cotangent.begin(), out_cotangent.end());
  std::vector<double> prev;
  for (std::size_t l = nl; l-- > 0;) {
    const DenseLayer& layer = params.layers[l];
    DenseLayer& g = grad.layers[l];
    const auto& a = act[l];
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double dz = delta[o];
      if (dz == 0.0) continue;
      g.biases[o] += dz;
      double* gw = g.weights.data() + o * layer.inputs;
      for (std::size_t i = 0; i < layer.inputs; ++i) gw[i] += dz * a[i];
    }
    if (l == 0) break;
    prev.assign(layer.inputs, 0.0);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double dz = delta[o];
      if (dz == 0.0) continue;
      const double* w = layer.weights.data() + o * layer.inputs;
      for (std::size_t i = 0; i < layer.inputs; ++i) prev[i] += dz * w[i];
    }
    const auto& z_prev = pre[l - 1];
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (!(z_prev[i] > 0.0)) prev[i] = 0.0;
    }
    delta.swap(prev);
  }
}

DeepKernelParams kernel_gradients(const DeepKernelParams& params, const PointSet& xs, const Matrix& cotangent) {
  for (const auto& x : xs) check_input(params.mlp, x);
  const Matrix features = feature_matrix(params.mlp, xs);
  Matrix dfeat;
  auto bg = base_kernel_gradients(params.base, features, cotangent, params.mlp.is_identity() ? nullptr : &dfeat);
  DeepKernelParams grad = params.zeros_like();
  grad.base.log_theta = std::move(bg.log_theta);
  grad.base.p = std::move(bg.p);
  if (!params.mlp.is_identity()) {
    for (std::size_t i = 0; i < xs.size(); ++i) mlp_backward(params.mlp, xs[i], dfeat.row(i), grad.mlp);
  }
  return grad;
}

}  // namespace ebsaea
