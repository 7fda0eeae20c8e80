#include "ebsaea/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "ebsaea/error.hpp"

namespace ebsaea {

void Dataset::push_back(Point x, double y) {
  xs.push_back(std::move(x));
  ys.push_back(y);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.bounds = bounds;
  out.xs.reserve(indices.size());
  out.ys.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(xs.at(i), ys.at(i));
  return out;
}

Dataset Dataset::without(std::size_t index) const {
  Dataset out;
  out.bounds = bounds;
  for (std::size_t i = 0; i < size(); ++i) {
    if (i != index) out.push_back(xs[i], ys[i]);
  }
  return out;
}

void Dataset::validate() const {
  if (xs.size() != ys.size()) throw Error(ErrorCode::kLengthMismatch, "dataset xs and ys differ in length");
  validate_bounds(bounds);
  for (const auto& x : xs) {
    if (x.size() != bounds.size()) throw Error(ErrorCode::kShapeMismatch, "dataset point has wrong dimension");
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (x[k] < bounds[k].lo || x[k] > bounds[k].hi) {
        throw Error(ErrorCode::kInvalidBounds, "dataset point outside bounds in dimension " + std::to_string(k));
      }
    }
  }
}

Point scale_to_unit(std::span<const double> x, const Bounds& bounds) {
  if (x.size() != bounds.size()) throw Error(ErrorCode::kShapeMismatch, "point dimension differs from bounds");
  Point u(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) u[k] = (x[k] - bounds[k].lo) / bounds[k].width();
  return u;
}

namespace {

struct Standardized {
  std::vector<double> ys;
  double mean = 0.0;
  double std = 1.0;
};

Standardized standardize(std::span<const double> ys) {
  Standardized s;
  const double n = static_cast<double>(ys.size());
  s.mean = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double var = 0.0;
  for (double y : ys) var += (y - s.mean) * (y - s.mean);
  var /= n;
  s.std = std::max(std::sqrt(var), 1e-12);
  s.ys.resize(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) s.ys[i] = (ys[i] - s.mean) / s.std;
  return s;
}

PointSet scaled_inputs(const Dataset& data) {
  PointSet u;
  u.reserve(data.size());
  for (const auto& x : data.xs) u.push_back(scale_to_unit(x, data.bounds));
  return u;
}

// Cholesky of R with nugget escalation (x10 up to kMaxNugget).
struct Factorized {
  Matrix chol;
  double nugget = 0.0;
  std::vector<double> alpha;
  double mu = 0.0;
  double sigma2 = 0.0;
  bool sigma_floored = false;
};

Factorized factorize(const Matrix& correlation, std::span<const double> ys, double nugget) {
  const std::size_t n = ys.size();
  if (n < 2) throw Error(ErrorCode::kTooFewPoints, "a GP fit needs at least 2 points");
  Factorized f;
  double nug = nugget;
  for (;;) {
    try {
      f.chol = cholesky_decompose(correlation, nug);
      f.nugget = nug;
      break;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotPositiveDefinite) throw;
      nug = nug > 0.0 ? nug * 10.0 : kDefaultNugget;
      if (nug > kMaxNugget * (1.0 + 1e-9)) {
        throw Error(ErrorCode::kNotPositiveDefinite, "correlation matrix singular even with nugget 1e-4");
      }
    }
  }
  const std::vector<double> ones(n, 1.0);
  const auto rinv1 = cholesky_solve(f.chol, ones);
  const auto rinvy = cholesky_solve(f.chol, ys);
  const double denom = std::accumulate(rinv1.begin(), rinv1.end(), 0.0);
  f.mu = std::accumulate(rinvy.begin(), rinvy.end(), 0.0) / denom;
  f.alpha.resize(n);
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    f.alpha[i] = rinvy[i] - f.mu * rinv1[i];
    q += (ys[i] - f.mu) * f.alpha[i];
  }
  f.sigma2 = q / static_cast<double>(n);
  if (!(f.sigma2 >= kSigma2Floor)) {
    f.sigma2 = kSigma2Floor;
    f.sigma_floored = true;
  }
  if (!std::isfinite(f.mu) || !std::isfinite(f.sigma2)) {
    throw Error(ErrorCode::kNotPositiveDefinite, "non-finite GP estimates");
  }
  return f;
}

// Value and gradient w.r.t. the effective base parameters and the features.
struct RawLikelihood {
  double value = 0.0;
  BaseGradient base;
  Matrix feature_cotangent;
  double nugget = 0.0;
};

RawLikelihood raw_likelihood(const BaseKernelParams& eff, const Matrix& features, std::span<const double> ys,
                             double nugget, bool want_features) {
  const std::size_t n = ys.size();
  const Matrix corr = kernel_matrix_from_features(eff, features, 0.0);
  Factorized f = factorize(corr, ys, nugget);
  RawLikelihood out;
  out.nugget = f.nugget;
  const double nd = static_cast<double>(n);
  out.value = 0.5 * nd * std::log(2.0 * std::numbers::pi * f.sigma2) + 0.5 * cholesky_log_det(f.chol) + 0.5 * nd;

  // dL/dR = R^{-1}/2 - alpha alpha^T / (2 sigma2); mu is stationary so it drops out.
  Matrix cot = cholesky_inverse(f.chol);
  const double scale = f.sigma_floored ? 0.0 : 1.0 / (2.0 * f.sigma2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) cot(i, j) = 0.5 * cot(i, j) - scale * f.alpha[i] * f.alpha[j];
  }
  out.base = base_kernel_gradients(eff, features, cot, want_features ? &out.feature_cotangent : nullptr);
  return out;
}

// Splits the effective-parameter gradient onto base and increments; zero where clamped.
void chain_through_clamp(const BaseKernelParams& base, const TaskIncrements& inc, const BaseGradient& g,
                         std::vector<double>& d_log_theta, std::vector<double>& d_p) {
  const std::size_t d = base.dim();
  d_log_theta.assign(d, 0.0);
  d_p.assign(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double lt = base.log_theta[k] + inc.delta_log_theta[k];
    if (lt >= kLogThetaMin && lt <= kLogThetaMax) d_log_theta[k] = g.log_theta[k];
    const double p = base.p[k] + inc.delta_p[k];
    if (p >= kPMin && p <= kPMax) d_p[k] = g.p[k];
  }
}

}  // namespace

Prediction GpState::predict(std::span<const double> x) const {
  const Point u = scale_to_unit(x, bounds);
  const auto phi = mlp_forward(params.mlp, u);
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  std::vector<double> theta(d);
  for (std::size_t k = 0; k < d; ++k) theta[k] = std::exp(params.base.log_theta[k]);
  std::vector<double> r(n);
  double mean = mu_hat;
  for (std::size_t i = 0; i < n; ++i) {
    const auto fi = features.row(i);
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = phi[k] - fi[k];
      s += theta[k] * (params.base.p[k] == 2.0 ? diff * diff : abs_pow(diff, params.base.p[k]));
    }
    r[i] = std::exp(-s);
    mean += r[i] * alpha[i];
  }
  solve_lower(chol, r);
  double rr = 0.0;
  for (double v : r) rr += v * v;
  const double var = std::max(0.0, sigma2_hat * (1.0 - rr));
  return {y_mean + y_std * mean, y_std * y_std * var};
}

GpState fit_gp(const DeepKernelParams& params, const TaskIncrements& increments, const Dataset& data,
               double nugget) {
  if (data.size() < 2) throw Error(ErrorCode::kTooFewPoints, "fit_gp needs at least 2 points");
  if (data.dim() != params.input_dim()) throw Error(ErrorCode::kShapeMismatch, "dataset dimension != kernel input");
  GpState s;
  s.params = params;
  s.params.base = effective_base(params.base, increments);
  s.bounds = data.bounds;
  s.xs = data.xs;
  s.features = feature_matrix(params.mlp, scaled_inputs(data));
  const Standardized st = standardize(data.ys);
  const Matrix corr = kernel_matrix_from_features(s.params.base, s.features, 0.0);
  Factorized f = factorize(corr, st.ys, nugget);
  s.chol = std::move(f.chol);
  s.alpha = std::move(f.alpha);
  s.mu_hat = f.mu;
  s.sigma2_hat = f.sigma2;
  s.y_mean = st.mean;
  s.y_std = st.std;
  s.nugget = f.nugget;
  return s;
}

LikelihoodResult neg_log_likelihood(const DeepKernelParams& params, const TaskIncrements& increments,
                                    const Dataset& data, double nugget) {
  if (data.size() < 2) throw Error(ErrorCode::kTooFewPoints, "likelihood needs at least 2 points");
  if (data.dim() != params.input_dim()) throw Error(ErrorCode::kShapeMismatch, "dataset dimension != kernel input");
  const PointSet u = scaled_inputs(data);
  const Matrix features = feature_matrix(params.mlp, u);
  const Standardized st = standardize(data.ys);
  const BaseKernelParams eff = effective_base(params.base, increments);
  const bool deep = !params.mlp.is_identity();
  RawLikelihood raw = raw_likelihood(eff, features, st.ys, nugget, deep);

  LikelihoodResult out;
  out.value = raw.value;
  out.nugget = raw.nugget;
  out.grad = params.zeros_like();
  out.grad_increments = TaskIncrements::zeros(eff.dim());
  chain_through_clamp(params.base, increments, raw.base, out.grad.base.log_theta, out.grad.base.p);
  out.grad_increments.delta_log_theta = out.grad.base.log_theta;
  out.grad_increments.delta_p = out.grad.base.p;
  if (deep) {
    for (std::size_t i = 0; i < u.size(); ++i) {
      mlp_backward(params.mlp, u[i], raw.feature_cotangent.row(i), out.grad.mlp);
    }
  }
  return out;
}

FeatureData prepare_features(const MlpParams& mlp, const Dataset& data) {
  FeatureData fd;
  fd.features = feature_matrix(mlp, scaled_inputs(data));
  Standardized st = standardize(data.ys);
  fd.ys = std::move(st.ys);
  fd.y_mean = st.mean;
  fd.y_std = st.std;
  return fd;
}

LikelihoodResult feature_likelihood(const BaseKernelParams& base, const TaskIncrements& increments,
                                    const FeatureData& data, double nugget) {
  const BaseKernelParams eff = effective_base(base, increments);
  RawLikelihood raw = raw_likelihood(eff, data.features, data.ys, nugget, false);
  LikelihoodResult out;
  out.value = raw.value;
  out.nugget = raw.nugget;
  out.grad_increments = TaskIncrements::zeros(eff.dim());
  chain_through_clamp(base, increments, raw.base, out.grad_increments.delta_log_theta, out.grad_increments.delta_p);
  out.grad.base.log_theta = out.grad_increments.delta_log_theta;
  out.grad.base.p = out.grad_increments.delta_p;
  return out;
}

double noise_nugget(double nugget, double noise_variance, std::span<const double> ys) {
  if (noise_variance <= 0.0 || ys.size() < 2) return nugget;
  const double n = static_cast<double>(ys.size());
  const double mean = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double var = 0.0;
  for (double y : ys) var += (y - mean) * (y - mean);
  var /= n;
  return var > 0.0 ? nugget + noise_variance / var : nugget;
}

double loo_mse(const DeepKernelParams& params, const TaskIncrements& increments, const Dataset& data,
               double nugget) {
  const std::size_t n = data.size();
  if (n < 3) throw Error(ErrorCode::kTooFewPoints, "leave-one-out MSE needs at least 3 points");
  const BaseKernelParams eff = effective_base(params.base, increments);
  const Matrix all_features = feature_matrix(params.mlp, scaled_inputs(data));
  const Matrix full_corr = kernel_matrix_from_features(eff, all_features, 0.0);
  double total = 0.0;
  std::vector<double> ys_rest(n - 1);
  Matrix corr(n - 1, n - 1);
  std::vector<double> r(n - 1);
  for (std::size_t hold = 0; hold < n; ++hold) {
    for (std::size_t i = 0, a = 0; i < n; ++i) {
      if (i == hold) continue;
      ys_rest[a] = data.ys[i];
      r[a] = full_corr(hold, i);
      for (std::size_t j = 0, b = 0; j < n; ++j) {
        if (j == hold) continue;
        corr(a, b) = full_corr(i, j);
        ++b;
      }
      ++a;
    }
    const Standardized st = standardize(ys_rest);
    const Factorized f = factorize(corr, st.ys, nugget);
    double mean = f.mu;
    for (std::size_t i = 0; i < n - 1; ++i) mean += r[i] * f.alpha[i];
    const double pred = st.mean + st.std * mean;
    const double err = pred - data.ys[hold];
    total += err * err;
  }
  return total / static_cast<double>(n);
}

DeepKernelParams fit_plain_gp(const Dataset& data, const PlainGpOptions& options,
                              const DeepKernelParams* warm_start) {
  const std::size_t d = data.dim();
  if (data.size() < 2) throw Error(ErrorCode::kTooFewPoints, "fit_plain_gp needs at least 2 points");
  const FeatureData fd = prepare_features(MlpParams::identity(d), data);

  std::vector<BaseKernelParams> starts;
  if (warm_start && warm_start->mlp.is_identity() && warm_start->base.dim() == d) starts.push_back(warm_start->base);
  for (double theta : options.start_thetas) starts.push_back(BaseKernelParams::uniform(d, theta, options.fixed_p));

  const TaskIncrements zero = TaskIncrements::zeros(d);
  const double nugget = noise_nugget(options.nugget, options.noise_variance, data.ys);
  const double inf = std::numeric_limits<double>::infinity();
  auto evaluate = [&](const BaseKernelParams& b) -> std::optional<LikelihoodResult> {
    try {
      return feature_likelihood(b, zero, fd, nugget);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotPositiveDefinite) throw;
      return std::nullopt;
    }
  };

  BaseKernelParams best = starts.front();
  double best_value = inf;
  for (BaseKernelParams current : starts) {
    if (!options.fit_p) std::fill(current.p.begin(), current.p.end(), options.fixed_p);
    const std::size_t nvar = options.fit_p ? 2 * d : d;
    Adam adam(nvar, options.learning_rate);
    std::vector<double> flat(nvar), grad(nvar);
    for (std::size_t step = 0; step <= options.steps; ++step) {
      const auto lik = evaluate(current);
      if (!lik) break;
      if (lik->value < best_value) {
        best_value = lik->value;
        best = current;
      }
      if (step == options.steps) break;
      for (std::size_t k = 0; k < d; ++k) {
        flat[k] = current.log_theta[k];
        grad[k] = lik->grad_increments.delta_log_theta[k];
        if (options.fit_p) {
          flat[d + k] = current.p[k];
          grad[d + k] = lik->grad_increments.delta_p[k];
        }
      }
      adam.step(flat, grad);
      for (std::size_t k = 0; k < d; ++k) {
        current.log_theta[k] = std::clamp(flat[k], kLogThetaMin, kLogThetaMax);
        if (options.fit_p) current.p[k] = std::clamp(flat[d + k], kPMin, kPMax);
      }
    }
  }
  if (!std::isfinite(best_value)) {
    throw Error(ErrorCode::kNotPositiveDefinite, "no plain-GP start produced a valid likelihood");
  }
  return {MlpParams::identity(d), best};
}

}  // namespace ebsaea
