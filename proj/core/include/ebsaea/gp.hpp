#pragma once

// Gaussian process with the concentrated likelihood: the constant prior mean
// and process variance are replaced by their generalized-least-squares
// estimates. Inputs are min-max scaled by the dataset bounds and outputs are
// standardized per fit.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ebsaea/deepkernel.hpp"
#include "ebsaea/numkit.hpp"

namespace ebsaea {

inline constexpr double kDefaultNugget = 1e-8;
inline constexpr double kMaxNugget = 1e-4;
inline constexpr double kSigma2Floor = 1e-12;

struct Dataset {
  PointSet xs;
  std::vector<double> ys;
  Bounds bounds;

  std::size_t size() const noexcept { return xs.size(); }
  std::size_t dim() const noexcept { return bounds.size(); }
  void push_back(Point x, double y);
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset without(std::size_t index) const;
  /// Throws on length mismatch or points outside bounds.
  void validate() const;
};

/// Maps x into [0,1]^d using the bounds.
Point scale_to_unit(std::span<const double> x, const Bounds& bounds);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Fitted GP. Immutable once built; `predict` is safe to call concurrently.
struct GpState {
  DeepKernelParams params;  // increments already folded into params.base
  Bounds bounds;
  PointSet xs;
  Matrix features;
  Matrix chol;
  std::vector<double> alpha;  // R^{-1}(y - 1 mu), standardized scale
  double mu_hat = 0.0;
  double sigma2_hat = 0.0;
  double y_mean = 0.0;
  double y_std = 1.0;
  double nugget = kDefaultNugget;

  Prediction predict(std::span<const double> x) const;
};

GpState fit_gp(const DeepKernelParams& params, const TaskIncrements& increments, const Dataset& data,
               double nugget = kDefaultNugget);

struct LikelihoodResult {
  double value = 0.0;
  DeepKernelParams grad;           // w.r.t. network and base kernel parameters
  TaskIncrements grad_increments;  // w.r.t. the increments
  double nugget = kDefaultNugget;  // nugget actually used after escalation
};

/// n/2 ln(2 pi sigma2) + 1/2 ln|R| + n/2 with analytic gradients.
LikelihoodResult neg_log_likelihood(const DeepKernelParams& params, const TaskIncrements& increments,
                                    const Dataset& data, double nugget = kDefaultNugget);

/// Dataset pushed through a fixed feature network. Reused while only the base
/// kernel parameters change, as during task adaptation.
struct FeatureData {
  Matrix features;
  std::vector<double> ys;  // standardized
  double y_mean = 0.0;
  double y_std = 1.0;
};

FeatureData prepare_features(const MlpParams& mlp, const Dataset& data);

/// Likelihood over cached features; only the base/increment gradients are filled.
LikelihoodResult feature_likelihood(const BaseKernelParams& base, const TaskIncrements& increments,
                                    const FeatureData& data, double nugget = kDefaultNugget);

/// Mean over i of the squared error of a fit on data \ {i} predicting y_i.
double loo_mse(const DeepKernelParams& params, const TaskIncrements& increments, const Dataset& data,
               double nugget = kDefaultNugget);

/// Nugget for observations with known noise: `nugget` plus the noise
/// variance on the standardized output scale of `ys`.
double noise_nugget(double nugget, double noise_variance, std::span<const double> ys);

/// Hyperparameter search for a plain GP (identity feature map).
struct PlainGpOptions {
  bool fit_p = false;    // false keeps p at `fixed_p`
  double fixed_p = 2.0;
  double learning_rate = 0.05;
  std::size_t steps = 150;
  std::vector<double> start_thetas{1.0, 10.0};
  double nugget = kDefaultNugget;
  double noise_variance = 0.0;  // raw output scale, see noise_nugget
};

/// Maximum-likelihood log-theta (and optionally p) by multi-start projected
/// Adam; `warm_start` is tried in addition to the isotropic starts.
DeepKernelParams fit_plain_gp(const Dataset& data, const PlainGpOptions& options,
                              const DeepKernelParams* warm_start = nullptr);

}  // namespace ebsaea
