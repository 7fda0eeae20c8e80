#pragma once

// Deep kernel: a feed-forward feature map composed with the per-dimension
// exponential correlation kernel
//
//   k(x, x') = exp(-sum_k theta_k |phi_k(x) - phi_k(x')|^{p_k}).
//
// theta is carried in log space. Gradients are accumulated by hand in reverse
// mode through the kernel entries and the network.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ebsaea/numkit.hpp"

namespace ebsaea {

inline const double kLogThetaMin = std::log(1e-5);
inline const double kLogThetaMax = std::log(100.0);
inline constexpr double kPMin = 1.0;
inline constexpr double kPMax = 2.0;

/// Fully connected layer; `weights` is outputs x inputs, row-major.
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  bool operator==(const DenseLayer&) const = default;
};

/// ReLU network with a linear output layer. No layers means the identity map.
struct MlpParams {
  std::size_t input_dim = 0;
  std::vector<DenseLayer> layers;

  static MlpParams identity(std::size_t d);
  /// d -> hidden... -> d, Glorot-uniform weights and zero biases.
  static MlpParams glorot(std::size_t d, std::span<const std::size_t> hidden, RngStream& rng);

  std::size_t output_dim() const noexcept {
    return layers.empty() ? input_dim : layers.back().outputs;
  }
  bool is_identity() const noexcept { return layers.empty(); }
  /// {input, hidden..., output}; {d} for the identity map.
  std::vector<std::size_t> layer_sizes() const;

  bool operator==(const MlpParams&) const = default;
};

struct BaseKernelParams {
  std::vector<double> log_theta;
  std::vector<double> p;

  static BaseKernelParams uniform(std::size_t d, double theta, double p);
  std::size_t dim() const noexcept { return log_theta.size(); }

  bool operator==(const BaseKernelParams&) const = default;
};

struct DeepKernelParams {
  MlpParams mlp;
  BaseKernelParams base;

  std::size_t input_dim() const noexcept { return mlp.input_dim; }
  std::size_t parameter_count() const;
  /// Layer weights and biases in order, then log_theta, then p.
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);
  /// Same layout with every entry zero; used as a gradient accumulator.
  DeepKernelParams zeros_like() const;
  void clamp_base();

  bool operator==(const DeepKernelParams&) const = default;
};

/// Task-specific offsets added to the base kernel parameters.
struct TaskIncrements {
  std::vector<double> delta_log_theta;
  std::vector<double> delta_p;

  static TaskIncrements zeros(std::size_t d);
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);

  bool operator==(const TaskIncrements&) const = default;
};

/// Base parameters with increments applied and clamped into the valid box.
BaseKernelParams effective_base(const BaseKernelParams& base, const TaskIncrements& inc);

/// Rewrites `inc` so that base + inc lies inside the clamping box.
void clamp_increments(const BaseKernelParams& base, TaskIncrements& inc);

/// |a|^p as exp(p ln|a|), zero below 1e-300.
inline double abs_pow(double a, double p) {
  const double m = std::abs(a);
  return m < 1e-300 ? 0.0 : std::exp(p * std::log(m));
}

std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> x);

double base_kernel(const BaseKernelParams& base, std::span<const double> u, std::span<const double> v);
double deep_kernel(const DeepKernelParams& params, std::span<const double> xi, std::span<const double> xj);

/// Feature rows phi(x_i) for every input (n x output_dim).
Matrix feature_matrix(const MlpParams& params, const PointSet& xs);

/// Correlation matrix over precomputed feature rows, with `nugget` on the diagonal.
Matrix kernel_matrix_from_features(const BaseKernelParams& base, const Matrix& features, double nugget);
Matrix kernel_matrix(const DeepKernelParams& params, const PointSet& xs, double nugget);

/// sum_ij C_ij dR_ij / d(log_theta, p), and optionally dL/d(features).
struct BaseGradient {
  std::vector<double> log_theta;
  std::vector<double> p;
};
BaseGradient base_kernel_gradients(const BaseKernelParams& base, const Matrix& features,
                                   const Matrix& cotangent, Matrix* feature_cotangent);

/// Accumulates d(sum_k out_cot_k phi_k(x))/d(weights, biases) into `grad`.
void mlp_backward(const MlpParams& params, std::span<const double> x, std::span<const double> out_cotangent,
                  MlpParams& grad);

/// Gradient of sum_ij C_ij R_ij with respect to every scalar in `params`.
DeepKernelParams kernel_gradients(const DeepKernelParams& params, const PointSet& xs, const Matrix& cotangent);

}  // namespace ebsaea
