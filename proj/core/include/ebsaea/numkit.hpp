#pragma once

// Deterministic numerical primitives: dense SPD linear algebra, seeded random
// streams, Latin-hypercube designs, simplex-lattice weights and Adam.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ebsaea {

using Point = std::vector<double>;
using PointSet = std::vector<Point>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double frobenius_norm(const Matrix& a);
Matrix multiply(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

/// Lower Cholesky factor of `a + jitter * I`.
///
/// Throws Error(kNotPositiveDefinite) when a pivot is not strictly positive and
/// Error(kShapeMismatch) when `a` is not square or not symmetric within 1e-10.
Matrix cholesky_decompose(const Matrix& a, double jitter = 0.0);

/// Solves L y = b in place.
void solve_lower(const Matrix& lower, std::span<double> b);
/// Solves L^T y = b in place.
void solve_lower_transposed(const Matrix& lower, std::span<double> b);
/// Solves (L L^T) y = b.
std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> b);
/// ln|L L^T|.
double cholesky_log_det(const Matrix& lower);
/// (L L^T)^{-1}, dense and symmetric.
Matrix cholesky_inverse(const Matrix& lower);

/// Reproducible random stream (xoshiro256** seeded through SplitMix64).
///
/// Distinct stream ids yield statistically independent sequences for the same
/// seed. All derived quantities are produced with explicit arithmetic so the
/// sequence does not depend on the standard library implementation.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);
  /// Standard normal via Box-Muller.
  double normal();

  /// Child stream; does not advance this stream.
  RngStream derive(std::uint64_t sub_id) const;

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t state_[4];
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double width() const noexcept { return hi - lo; }
  bool operator==(const Interval&) const = default;
};

using Bounds = std::vector<Interval>;

Bounds unit_bounds(std::size_t d);
/// Throws Error(kInvalidBounds) unless lo < hi in every dimension.
void validate_bounds(const Bounds& bounds);

/// Latin-hypercube design: one sample per equal-width stratum per dimension.
PointSet lhs_sample(std::size_t n, const Bounds& bounds, RngStream& rng);
PointSet uniform_sample(std::size_t n, const Bounds& bounds, RngStream& rng);

/// All weight vectors with m non-negative components that are multiples of
/// 1/h and sum to one (Das-Dennis lattice), in lexicographic order.
std::vector<std::vector<double>> simplex_lattice_weights(std::size_t m, std::size_t h);

/// Binomial coefficient C(n, k) (exact for the sizes used here).
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

/// Adam first-order optimizer over a flat parameter vector (descent).
class Adam {
 public:
  explicit Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace ebsaea
