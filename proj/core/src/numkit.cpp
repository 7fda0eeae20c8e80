#include "ebsaea/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ebsaea/error.hpp"

namespace ebsaea {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "ragged rows in Matrix::from_rows");
    }
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorCode::kShapeMismatch, "multiply: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix cholesky_decompose(const Matrix& a, double jitter) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw Error(ErrorCode::kShapeMismatch, "cholesky: matrix is not square");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > 1e-10) {
        throw Error(ErrorCode::kShapeMismatch, "cholesky: matrix is not symmetric");
      }
    }
  }
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j) + jitter;
    const auto lj = l.row(j);
    for (std::size_t k = 0; k < j; ++k) diag -= lj[k] * lj[k];
    if (!(diag > 0.0)) {
      throw Error(ErrorCode::kNotPositiveDefinite,
                  "non-positive pivot at column " + std::to_string(j));
    }
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      const auto li = l.row(i);
      for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
      l(i, j) = s / ljj;
    }
  }
  return l;
}

void solve_lower(const Matrix& lower, std::span<double> b) {
  const std::size_t n = lower.rows();
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    const auto li = lower.row(i);
    for (std::size_t k = 0; k < i; ++k) s -= li[k] * b[k];
    b[i] = s / li[i];
  }
}

void solve_lower_transposed(const Matrix& lower, std::span<double> b) {
  const std::size_t n = lower.rows();
  for (std::size_t ii = n; ii-- > 0;) {
    b[ii] /= lower(ii, ii);
    const double bi = b[ii];
    const auto li = lower.row(ii);
    for (std::size_t k = 0; k < ii; ++k) b[k] -= li[k] * bi;
  }
}

std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> b) {
  std::vector<double> y(b.begin(), b.end());
  solve_lower(lower, y);
  solve_lower_transposed(lower, y);
  return y;
}

double cholesky_log_det(const Matrix& lower) {
  double s = 0.0;
  for (std::size_t i = 0; i < lower.rows(); ++i) s += std::log(lower(i, i));
  return 2.0 * s;
}

Matrix cholesky_inverse(const Matrix& lower) {
  const std::size_t n = lower.rows();
  // Invert L column by column, then form L^{-T} L^{-1}.
  Matrix linv(n, n);
  std::vector<double> e(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    solve_lower(lower, e);
    for (std::size_t i = j; i < n; ++i) linv(i, j) = e[i];
  }
  Matrix inv(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = i; k < n; ++k) s += linv(k, i) * linv(k, j);
      inv(i, j) = s;
      inv(j, i) = s;
    }
  }
  return inv;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  std::uint64_t mix = seed;
  std::uint64_t s = splitmix64(mix);
  std::uint64_t sid = stream_id ^ 0x6a09e667f3bcc909ULL;
  s ^= splitmix64(sid);
  for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n <= 1) return 0;
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double RngStream::normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_normal_ = true;
  return radius * std::cos(angle);
}

RngStream RngStream::derive(std::uint64_t sub_id) const {
  std::uint64_t x = stream_id_ ^ (sub_id * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL);
  return RngStream(seed_ ^ splitmix64(x), stream_id_ * 0x9e3779b97f4a7c15ULL + sub_id + 1);
}

Bounds unit_bounds(std::size_t d) { return Bounds(d, Interval{0.0, 1.0}); }

void validate_bounds(const Bounds& bounds) {
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    if (!(bounds[k].lo < bounds[k].hi)) {
      throw Error(ErrorCode::kInvalidBounds, "lo >= hi in dimension " + std::to_string(k));
    }
  }
}

PointSet lhs_sample(std::size_t n, const Bounds& bounds, RngStream& rng) {
  validate_bounds(bounds);
  const std::size_t d = bounds.size();
  PointSet points(n, Point(d));
  std::vector<std::size_t> perm(n);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    const double lo = bounds[k].lo;
    const double width = bounds[k].width();
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (static_cast<double>(perm[i]) + rng.uniform()) / static_cast<double>(n);
      double v = lo + u * width;
      // Rounding must not push the sample out of its stratum's upper edge.
      const double stratum_hi = lo + width * static_cast<double>(perm[i] + 1) / static_cast<double>(n);
      if (v >= stratum_hi) v = std::nextafter(stratum_hi, lo);
      points[i][k] = v;
    }
  }
  return points;
}

PointSet uniform_sample(std::size_t n, const Bounds& bounds, RngStream& rng) {
  validate_bounds(bounds);
  PointSet points(n, Point(bounds.size()));
  for (auto& p : points)
    for (std::size_t k = 0; k < bounds.size(); ++k) p[k] = rng.uniform(bounds[k].lo, bounds[k].hi);
  return points;
}

namespace {

void lattice_recurse(std::size_t m, std::size_t h, std::size_t remaining, std::vector<std::size_t>& counts,
                     std::vector<std::vector<double>>& out) {
  const std::size_t pos = counts.size();
  if (pos + 1 == m) {
    counts.push_back(remaining);
    std::vector<double> w(m);
    for (std::size_t i = 0; i < m; ++i) w[i] = static_cast<double>(counts[i]) / static_cast<double>(h);
    out.push_back(std::move(w));
    counts.pop_back();
    return;
  }
  for (std::size_t c = remaining + 1; c-- > 0;) {
    counts.push_back(c);
    lattice_recurse(m, h, remaining - c, counts, out);
    counts.pop_back();
  }
}

}  // namespace

std::vector<std::vector<double>> simplex_lattice_weights(std::size_t m, std::size_t h) {
  if (m < 2 || h < 1) throw Error(ErrorCode::kInvalidConfig, "simplex lattice needs m >= 2 and h >= 1");
  std::vector<std::vector<double>> out;
  out.reserve(binomial(h + m - 1, m - 1));
  std::vector<std::size_t> counts;
  lattice_recurse(m, h, h, counts, out);
  return out;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "Adam::step size mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
  }
}

}  // namespace ebsaea
