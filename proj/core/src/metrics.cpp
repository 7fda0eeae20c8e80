#include "ebsaea/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "ebsaea/error.hpp"

namespace ebsaea {

bool dominates(std::span<const double> a, std::span<const double> b) {
  bool better = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) better = true;
  }
  return better;
}

std::vector<std::size_t> nondominated_indices(const PointSet& points) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
      if (j == i) continue;
      dominated = dominates(points[j], points[i]) || (j < i && points[j] == points[i]);
    }
    if (!dominated) keep.push_back(i);
  }
  return keep;
}

double igd_plus(const PointSet& reference, const PointSet& archive) {
  if (reference.empty() || archive.empty()) throw Error(ErrorCode::kEmptySet, "igd_plus needs nonempty sets");
  const std::size_t m = reference.front().size();
  for (const auto& a : archive)
    if (a.size() != m) throw Error(ErrorCode::kShapeMismatch, "objective counts differ");
  double total = 0.0;
  for (const auto& z : reference) {
    if (z.size() != m) throw Error(ErrorCode::kShapeMismatch, "objective counts differ");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : archive) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double e = std::max(a[i] - z[i], 0.0);
        s += e * e;
      }
      best = std::min(best, s);
    }
    total += std::sqrt(best);
  }
  return total / static_cast<double>(reference.size());
}

namespace {

PointSet thin(PointSet pts, std::size_t n, RngStream& rng) {
  if (pts.size() <= n) return pts;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.uniform_index(pts.size() - i);
    std::swap(pts[i], pts[j]);
  }
  pts.resize(n);
  return pts;
}

// DTLZ7 front: f_i = y_i for i < m, so on a regular grid over y a point is
// dominated exactly when some grid point below it in every y coordinate has
// an f_m no larger. A prefix minimum over the grid answers that for all
// points at once.
PointSet dtlz7_front(std::size_t m, std::size_t n_points, RngStream& rng) {
  const std::size_t dims = m - 1;
  const auto per_dim =
      static_cast<std::size_t>(std::ceil(std::pow(1e5, 1.0 / static_cast<double>(dims)) - 1e-9));
  std::size_t total = 1;
  for (std::size_t k = 0; k < dims; ++k) total *= per_dim;
  std::vector<std::size_t> stride(dims, 1);
  for (std::size_t k = 1; k < dims; ++k) stride[k] = stride[k - 1] * per_dim;

  const TaskSpec spec = canonical_dtlz(Family::kDtlz7, m, m);
  std::vector<double> fm(total);
  PointSet objectives(total);
  Point x(m, 0.0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    for (std::size_t k = 0; k < dims; ++k) {
      x[k] = static_cast<double>((idx / stride[k]) % per_dim) / static_cast<double>(per_dim - 1);
    }
    objectives[idx] = eval_dtlz(spec, x).objectives;
    fm[idx] = objectives[idx][m - 1];
  }
  std::vector<double> prefix = fm;
  for (std::size_t k = 0; k < dims; ++k) {
    for (std::size_t idx = 0; idx < total; ++idx) {
      if ((idx / stride[k]) % per_dim > 0) prefix[idx] = std::min(prefix[idx], prefix[idx - stride[k]]);
    }
  }
  PointSet front;
  for (std::size_t idx = 0; idx < total; ++idx) {
    double below = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < dims; ++k) {
      if ((idx / stride[k]) % per_dim > 0) below = std::min(below, prefix[idx - stride[k]]);
    }
    if (below > fm[idx]) front.push_back(objectives[idx]);
  }
  return thin(std::move(front), n_points, rng);
}

}  // namespace

PointSet pf_reference(Family family, std::size_t m, std::size_t n_points, RngStream& rng) {
  if (!is_dtlz(family)) throw Error(ErrorCode::kUnsupportedFamily, "reference fronts exist for DTLZ families only");
  if (m < 2) throw Error(ErrorCode::kDimensionError, "reference fronts need m >= 2");
  if (n_points == 0) throw Error(ErrorCode::kInvalidConfig, "reference set needs at least one point");
  PointSet out;
  out.reserve(n_points);
  switch (family) {
    case Family::kDtlz1:
      for (std::size_t i = 0; i < n_points; ++i) {
        Point p(m);
        double s = 0.0;
        for (double& v : p) {
          v = -std::log1p(-rng.uniform());
          s += v;
        }
        for (double& v : p) v *= 0.5 / s;
        out.push_back(std::move(p));
      }
      return out;
    case Family::kDtlz2:
    case Family::kDtlz3:
    case Family::kDtlz4:
      for (std::size_t i = 0; i < n_points; ++i) {
        Point p(m);
        double s = 0.0;
        do {
          s = 0.0;
          for (double& v : p) {
            v = std::abs(rng.normal());
            s += v * v;
          }
        } while (s < 1e-24);
        s = std::sqrt(s);
        for (double& v : p) v /= s;
        out.push_back(std::move(p));
      }
      return out;
    case Family::kDtlz5:
    case Family::kDtlz6: {
      // Angles: the first sweeps [0, pi/2], the others sit at pi/4.
      const double pi = std::numbers::pi;
      for (std::size_t i = 0; i < n_points; ++i) {
        const double t = n_points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n_points - 1);
        std::vector<double> angle(m - 1, pi / 4.0);
        angle[0] = t * pi / 2.0;
        Point p(m);
        for (std::size_t j = 0; j < m; ++j) {
          double f = 1.0;
          for (std::size_t k = 0; k < m - 1 - j; ++k) f *= std::cos(angle[k]);
          if (j > 0) f *= std::sin(angle[m - 1 - j]);
          p[j] = f;
        }
        out.push_back(std::move(p));
      }
      return out;
    }
    case Family::kDtlz7:
      return dtlz7_front(m, n_points, rng);
    default:
      throw Error(ErrorCode::kUnsupportedFamily, "no reference front for this family");
  }
}

double mse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw Error(ErrorCode::kLengthMismatch, "pred and truth lengths differ");
  if (pred.empty()) throw Error(ErrorCode::kLengthMismatch, "mse of empty sequences");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double nmse(std::span<const double> pred, std::span<const double> truth) {
  const double e = mse(pred, truth);
  const double n = static_cast<double>(truth.size());
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double var = 0.0;
  for (double t : truth) var += (t - mean) * (t - mean);
  var /= n;
  if (!(var > 0.0)) throw Error(ErrorCode::kZeroVariance, "nmse needs truth with nonzero variance");
  return e / var;
}

namespace {

std::vector<double> midranks(std::span<const double> values, std::vector<std::size_t>* tie_sizes) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    if (tie_sizes) tie_sizes->push_back(j - i + 1);
    i = j + 1;
  }
  return ranks;
}

}  // namespace

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 3 || b.size() < 3) throw Error(ErrorCode::kTooFewSamples, "rank-sum test needs 3 values per sample");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<std::size_t> ties;
  const auto ranks = midranks(pooled, &ties);
  const std::size_t na = a.size();
  const std::size_t n = pooled.size();
  RankSumResult res;
  res.statistic = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(na), 0.0);
  const double expected = static_cast<double>(na) * static_cast<double>(n + 1) / 2.0;
  const double observed = std::abs(res.statistic - expected);

  if (n <= 12) {
    res.exact = true;
    std::size_t extreme = 0;
    std::size_t total = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != na) continue;
      double w = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (1u << i)) w += ranks[i];
      ++total;
      if (std::abs(w - expected) >= observed - 1e-9) ++extreme;
    }
    res.p_value = static_cast<double>(extreme) / static_cast<double>(total);
    return res;
  }

  const double nb = static_cast<double>(b.size());
  const double nn = static_cast<double>(n);
  double tie_term = 0.0;
  for (std::size_t t : ties) {
    const double td = static_cast<double>(t);
    tie_term += td * td * td - td;
  }
  const double var = static_cast<double>(na) * nb / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (!(var > 0.0)) {
    res.p_value = 1.0;
    return res;
  }
  const double z = observed / std::sqrt(var);
  res.p_value = std::min(1.0, std::erfc(z / std::numbers::sqrt2));
  return res;
}

SampleSummary summarize(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptySet, "summary of an empty sample");
  SampleSummary s;
  s.n = values.size();
  const double n = static_cast<double>(s.n);
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  s.median = s.n % 2 ? sorted[s.n / 2] : 0.5 * (sorted[s.n / 2 - 1] + sorted[s.n / 2]);
  return s;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kWin:
      return "win";
    case Verdict::kLoss:
      return "loss";
    default:
      return "tie";
  }
}

Verdict compare_samples(std::span<const double> candidate, std::span<const double> baseline, double alpha) {
  if (candidate.size() < 3 || baseline.size() < 3) return Verdict::kTie;
  const auto test = wilcoxon_rank_sum(candidate, baseline);
  if (test.p_value >= alpha) return Verdict::kTie;
  return summarize(candidate).median < summarize(baseline).median ? Verdict::kWin : Verdict::kLoss;
}

}  // namespace ebsaea
