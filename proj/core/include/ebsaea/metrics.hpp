#pragma once

// Quality indicators, Pareto-front reference sets and the rank-sum test used
// to compare repeated runs.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "ebsaea/numkit.hpp"
#include "ebsaea/tasks.hpp"

namespace ebsaea {

/// True when a is no worse than b everywhere and better somewhere.
bool dominates(std::span<const double> a, std::span<const double> b);

/// Indices of the mutually nondominated points, in input order. Exact
/// duplicates keep their first occurrence.
std::vector<std::size_t> nondominated_indices(const PointSet& points);

/// Mean over reference points of the distance to the nearest archive point,
/// counting only the coordinates where the archive point is worse.
double igd_plus(const PointSet& reference, const PointSet& archive);

/// Points on the front of the canonical DTLZ function.
PointSet pf_reference(Family family, std::size_t m, std::size_t n_points, RngStream& rng);

double mse(std::span<const double> pred, std::span<const double> truth);
/// mse divided by the population variance of truth.
double nmse(std::span<const double> pred, std::span<const double> truth);

struct RankSumResult {
  double statistic = 0.0;  // rank sum of the first sample, midranks for ties
  double p_value = 1.0;    // two-sided
  bool exact = false;
};

/// Exact permutation p-value for |a| + |b| <= 12, otherwise the normal
/// approximation with tie correction.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b);

struct SampleSummary {
  double mean = 0.0;
  double std = 0.0;  // n - 1 denominator, 0 for a single value
  double median = 0.0;
  std::size_t n = 0;
};

SampleSummary summarize(std::span<const double> values);

enum class Verdict { kWin, kTie, kLoss };
std::string_view to_string(Verdict v);

/// Smaller is better. A win or loss needs p < alpha in the rank-sum test;
/// the direction follows the medians.
Verdict compare_samples(std::span<const double> candidate, std::span<const double> baseline, double alpha = 0.05);

}  // namespace ebsaea
