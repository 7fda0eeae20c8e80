#pragma once

// Task families: noisy sinusoids, parameterized DTLZ1-7 variants and a
// synthetic constrained single-objective family.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ebsaea/gp.hpp"
#include "ebsaea/numkit.hpp"

namespace ebsaea {

enum class Family { kSinusoid, kDtlz1, kDtlz2, kDtlz3, kDtlz4, kDtlz5, kDtlz6, kDtlz7, kConstrained };
enum class Regime { kInRange, kOutOfRange };
enum class Sampling { kLhs, kUniform };

std::string_view to_string(Family f);
std::string_view to_string(Regime r);
/// Throws Error(kInvalidConfig) for unknown names.
Family family_from_string(std::string_view name);
Regime regime_from_string(std::string_view name);  // "in", "in-range", "out", "out-of-range"
bool is_dtlz(Family f);

inline constexpr double kSinusoidNoiseSd = 0.1;
inline constexpr std::size_t kConstrainedDim = 6;
inline constexpr std::size_t kConstrainedCount = 4;

/// One member of a task family.
///
/// params layout: sinusoid {A, w, b}; DTLZ1 and DTLZ7 {a_1..a_M};
/// DTLZ2-6 {a_1..a_M, b_1..b_M}; constrained {c(6), o(6), a_1..a_4 (6 each), b(4)}.
struct TaskSpec {
  Family family = Family::kDtlz2;
  std::size_t d = 10;
  std::size_t m = 3;
  std::vector<double> params;
  Bounds bounds;
  std::size_t n_constraints = 0;
  std::optional<std::uint64_t> seed;

  std::size_t channel_count() const noexcept { return m + n_constraints; }
  bool operator==(const TaskSpec&) const = default;
};

struct Evaluation {
  std::vector<double> objectives;
  std::vector<double> constraints;  // feasible iff all <= 0

  bool feasible() const;
  /// Objectives followed by constraints.
  std::vector<double> outputs() const;
};

TaskSpec sinusoid_spec(double amplitude, double frequency, double phase);
TaskSpec sample_sinusoid(RngStream& rng);
/// A sin(w x + b), plus N(0, 0.1^2) noise when `noise` is given.
double eval_sinusoid(const TaskSpec& spec, double x, RngStream* noise);

/// Original DTLZ function: a = 1 (DTLZ7: a_1..a_{M-1} = 0, a_M = 1), b = 2.
TaskSpec canonical_dtlz(Family family, std::size_t d = 10, std::size_t m = 3);
TaskSpec sample_dtlz_variant(Family family, Regime regime, RngStream& rng, std::size_t d = 10, std::size_t m = 3);
/// Throws Error(kDimensionError) when x is not in R^d or d < m.
Evaluation eval_dtlz(const TaskSpec& spec, std::span<const double> x);

/// Throws Error(kFeasibilityCalibrationFailed) after 100 rejected draws.
TaskSpec sample_constrained(RngStream& rng);
Evaluation eval_constrained(const TaskSpec& spec, std::span<const double> x);
/// Monte-Carlo feasible fraction over `samples` uniform points.
double feasible_fraction(const TaskSpec& spec, std::size_t samples, RngStream& rng);

/// Dispatch on the family; sinusoid noise is drawn only if `noise` is given.
Evaluation evaluate(const TaskSpec& spec, std::span<const double> x, RngStream* noise = nullptr);

/// n evaluations, one dataset per output channel (objectives, then constraints).
std::vector<Dataset> generate_dataset(const TaskSpec& spec, std::size_t n, Sampling sampling, RngStream& rng);

nlohmann::json task_to_json(const TaskSpec& spec);
TaskSpec task_from_json(const nlohmann::json& doc);

}  // namespace ebsaea
