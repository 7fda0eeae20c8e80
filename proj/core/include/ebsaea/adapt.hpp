#pragma once

// Task adaptation on top of learned experiences and the MSE-gated update that
// decides whether a further adaptation is kept or rolled back.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>

#include "ebsaea/gp.hpp"
#include "ebsaea/meta.hpp"

namespace ebsaea {

struct AdaptConfig {
  double lr_beta = 1e-3;
  std::size_t adapt_steps = 100;  // first adaptation on the initial design
  std::size_t update_steps = 10;  // per update call
  double nugget = kDefaultNugget;
  double noise_variance = 0.0;  // raw output scale, see noise_nugget
};

/// Experience-based surrogate: frozen experiences, task increments, fitted GP.
class Surrogate {
 public:
  Surrogate(std::shared_ptr<const ExperienceParams> experience, AdaptConfig config);

  const ExperienceParams& experience() const noexcept { return *experience_; }
  const std::shared_ptr<const ExperienceParams>& experience_ptr() const noexcept { return experience_; }
  const AdaptConfig& config() const noexcept { return config_; }
  const std::optional<TaskIncrements>& increments() const noexcept { return increments_; }
  const std::optional<GpState>& state() const noexcept { return state_; }

  /// Increments in effect; zero before the first adaptation.
  TaskIncrements current_increments() const;

  /// Throws std::logic_error when no GP has been fitted yet.
  Prediction predict(std::span<const double> x) const;

 private:
  friend Surrogate adapt(const Surrogate&, const Dataset&, std::size_t);
  friend struct SurrogateAccess;

  std::shared_ptr<const ExperienceParams> experience_;
  AdaptConfig config_;
  std::optional<TaskIncrements> increments_;
  std::optional<GpState> state_;
};

/// Adam steps on the increments only (network and base kernel frozen), then a
/// GP refit on `data`.
Surrogate adapt(const Surrogate& s, const Dataset& data, std::size_t steps);
inline Surrogate adapt(const Surrogate& s, const Dataset& data) {
  return adapt(s, data, s.config().adapt_steps);
}

/// Strict improvement keeps the candidate; ties roll back.
inline bool accept_update(double e0, double e1) { return e0 > e1; }

struct UpdateRecord {
  bool accepted = false;
  double e0 = 0.0;
  double e1 = 0.0;
};

struct UpdateOutcome {
  Surrogate surrogate;
  UpdateRecord record;
};

/// Leave-one-out MSE before and after a short adaptation on `archive`; keeps
/// the adapted increments only if the error strictly drops. Either way the
/// returned surrogate is refitted on the full archive.
UpdateOutcome update(const Surrogate& s, const Dataset& archive);

}  // namespace ebsaea
