#include "ebsaea/adapt.hpp"

#include <stdexcept>

#include "ebsaea/error.hpp"

namespace ebsaea {

// Internal access used by update() to assemble a rolled-back surrogate.
struct SurrogateAccess {
  static Surrogate with_state(const Surrogate& s, GpState state) {
    Surrogate out = s;
    out.state_ = std::move(state);
    return out;
  }
};

Surrogate::Surrogate(std::shared_ptr<const ExperienceParams> experience, AdaptConfig config)
    : experience_(std::move(experience)), config_(config) {
  if (!experience_) throw std::invalid_argument("Surrogate needs experience parameters");
}

TaskIncrements Surrogate::current_increments() const {
  return increments_ ? *increments_ : TaskIncrements::zeros(experience_->kernel.base.dim());
}

Prediction Surrogate::predict(std::span<const double> x) const {
  if (!state_) throw std::logic_error("Surrogate::predict before any fit");
  return state_->predict(x);
}

Surrogate adapt(const Surrogate& s, const Dataset& data, std::size_t steps) {
  if (data.size() < 2) throw Error(ErrorCode::kTooFewPoints, "adaptation needs at least 2 points");
  Surrogate out = s;
  TaskIncrements inc = s.current_increments();
  const auto& kernel = s.experience().kernel;
  const double nugget = noise_nugget(s.config().nugget, s.config().noise_variance, data.ys);
  if (steps > 0 && s.config().lr_beta != 0.0) {
    const FeatureData fd = prepare_features(kernel.mlp, data);
    std::vector<double> flat = inc.flatten();
    Adam adam(flat.size(), s.config().lr_beta);
    for (std::size_t step = 0; step < steps; ++step) {
      const auto lik = feature_likelihood(kernel.base, inc, fd, nugget);
      adam.step(flat, lik.grad_increments.flatten());
      inc.assign_flat(flat);
      clamp_increments(kernel.base, inc);
      flat = inc.flatten();
    }
  }
  out.increments_ = inc;
  out.state_ = fit_gp(kernel, inc, data, nugget);
  return out;
}

UpdateOutcome update(const Surrogate& s, const Dataset& archive) {
  if (archive.size() < 3) throw Error(ErrorCode::kTooFewPoints, "update needs at least 3 archive points");
  const auto& kernel = s.experience().kernel;
  const double nugget = noise_nugget(s.config().nugget, s.config().noise_variance, archive.ys);
  UpdateRecord rec;
  rec.e0 = loo_mse(kernel, s.current_increments(), archive, nugget);
  Surrogate candidate = adapt(s, archive, s.config().update_steps);
  rec.e1 = loo_mse(kernel, candidate.current_increments(), archive, nugget);
  rec.accepted = accept_update(rec.e0, rec.e1);
  if (rec.accepted) return {std::move(candidate), rec};
  return {SurrogateAccess::with_state(s, fit_gp(kernel, s.current_increments(), archive, nugget)), rec};
}

}  // namespace ebsaea
