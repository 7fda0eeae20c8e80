#pragma once

// The optimization loop: an initial Latin-hypercube design, one surrogate per
// output channel, batches of proposals from a decomposition-based
// multi-objective EGO or a constrained EGO, and per-channel surrogate updates
// until the evaluation budget is spent.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ebsaea/adapt.hpp"
#include "ebsaea/gp.hpp"
#include "ebsaea/meta.hpp"
#include "ebsaea/numkit.hpp"
#include "ebsaea/tasks.hpp"

namespace ebsaea {

enum class Backend { kMoeadEgo, kConsEgo };
enum class Mode { kExperienceBased, kBaselineGp };

std::string_view to_string(Backend b);
std::string_view to_string(Mode m);
Backend backend_from_string(std::string_view name);
Mode mode_from_string(std::string_view name);

struct OptimizerConfig {
  Backend backend = Backend::kMoeadEgo;
  std::size_t fe_max = 60;
  std::size_t n_init = 10;
  std::size_t batch_q = 5;
  std::size_t weights_h = 12;
  std::size_t inner_pop = 40;
  std::size_t inner_gens = 40;
  Mode mode = Mode::kExperienceBased;
  std::uint64_t seed = 0;
  AdaptConfig adapt;
  PlainGpOptions plain;
};

/// Throws Error(kInvalidConfig) or Error(kBudgetExhaustedAtInit).
void validate(const OptimizerConfig& cfg);

/// Mean and variance of one output channel at x.
using Predictor = std::function<Prediction(std::span<const double>)>;

struct HistoryEntry {
  std::size_t iteration = 0;  // 0 for the initial design
  Point x;
  Evaluation eval;
};

struct UpdateTraceEntry {
  std::size_t iteration = 0;
  std::size_t channel = 0;
  UpdateRecord record;
  std::vector<double> increments_before;
  std::vector<double> increments_after;
};

struct Archive {
  std::vector<Dataset> channels;  // objectives, then constraints
  std::size_t fe = 0;
  std::vector<HistoryEntry> history;
  std::vector<UpdateTraceEntry> updates;
  bool aborted = false;
  std::string abort_reason;

  /// Componentwise minimum over the first m channels.
  std::vector<double> ideal_point(std::size_t m) const;
  std::size_t feasible_count() const;
};

double normal_pdf(double u);
double normal_cdf(double u);
double expected_improvement(double mean, double sd, double f_min);
double probability_of_feasibility(double mean, double sd);

struct DeOptions {
  std::size_t pop = 40;
  std::size_t gens = 40;
  double f = 0.5;
  double cr = 0.9;
};

/// rand/1/bin differential evolution; returns the best point seen. `seeds`
/// replace the first members of the random initial population.
Point de_maximize(const std::function<double(std::span<const double>)>& score, const Bounds& bounds,
                  const DeOptions& opts, RngStream& rng, std::span<const Point> seeds = {});

/// max_i w_i |f_i - z_i|
double tchebycheff(std::span<const double> f, std::span<const double> weight, std::span<const double> ideal);

/// q proposals, weight vectors taken round-robin starting at `weight_cursor`
/// (advanced on return). Proposals closer than 1e-6 (unit-scaled) to the
/// archive or to each other are re-optimized.
PointSet moead_ego_propose(std::span<const Predictor> objectives, const Archive& archive,
                           const std::vector<std::vector<double>>& weights, std::size_t q,
                           std::size_t& weight_cursor, const Bounds& bounds, const DeOptions& opts,
                           RngStream& rng);

/// Maximizer of EI(objective) x prod_j PoF_j.
Point cons_ego_propose(const Predictor& objective, std::span<const Predictor> constraints, const Archive& archive,
                       const Bounds& bounds, const DeOptions& opts, RngStream& rng);

/// Run the loop on `target`. Experience mode needs one store per channel;
/// baseline mode takes none. `initial_design` overrides the LHS sample.
Archive run_framework(const TaskSpec& target,
                      std::span<const std::shared_ptr<const ExperienceParams>> experiences,
                      const OptimizerConfig& cfg, const PointSet* initial_design = nullptr);

/// Initial design drawn from the run seed only, so every mode with the same
/// seed and n_init starts from identical points.
PointSet initial_design(const TaskSpec& target, std::size_t n_init, std::uint64_t seed);

nlohmann::json config_to_json(const OptimizerConfig& cfg);
/// Missing keys keep their defaults; unknown enum values raise kInvalidConfig.
OptimizerConfig config_from_json(const nlohmann::json& doc, OptimizerConfig base = {});

/// CSV log: iter,fe,x0..,f0..,[g0..,]feasible with 17 significant digits.
void write_log_csv(const Archive& archive, const TaskSpec& task, const std::filesystem::path& path);
nlohmann::json updates_to_json(const Archive& archive);
nlohmann::json run_manifest(const Archive& archive, const TaskSpec& task, const OptimizerConfig& cfg);
/// Writes log.csv, manifest.json and updates.json into `dir`.
void write_run(const Archive& archive, const TaskSpec& task, const OptimizerConfig& cfg,
               const std::filesystem::path& dir);

}  // namespace ebsaea
