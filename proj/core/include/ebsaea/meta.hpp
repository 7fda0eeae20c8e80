#pragma once

// Meta-learning of task-independent deep-kernel parameters ("experiences")
// over many small datasets drawn from related tasks, plus the JSON store that
// carries them between the offline learning phase and optimization.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ebsaea/deepkernel.hpp"
#include "ebsaea/gp.hpp"

namespace ebsaea {

inline constexpr int kExperienceStoreVersion = 1;

enum class MetaOptimizer { kAdam, kGradientDescent };

struct MetaConfig {
  std::size_t n_meta = 2000;  // N_m, datasets consumed in total
  std::size_t dm_size = 10;   // |D_m|, points subsampled per dataset
  std::size_t batch = 10;     // B
  double lr_alpha = 1e-3;
  std::uint64_t seed = 0;
  MetaOptimizer optimizer = MetaOptimizer::kAdam;
  std::vector<std::size_t> hidden{40, 40};
  /// Initial theta^e; 0 picks it from the source data (see calibrate_theta).
  double init_theta = 0.0;
  double init_p = 2.0;
  double nugget = kDefaultNugget;
  double noise_variance = 0.0;  // raw output scale, see noise_nugget
  /// Gradient steps on the per-dataset increments before the loss; 0 follows
  /// the plain procedure where increments stay at zero.
  std::size_t inner_steps = 0;
  double inner_lr = 1e-3;

  std::size_t iterations() const noexcept { return batch == 0 ? 0 : n_meta / batch; }
};

/// Task-independent deep-kernel parameters shared by every task of a family.
struct ExperienceParams {
  DeepKernelParams kernel;

  bool operator==(const ExperienceParams&) const = default;
};

struct MetaTrace {
  std::vector<double> mean_loss;    // per iteration, over the datasets that fitted
  std::vector<std::size_t> skipped;  // per iteration, datasets whose fit failed
  std::size_t updates = 0;
};

struct MetaResult {
  ExperienceParams params;
  MetaTrace trace;
};

/// Random initial experiences for input dimension d.
ExperienceParams initial_experiences(std::size_t d, const MetaConfig& cfg);

/// Median heuristic: theta_k = 1 / (d * median |phi_k(x) - phi_k(x')|^p_k)
/// over point pairs within each of the first `max_sources` datasets, so a
/// typical pair starts with correlation near exp(-1).
void calibrate_theta(ExperienceParams& e, std::span<const Dataset> sources, std::size_t max_sources = 100);

MetaResult meta_train(std::span<const Dataset> sources, const MetaConfig& cfg);
MetaResult meta_train(std::span<const Dataset> sources, const MetaConfig& cfg, ExperienceParams init);

nlohmann::json experiences_to_json(const ExperienceParams& params);
/// Throws Error(kVersionMismatch) or Error(kSchemaError) naming the bad field.
ExperienceParams experiences_from_json(const nlohmann::json& doc);

void save_experiences(const ExperienceParams& params, const std::filesystem::path& path);
ExperienceParams load_experiences(const std::filesystem::path& path);

/// One store per output channel: {"version", "channels": [store, ...]}.
void save_experience_set(std::span<const ExperienceParams> channels, const std::filesystem::path& path);
/// Accepts a multi-channel document or a single store (one channel).
std::vector<ExperienceParams> load_experience_set(const std::filesystem::path& path);

}  // namespace ebsaea
