#include "ebsaea/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

#include "ebsaea/error.hpp"

namespace ebsaea {

namespace {

constexpr std::uint64_t kInitStream = 0x494e4954;
constexpr std::uint64_t kRunStream = 0x52554e;
constexpr double kDuplicateDistance = 1e-6;

double scaled_distance(std::span<const double> a, std::span<const double> b, const Bounds& bounds) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double w = bounds[k].hi - bounds[k].lo;
    const double diff = (a[k] - b[k]) / w;
    s += diff * diff;
  }
  return std::sqrt(s);
}

bool collides(std::span<const double> x, const PointSet& archive, const PointSet& taken, const Bounds& bounds) {
  for (const auto& p : archive)
    if (scaled_distance(x, p, bounds) < kDuplicateDistance) return true;
  for (const auto& p : taken)
    if (scaled_distance(x, p, bounds) < kDuplicateDistance) return true;
  return false;
}

// Re-run the maximizer from a perturbed start until the proposal is new; a
// uniform draw is the last resort.
Point distinct_proposal(const std::function<double(std::span<const double>)>& score, Point x,
                        const PointSet& archive, const PointSet& taken, const Bounds& bounds, const DeOptions& opts,
                        RngStream& rng) {
  for (int attempt = 0; attempt < 3 && collides(x, archive, taken, bounds); ++attempt) {
    Point start = x;
    for (std::size_t k = 0; k < start.size(); ++k) {
      const double w = bounds[k].hi - bounds[k].lo;
      start[k] = std::clamp(start[k] + 0.05 * w * rng.normal(), bounds[k].lo, bounds[k].hi);
    }
    RngStream sub = rng.derive(static_cast<std::uint64_t>(attempt) + 1);
    std::vector<Point> seeds{start};
    x = de_maximize(score, bounds, opts, sub, seeds);
  }
  while (collides(x, archive, taken, bounds)) {
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = rng.uniform(bounds[k].lo, bounds[k].hi);
  }
  return x;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(Backend b) { return b == Backend::kMoeadEgo ? "moead-ego" : "cons-ego"; }
std::string_view to_string(Mode m) { return m == Mode::kExperienceBased ? "experience-based" : "baseline-gp"; }

Backend backend_from_string(std::string_view name) {
  if (name == "moead-ego") return Backend::kMoeadEgo;
  if (name == "cons-ego") return Backend::kConsEgo;
  throw Error(ErrorCode::kInvalidConfig, "unknown backend '" + std::string(name) + "'");
}

Mode mode_from_string(std::string_view name) {
  if (name == "experience-based" || name == "eb") return Mode::kExperienceBased;
  if (name == "baseline-gp" || name == "baseline") return Mode::kBaselineGp;
  throw Error(ErrorCode::kInvalidConfig, "unknown mode '" + std::string(name) + "'");
}

void validate(const OptimizerConfig& cfg) {
  if (cfg.n_init < 2) throw Error(ErrorCode::kInvalidConfig, "n_init must be >= 2");
  if (cfg.n_init > cfg.fe_max) {
    throw Error(ErrorCode::kBudgetExhaustedAtInit, "n_init " + std::to_string(cfg.n_init) + " exceeds fe_max " +
                                                        std::to_string(cfg.fe_max));
  }
  if (cfg.batch_q == 0) throw Error(ErrorCode::kInvalidConfig, "batch_q must be >= 1");
  if (cfg.weights_h == 0) throw Error(ErrorCode::kInvalidConfig, "weights_h must be >= 1");
  if (cfg.inner_pop < 4) throw Error(ErrorCode::kInvalidConfig, "inner_pop must be >= 4");
}

std::vector<double> Archive::ideal_point(std::size_t m) const {
  std::vector<double> z(m, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < m; ++i)
    for (double y : channels[i].ys) z[i] = std::min(z[i], y);
  return z;
}

std::size_t Archive::feasible_count() const {
  return static_cast<std::size_t>(
      std::count_if(history.begin(), history.end(), [](const HistoryEntry& h) { return h.eval.feasible(); }));
}

double normal_pdf(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

double expected_improvement(double mean, double sd, double f_min) {
  if (!(sd > 0.0)) return 0.0;
  const double u = (f_min - mean) / sd;
  return std::max(0.0, (f_min - mean) * normal_cdf(u) + sd * normal_pdf(u));
}

double probability_of_feasibility(double mean, double sd) {
  if (!(sd > 0.0)) return mean <= 0.0 ? 1.0 : 0.0;
  return normal_cdf(-mean / sd);
}

Point de_maximize(const std::function<double(std::span<const double>)>& score, const Bounds& bounds,
                  const DeOptions& opts, RngStream& rng, std::span<const Point> seeds) {
  if (opts.pop < 4) throw Error(ErrorCode::kInvalidConfig, "differential evolution needs pop >= 4");
  const std::size_t d = bounds.size();
  const std::size_t np = opts.pop;
  auto safe_score = [&](std::span<const double> x) {
    const double s = score(x);
    return std::isnan(s) ? -std::numeric_limits<double>::infinity() : s;
  };
  PointSet pop = uniform_sample(np, bounds, rng);
  for (std::size_t i = 0; i < seeds.size() && i < np; ++i) {
    for (std::size_t k = 0; k < d; ++k) pop[i][k] = std::clamp(seeds[i][k], bounds[k].lo, bounds[k].hi);
  }
  std::vector<double> fit(np);
  for (std::size_t i = 0; i < np; ++i) fit[i] = safe_score(pop[i]);
  std::size_t best = static_cast<std::size_t>(std::max_element(fit.begin(), fit.end()) - fit.begin());
  Point best_x = pop[best];
  double best_f = fit[best];

  PointSet next = pop;
  std::vector<double> next_fit = fit;
  Point trial(d);
  for (std::size_t g = 0; g < opts.gens; ++g) {
    for (std::size_t i = 0; i < np; ++i) {
      std::size_t r1, r2, r3;
      do r1 = rng.uniform_index(np);
      while (r1 == i);
      do r2 = rng.uniform_index(np);
      while (r2 == i || r2 == r1);
      do r3 = rng.uniform_index(np);
      while (r3 == i || r3 == r1 || r3 == r2);
      const std::size_t jrand = rng.uniform_index(d);
      for (std::size_t k = 0; k < d; ++k) {
        if (k == jrand || rng.uniform() < opts.cr) {
          double v = pop[r1][k] + opts.f * (pop[r2][k] - pop[r3][k]);
          if (v < bounds[k].lo) v = 0.5 * (bounds[k].lo + pop[i][k]);
          if (v > bounds[k].hi) v = 0.5 * (bounds[k].hi + pop[i][k]);
          trial[k] = v;
        } else {
          trial[k] = pop[i][k];
        }
      }
      const double f = safe_score(trial);
      if (f >= fit[i]) {
        next[i] = trial;
        next_fit[i] = f;
        if (f > best_f) {
          best_f = f;
          best_x = trial;
        }
      } else {
        next[i] = pop[i];
        next_fit[i] = fit[i];
      }
    }
    std::swap(pop, next);
    std::swap(fit, next_fit);
  }
  return best_x;
}

double tchebycheff(std::span<const double> f, std::span<const double> weight, std::span<const double> ideal) {
  double g = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < f.size(); ++i) g = std::max(g, weight[i] * std::abs(f[i] - ideal[i]));
  return g;
}

PointSet moead_ego_propose(std::span<const Predictor> objectives, const Archive& archive,
                           const std::vector<std::vector<double>>& weights, std::size_t q,
                           std::size_t& weight_cursor, const Bounds& bounds, const DeOptions& opts,
                           RngStream& rng) {
  const std::size_t m = objectives.size();
  if (m == 0 || weights.empty()) throw Error(ErrorCode::kInvalidConfig, "moead_ego_propose needs objectives and weights");
  const auto ideal = archive.ideal_point(m);
  const PointSet& seen = archive.channels.front().xs;
  const std::size_t n = seen.size();
  PointSet proposals;
  std::vector<double> f(m);
  for (std::size_t j = 0; j < q; ++j) {
    const auto& w = weights[weight_cursor % weights.size()];
    ++weight_cursor;
    double f_min = std::numeric_limits<double>::infinity();
    std::size_t incumbent = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < m; ++c) f[c] = archive.channels[c].ys[i];
      const double g = tchebycheff(f, w, ideal);
      if (g < f_min) {
        f_min = g;
        incumbent = i;
      }
    }
    auto score = [&](std::span<const double> x) {
      std::vector<double> mean(m);
      double var = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        const Prediction p = objectives[c](x);
        mean[c] = p.mean;
        var += w[c] * w[c] * p.variance;
      }
      return expected_improvement(tchebycheff(mean, w, ideal), std::sqrt(var), f_min);
    };
    RngStream sub = rng.derive(j);
    std::vector<Point> seeds;
    if (n > 0) seeds.push_back(seen[incumbent]);
    Point x = de_maximize(score, bounds, opts, sub, seeds);
    proposals.push_back(distinct_proposal(score, std::move(x), seen, proposals, bounds, opts, sub));
  }
  return proposals;
}

Point cons_ego_propose(const Predictor& objective, std::span<const Predictor> constraints, const Archive& archive,
                       const Bounds& bounds, const DeOptions& opts, RngStream& rng) {
  const auto& obj = archive.channels.front();
  const std::size_t n = obj.size();
  double f_min = std::numeric_limits<double>::infinity();
  double f_all = std::numeric_limits<double>::infinity();
  std::size_t incumbent = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool feasible = true;
    for (std::size_t j = 0; j < constraints.size(); ++j) feasible = feasible && archive.channels[1 + j].ys[i] <= 0.0;
    if (feasible && obj.ys[i] < f_min) {
      f_min = obj.ys[i];
      incumbent = i;
    }
    f_all = std::min(f_all, obj.ys[i]);
  }
  if (!std::isfinite(f_min)) {
    f_min = f_all;
    for (std::size_t i = 0; i < n; ++i)
      if (obj.ys[i] == f_all) incumbent = i;
  }
  auto score = [&](std::span<const double> x) {
    const Prediction p = objective(x);
    double s = expected_improvement(p.mean, std::sqrt(p.variance), f_min);
    for (const auto& c : constraints) {
      const Prediction pc = c(x);
      s *= probability_of_feasibility(pc.mean, std::sqrt(pc.variance));
    }
    return s;
  };
  std::vector<Point> seeds;
  if (n > 0) seeds.push_back(obj.xs[incumbent]);
  RngStream sub = rng.derive(0);
  Point x = de_maximize(score, bounds, opts, sub, seeds);
  return distinct_proposal(score, std::move(x), obj.xs, {}, bounds, opts, sub);
}

PointSet initial_design(const TaskSpec& target, std::size_t n_init, std::uint64_t seed) {
  RngStream rng(seed, kInitStream);
  return lhs_sample(n_init, target.bounds, rng);
}

namespace {

class ChannelModels {
 public:
  ChannelModels(const OptimizerConfig& cfg, std::span<const std::shared_ptr<const ExperienceParams>> experiences,
                std::size_t channels)
      : cfg_(cfg) {
    if (cfg.mode == Mode::kExperienceBased) {
      for (std::size_t c = 0; c < channels; ++c) eb_.emplace_back(experiences[c], cfg.adapt);
    } else {
      plain_.resize(channels);
      states_.resize(channels);
    }
  }

  void initial_fit(const Archive& a) {
    for (std::size_t c = 0; c < a.channels.size(); ++c) {
      if (eb_.empty()) {
        refit_plain(c, a.channels[c], false);
      } else {
        eb_[c] = adapt(eb_[c], a.channels[c]);
      }
    }
  }

  void update_all(Archive& a, std::size_t iteration) {
    for (std::size_t c = 0; c < a.channels.size(); ++c) {
      if (eb_.empty()) {
        refit_plain(c, a.channels[c], true);
        continue;
      }
      UpdateTraceEntry entry;
      entry.iteration = iteration;
      entry.channel = c;
      entry.increments_before = eb_[c].current_increments().flatten();
      auto outcome = update(eb_[c], a.channels[c]);
      entry.record = outcome.record;
      entry.increments_after = outcome.surrogate.current_increments().flatten();
      eb_[c] = std::move(outcome.surrogate);
      a.updates.push_back(std::move(entry));
    }
  }

  std::vector<Predictor> predictors(std::size_t first, std::size_t count) const {
    std::vector<Predictor> out;
    for (std::size_t c = first; c < first + count; ++c) {
      if (eb_.empty()) {
        const GpState* s = &*states_[c];
        out.emplace_back([s](std::span<const double> x) { return s->predict(x); });
      } else {
        const Surrogate* s = &eb_[c];
        out.emplace_back([s](std::span<const double> x) { return s->predict(x); });
      }
    }
    return out;
  }

 private:
  void refit_plain(std::size_t c, const Dataset& data, bool warm) {
    plain_[c] = fit_plain_gp(data, cfg_.plain, warm ? &plain_[c] : nullptr);
    states_[c] = fit_gp(plain_[c], TaskIncrements::zeros(data.dim()), data,
                        noise_nugget(cfg_.plain.nugget, cfg_.plain.noise_variance, data.ys));
  }

  const OptimizerConfig& cfg_;
  std::vector<Surrogate> eb_;
  std::vector<DeepKernelParams> plain_;
  std::vector<std::optional<GpState>> states_;
};

void record(Archive& a, const TaskSpec& target, const Point& x, std::size_t iteration) {
  Evaluation ev = evaluate(target, x);
  const auto out = ev.outputs();
  for (std::size_t c = 0; c < a.channels.size(); ++c) a.channels[c].push_back(x, out[c]);
  a.history.push_back({iteration, x, std::move(ev)});
  ++a.fe;
}

}  // namespace

Archive run_framework(const TaskSpec& target,
                      std::span<const std::shared_ptr<const ExperienceParams>> experiences,
                      const OptimizerConfig& cfg, const PointSet* design) {
  validate(cfg);
  const std::size_t channels = target.channel_count();
  const std::size_t m = target.m;
  if (cfg.mode == Mode::kExperienceBased) {
    if (experiences.size() != channels) {
      throw Error(ErrorCode::kInvalidConfig, "experience mode needs " + std::to_string(channels) +
                                                 " experience stores, got " + std::to_string(experiences.size()));
    }
    for (const auto& e : experiences) {
      if (!e || e->kernel.input_dim() != target.d) {
        throw Error(ErrorCode::kInvalidConfig, "experience store dimension does not match the target task");
      }
    }
  } else if (!experiences.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "baseline mode takes no experience stores");
  }
  if (cfg.backend == Backend::kMoeadEgo && (m < 2 || target.n_constraints > 0)) {
    throw Error(ErrorCode::kInvalidConfig, "moead-ego needs an unconstrained task with m >= 2");
  }
  if (cfg.backend == Backend::kConsEgo && m != 1) {
    throw Error(ErrorCode::kInvalidConfig, "cons-ego needs a single-objective task");
  }

  Archive a;
  a.channels.resize(channels);
  for (auto& c : a.channels) c.bounds = target.bounds;
  const PointSet init = design ? *design : initial_design(target, cfg.n_init, cfg.seed);
  if (init.size() != cfg.n_init) throw Error(ErrorCode::kInvalidConfig, "initial design size differs from n_init");
  for (const auto& x : init) record(a, target, x, 0);
  if (a.fe == cfg.fe_max) return a;

  RngStream rng(cfg.seed, kRunStream);
  const DeOptions de{cfg.inner_pop, cfg.inner_gens};
  std::vector<std::vector<double>> weights;
  if (cfg.backend == Backend::kMoeadEgo) {
    weights = simplex_lattice_weights(m, cfg.weights_h);
    rng.shuffle(weights);
  }
  std::size_t cursor = 0;

  try {
    ChannelModels models(cfg, experiences, channels);
    models.initial_fit(a);
    for (std::size_t iter = 1; a.fe < cfg.fe_max; ++iter) {
      RngStream it_rng = rng.derive(iter);
      PointSet batch;
      if (cfg.backend == Backend::kMoeadEgo) {
        const std::size_t q = std::min(cfg.batch_q, cfg.fe_max - a.fe);
        const auto objs = models.predictors(0, m);
        batch = moead_ego_propose(objs, a, weights, q, cursor, target.bounds, de, it_rng);
      } else {
        const auto obj = models.predictors(0, 1);
        const auto cons = models.predictors(1, target.n_constraints);
        batch.push_back(cons_ego_propose(obj.front(), cons, a, target.bounds, de, it_rng));
      }
      for (const auto& x : batch) record(a, target, x, iter);
      models.update_all(a, iter);
    }
  } catch (const Error& e) {
    if (!is_numerical(e.code())) throw;
    a.aborted = true;
    a.abort_reason = e.what();
  }
  return a;
}

nlohmann::json config_to_json(const OptimizerConfig& cfg) {
  return {
      {"backend", std::string(to_string(cfg.backend))},
      {"mode", std::string(to_string(cfg.mode))},
      {"fe_max", cfg.fe_max},
      {"n_init", cfg.n_init},
      {"batch_q", cfg.batch_q},
      {"weights_h", cfg.weights_h},
      {"inner_pop", cfg.inner_pop},
      {"inner_gens", cfg.inner_gens},
      {"seed", cfg.seed},
      {"adapt",
       {{"lr_beta", cfg.adapt.lr_beta},
        {"adapt_steps", cfg.adapt.adapt_steps},
        {"update_steps", cfg.adapt.update_steps},
        {"nugget", cfg.adapt.nugget},
        {"noise_variance", cfg.adapt.noise_variance}}},
      {"plain",
       {{"fit_p", cfg.plain.fit_p},
        {"fixed_p", cfg.plain.fixed_p},
        {"learning_rate", cfg.plain.learning_rate},
        {"steps", cfg.plain.steps},
        {"start_thetas", cfg.plain.start_thetas},
        {"nugget", cfg.plain.nugget},
        {"noise_variance", cfg.plain.noise_variance}}},
  };
}

OptimizerConfig config_from_json(const nlohmann::json& doc, OptimizerConfig cfg) {
  try {
    if (!doc.is_object()) throw Error(ErrorCode::kInvalidConfig, "optimizer config must be a JSON object");
    if (doc.contains("backend")) cfg.backend = backend_from_string(doc.at("backend").get<std::string>());
    if (doc.contains("mode")) cfg.mode = mode_from_string(doc.at("mode").get<std::string>());
    cfg.fe_max = doc.value("fe_max", cfg.fe_max);
    cfg.n_init = doc.value("n_init", cfg.n_init);
    cfg.batch_q = doc.value("batch_q", cfg.batch_q);
    cfg.weights_h = doc.value("weights_h", cfg.weights_h);
    cfg.inner_pop = doc.value("inner_pop", cfg.inner_pop);
    cfg.inner_gens = doc.value("inner_gens", cfg.inner_gens);
    cfg.seed = doc.value("seed", cfg.seed);
    if (doc.contains("adapt")) {
      const auto& a = doc.at("adapt");
      cfg.adapt.lr_beta = a.value("lr_beta", cfg.adapt.lr_beta);
      cfg.adapt.adapt_steps = a.value("adapt_steps", cfg.adapt.adapt_steps);
      cfg.adapt.update_steps = a.value("update_steps", cfg.adapt.update_steps);
      cfg.adapt.nugget = a.value("nugget", cfg.adapt.nugget);
      cfg.adapt.noise_variance = a.value("noise_variance", cfg.adapt.noise_variance);
    }
    if (doc.contains("plain")) {
      const auto& p = doc.at("plain");
      cfg.plain.fit_p = p.value("fit_p", cfg.plain.fit_p);
      cfg.plain.fixed_p = p.value("fixed_p", cfg.plain.fixed_p);
      cfg.plain.learning_rate = p.value("learning_rate", cfg.plain.learning_rate);
      cfg.plain.steps = p.value("steps", cfg.plain.steps);
      cfg.plain.start_thetas = p.value("start_thetas", cfg.plain.start_thetas);
      cfg.plain.nugget = p.value("nugget", cfg.plain.nugget);
      cfg.plain.noise_variance = p.value("noise_variance", cfg.plain.noise_variance);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("optimizer config: ") + e.what());
  }
  return cfg;
}

void write_log_csv(const Archive& archive, const TaskSpec& task, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << "iter,fe";
  for (std::size_t k = 0; k < task.d; ++k) out << ",x" << k;
  for (std::size_t k = 0; k < task.m; ++k) out << ",f" << k;
  for (std::size_t k = 0; k < task.n_constraints; ++k) out << ",g" << k;
  out << ",feasible\n";
  for (std::size_t i = 0; i < archive.history.size(); ++i) {
    const auto& h = archive.history[i];
    out << h.iteration << ',' << (i + 1);
    for (double v : h.x) out << ',' << format_real(v);
    for (double v : h.eval.objectives) out << ',' << format_real(v);
    for (double v : h.eval.constraints) out << ',' << format_real(v);
    out << ',' << (h.eval.feasible() ? 1 : 0) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

nlohmann::json updates_to_json(const Archive& archive) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& u : archive.updates) {
    arr.push_back({{"iteration", u.iteration},
                   {"channel", u.channel},
                   {"accepted", u.record.accepted},
                   {"e0", u.record.e0},
                   {"e1", u.record.e1},
                   {"increments_before", u.increments_before},
                   {"increments_after", u.increments_after}});
  }
  return arr;
}

nlohmann::json run_manifest(const Archive& archive, const TaskSpec& task, const OptimizerConfig& cfg) {
  std::size_t accepted = 0;
  for (const auto& u : archive.updates) accepted += u.record.accepted ? 1 : 0;
  return {{"version", kExperienceStoreVersion},
          {"config", config_to_json(cfg)},
          {"task", task_to_json(task)},
          {"seed", cfg.seed},
          {"fe", archive.fe},
          {"feasible_count", archive.feasible_count()},
          {"updates", archive.updates.size()},
          {"updates_accepted", accepted},
          {"aborted", archive.aborted},
          {"abort_reason", archive.abort_reason}};
}

void write_run(const Archive& archive, const TaskSpec& task, const OptimizerConfig& cfg,
               const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_log_csv(archive, task, dir / "log.csv");
  auto dump = [](const nlohmann::json& doc, const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + p.string());
    out << doc.dump(1) << '\n';
  };
  dump(run_manifest(archive, task, cfg), dir / "manifest.json");
  dump(updates_to_json(archive), dir / "updates.json");
}

}  // namespace ebsaea
