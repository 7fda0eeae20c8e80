#include "ebsaea/tasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "ebsaea/error.hpp"

namespace ebsaea {

namespace {

constexpr std::array<std::pair<Family, std::string_view>, 9> kFamilyNames{{
    {Family::kSinusoid, "sinusoid"},
    {Family::kDtlz1, "dtlz1"},
    {Family::kDtlz2, "dtlz2"},
    {Family::kDtlz3, "dtlz3"},
    {Family::kDtlz4, "dtlz4"},
    {Family::kDtlz5, "dtlz5"},
    {Family::kDtlz6, "dtlz6"},
    {Family::kDtlz7, "dtlz7"},
    {Family::kConstrained, "constrained"},
}};

// Fixed Monte-Carlo points used to calibrate constraint offsets.
constexpr std::uint64_t kCalibrationSeed = 0x63616c6962ULL;
constexpr std::size_t kCalibrationSamples = 10000;

bool has_b(Family f) {
  return f == Family::kDtlz2 || f == Family::kDtlz3 || f == Family::kDtlz4 || f == Family::kDtlz5 ||
         f == Family::kDtlz6;
}

}  // namespace

std::string_view to_string(Family f) {
  for (const auto& [fam, name] : kFamilyNames)
    if (fam == f) return name;
  return "unknown";
}

std::string_view to_string(Regime r) { return r == Regime::kInRange ? "in-range" : "out-of-range"; }

Family family_from_string(std::string_view name) {
  for (const auto& [fam, n] : kFamilyNames)
    if (n == name) return fam;
  if (name == "constrained-synthetic") return Family::kConstrained;
  throw Error(ErrorCode::kInvalidConfig, "unknown task family '" + std::string(name) + "'");
}

Regime regime_from_string(std::string_view name) {
  if (name == "in" || name == "in-range") return Regime::kInRange;
  if (name == "out" || name == "out-of-range") return Regime::kOutOfRange;
  throw Error(ErrorCode::kInvalidConfig, "unknown regime '" + std::string(name) + "' (expected in|out)");
}

bool is_dtlz(Family f) { return f != Family::kSinusoid && f != Family::kConstrained; }

bool Evaluation::feasible() const {
  return std::all_of(constraints.begin(), constraints.end(), [](double g) { return g <= 0.0; });
}

std::vector<double> Evaluation::outputs() const {
  std::vector<double> out(objectives);
  out.insert(out.end(), constraints.begin(), constraints.end());
  return out;
}

TaskSpec sinusoid_spec(double amplitude, double frequency, double phase) {
  TaskSpec s;
  s.family = Family::kSinusoid;
  s.d = 1;
  s.m = 1;
  s.params = {amplitude, frequency, phase};
  s.bounds = {Interval{-5.0, 5.0}};
  return s;
}

TaskSpec sample_sinusoid(RngStream& rng) {
  const double a = rng.uniform(0.1, 5.0);
  const double w = rng.uniform(0.999, 1.0);
  const double b = rng.uniform(0.0, std::numbers::pi);
  return sinusoid_spec(a, w, b);
}

double eval_sinusoid(const TaskSpec& spec, double x, RngStream* noise) {
  const double y = spec.params[0] * std::sin(spec.params[1] * x + spec.params[2]);
  return noise ? y + kSinusoidNoiseSd * noise->normal() : y;
}

TaskSpec canonical_dtlz(Family family, std::size_t d, std::size_t m) {
  if (!is_dtlz(family)) throw Error(ErrorCode::kUnsupportedFamily, "not a DTLZ family");
  if (d < m || m < 2) throw Error(ErrorCode::kDimensionError, "DTLZ needs d >= m >= 2");
  TaskSpec s;
  s.family = family;
  s.d = d;
  s.m = m;
  s.bounds = unit_bounds(d);
  if (family == Family::kDtlz7) {
    s.params.assign(m, 0.0);
    s.params[m - 1] = 1.0;
  } else {
    s.params.assign(m, 1.0);
    if (has_b(family)) s.params.insert(s.params.end(), m, 2.0);
  }
  return s;
}

TaskSpec sample_dtlz_variant(Family family, Regime regime, RngStream& rng, std::size_t d, std::size_t m) {
  TaskSpec s = canonical_dtlz(family, d, m);
  const double a_lo = regime == Regime::kInRange ? 0.1 : 1.5;
  const double b_hi = regime == Regime::kInRange ? 2.0 : 1.5;
  for (std::size_t i = 0; i < m; ++i) s.params[i] = rng.uniform(a_lo, 5.0);
  if (has_b(family)) {
    for (std::size_t i = 0; i < m; ++i) s.params[m + i] = rng.uniform(0.5, b_hi);
  }
  return s;
}

Evaluation eval_dtlz(const TaskSpec& spec, std::span<const double> x) {
  const std::size_t d = spec.d;
  const std::size_t m = spec.m;
  if (x.size() != d) throw Error(ErrorCode::kDimensionError, "decision vector length != d");
  if (d < m || m < 2) throw Error(ErrorCode::kDimensionError, "DTLZ needs d >= m >= 2");
  const std::size_t k = d - m + 1;
  const auto y = x.subspan(0, m - 1);
  const auto z = x.subspan(m - 1, k);
  const double* a = spec.params.data();
  const double pi = std::numbers::pi;

  double g = 0.0;
  switch (spec.family) {
    case Family::kDtlz1:
    case Family::kDtlz3: {
      double s = 0.0;
      for (double zi : z) s += (zi - 0.5) * (zi - 0.5) - std::cos(20.0 * pi * (zi - 0.5));
      g = 100.0 * (static_cast<double>(k) + s);
      break;
    }
    case Family::kDtlz2:
    case Family::kDtlz4:
    case Family::kDtlz5:
      for (double zi : z) g += (zi - 0.5) * (zi - 0.5);
      break;
    case Family::kDtlz6:
      for (double zi : z) g += std::pow(zi, 0.1);
      break;
    case Family::kDtlz7: {
      double s = 0.0;
      for (double zi : z) s += zi;
      g = a[m - 1] + 9.0 * s / static_cast<double>(k);
      break;
    }
    default:
      throw Error(ErrorCode::kUnsupportedFamily, "eval_dtlz on a non-DTLZ task");
  }

  Evaluation ev;
  ev.objectives.resize(m);
  if (spec.family == Family::kDtlz1) {
    for (std::size_t j = 0; j < m; ++j) {
      double f = (a[j] + g) * 0.5;
      for (std::size_t i = 0; i < m - 1 - j; ++i) f *= y[i];
      if (j > 0) f *= 1.0 - y[m - 1 - j];
      ev.objectives[j] = f;
    }
    return ev;
  }
  if (spec.family == Family::kDtlz7) {
    double h = static_cast<double>(m);
    for (std::size_t j = 0; j + 1 < m; ++j) {
      ev.objectives[j] = y[j] + a[j];
      h -= ev.objectives[j] / (1.0 + g) * (1.0 + std::sin(3.0 * pi * ev.objectives[j]));
    }
    ev.objectives[m - 1] = (1.0 + g) * h;
    return ev;
  }

  // DTLZ2-6 share the trigonometric form over transformed y.
  std::vector<double> yy(y.begin(), y.end());
  if (spec.family == Family::kDtlz4) {
    for (double& v : yy) v = std::pow(v, 100.0);
  } else if (spec.family == Family::kDtlz5 || spec.family == Family::kDtlz6) {
    for (std::size_t i = 1; i < yy.size(); ++i) yy[i] = (1.0 + 2.0 * g * yy[i]) / (2.0 * (1.0 + g));
  }
  const double* b = spec.params.data() + m;
  for (std::size_t j = 0; j < m; ++j) {
    double f = a[j] + g;
    for (std::size_t i = 0; i < m - 1 - j; ++i) f *= std::cos(yy[i] * pi / b[j]);
    if (j > 0) f *= std::sin(yy[m - 1 - j] * pi / b[j]);
    ev.objectives[j] = f;
  }
  return ev;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

const PointSet& calibration_points() {
  static const PointSet pts = [] {
    RngStream rng(kCalibrationSeed);
    return uniform_sample(kCalibrationSamples, unit_bounds(kConstrainedDim), rng);
  }();
  return pts;
}

}  // namespace

TaskSpec sample_constrained(RngStream& rng) {
  constexpr std::size_t d = kConstrainedDim;
  constexpr std::size_t nc = kConstrainedCount;
  const PointSet& mc = calibration_points();
  std::vector<double> proj(mc.size());
  for (int attempt = 0; attempt < 100; ++attempt) {
    TaskSpec s;
    s.family = Family::kConstrained;
    s.d = d;
    s.m = 1;
    s.n_constraints = nc;
    s.bounds = unit_bounds(d);
    s.params.reserve(2 * d + nc * d + nc);
    for (std::size_t i = 0; i < d; ++i) s.params.push_back(rng.uniform(0.5, 2.0));
    for (std::size_t i = 0; i < d; ++i) s.params.push_back(rng.uniform(0.2, 0.8));
    std::vector<std::vector<double>> dirs(nc, std::vector<double>(d));
    for (auto& dir : dirs) {
      double norm = 0.0;
      do {
        for (double& v : dir) v = rng.normal();
        norm = std::sqrt(dot(dir, dir));
      } while (norm < 1e-12);
      for (double& v : dir) v /= norm;
      s.params.insert(s.params.end(), dir.begin(), dir.end());
    }
    // Each offset is a quantile of the projection, so constraint j alone
    // admits roughly a fraction q_j of the box.
    for (const auto& dir : dirs) {
      for (std::size_t i = 0; i < mc.size(); ++i) proj[i] = dot(dir, mc[i]);
      const double q = rng.uniform(0.55, 0.9);
      const auto pos = static_cast<std::ptrdiff_t>(q * static_cast<double>(mc.size() - 1));
      std::nth_element(proj.begin(), proj.begin() + pos, proj.end());
      s.params.push_back(proj[static_cast<std::size_t>(pos)]);
    }
    RngStream unused(kCalibrationSeed);
    const double frac = feasible_fraction(s, kCalibrationSamples, unused);
    if (frac >= 0.05 && frac <= 0.5) return s;
  }
  throw Error(ErrorCode::kFeasibilityCalibrationFailed, "no constrained task within feasible fraction [0.05, 0.5]");
}

Evaluation eval_constrained(const TaskSpec& spec, std::span<const double> x) {
  constexpr std::size_t d = kConstrainedDim;
  if (x.size() != d) throw Error(ErrorCode::kDimensionError, "constrained task expects 6 variables");
  const double* c = spec.params.data();
  const double* o = c + d;
  const double* dirs = o + d;
  const double* offs = dirs + kConstrainedCount * d;
  Evaluation ev;
  double f = 0.0;
  for (std::size_t i = 0; i < d; ++i) f += c[i] * (x[i] - o[i]) * (x[i] - o[i]);
  ev.objectives = {f};
  ev.constraints.resize(kConstrainedCount);
  for (std::size_t j = 0; j < kConstrainedCount; ++j) {
    ev.constraints[j] = dot({dirs + j * d, d}, x) - offs[j];
  }
  return ev;
}

double feasible_fraction(const TaskSpec& spec, std::size_t samples, RngStream& rng) {
  // The calibration stream reproduces the shared Monte-Carlo points exactly.
  const bool shared = rng.seed() == kCalibrationSeed && rng.stream_id() == 0 && samples == kCalibrationSamples;
  const PointSet own = shared ? PointSet{} : uniform_sample(samples, unit_bounds(spec.d), rng);
  const PointSet& pts = shared ? calibration_points() : own;
  std::size_t feasible = 0;
  for (const auto& x : pts) feasible += eval_constrained(spec, x).feasible() ? 1 : 0;
  return static_cast<double>(feasible) / static_cast<double>(pts.size());
}

Evaluation evaluate(const TaskSpec& spec, std::span<const double> x, RngStream* noise) {
  switch (spec.family) {
    case Family::kSinusoid: {
      if (x.size() != 1) throw Error(ErrorCode::kDimensionError, "sinusoid takes one variable");
      return Evaluation{{eval_sinusoid(spec, x[0], noise)}, {}};
    }
    case Family::kConstrained:
      return eval_constrained(spec, x);
    default:
      return eval_dtlz(spec, x);
  }
}

std::vector<Dataset> generate_dataset(const TaskSpec& spec, std::size_t n, Sampling sampling, RngStream& rng) {
  if (n == 0) throw Error(ErrorCode::kInvalidConfig, "generate_dataset needs n >= 1");
  const PointSet xs = sampling == Sampling::kLhs ? lhs_sample(n, spec.bounds, rng) : uniform_sample(n, spec.bounds, rng);
  std::vector<Dataset> channels(spec.channel_count());
  for (auto& c : channels) c.bounds = spec.bounds;
  for (const auto& x : xs) {
    const auto out = evaluate(spec, x, spec.family == Family::kSinusoid ? &rng : nullptr).outputs();
    for (std::size_t c = 0; c < channels.size(); ++c) channels[c].push_back(x, out[c]);
  }
  return channels;
}

nlohmann::json task_to_json(const TaskSpec& spec) {
  nlohmann::json doc;
  doc["family"] = std::string(to_string(spec.family));
  doc["d"] = spec.d;
  doc["m"] = spec.m;
  doc["params"] = spec.params;
  nlohmann::json bounds = nlohmann::json::array();
  for (const auto& b : spec.bounds) bounds.push_back({b.lo, b.hi});
  doc["bounds"] = std::move(bounds);
  doc["n_constraints"] = spec.n_constraints;
  doc["seed"] = spec.seed ? nlohmann::json(*spec.seed) : nlohmann::json(nullptr);
  return doc;
}

TaskSpec task_from_json(const nlohmann::json& doc) {
  try {
    TaskSpec s;
    s.family = family_from_string(doc.at("family").get<std::string>());
    if (doc.value("canonical", false)) {
      if (!is_dtlz(s.family)) throw Error(ErrorCode::kInvalidConfig, "'canonical' applies to DTLZ families only");
      return canonical_dtlz(s.family, doc.value("d", std::size_t{10}), doc.value("m", std::size_t{3}));
    }
    s.d = doc.at("d").get<std::size_t>();
    s.m = doc.at("m").get<std::size_t>();
    s.params = doc.at("params").get<std::vector<double>>();
    for (const auto& b : doc.at("bounds")) s.bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    s.n_constraints = doc.value("n_constraints", std::size_t{0});
    if (doc.contains("seed") && !doc.at("seed").is_null()) s.seed = doc.at("seed").get<std::uint64_t>();
    if (s.bounds.size() != s.d) throw Error(ErrorCode::kSchemaError, "task 'bounds' must have d entries");
    validate_bounds(s.bounds);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("task spec: ") + e.what());
  }
}

}  // namespace ebsaea
