#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "ebsaea/optimize.hpp"
#include "support.hpp"

using namespace ebsaea;

namespace {

Archive archive_from(const TaskSpec& t, const PointSet& xs) {
  Archive a;
  a.channels.resize(t.channel_count());
  for (auto& c : a.channels) c.bounds = t.bounds;
  for (const auto& x : xs) {
    Evaluation ev = evaluate(t, x);
    const auto out = ev.outputs();
    for (std::size_t c = 0; c < out.size(); ++c) a.channels[c].push_back(x, out[c]);
    a.history.push_back({0, x, std::move(ev)});
    ++a.fe;
  }
  return a;
}

// Exact surrogate of output channel c with a fixed predictive standard deviation.
Predictor oracle(const TaskSpec& t, std::size_t c, double sd) {
  return [t, c, sd](std::span<const double> x) { return Prediction{evaluate(t, x).outputs()[c], sd * sd}; };
}

double scaled_gap(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

std::vector<std::shared_ptr<const ExperienceParams>> untrained_stores(std::size_t d, std::size_t count) {
  std::vector<std::shared_ptr<const ExperienceParams>> out;
  MetaConfig mc;
  mc.hidden = {8, 8};
  for (std::size_t c = 0; c < count; ++c) {
    mc.seed = c;
    out.push_back(std::make_shared<const ExperienceParams>(initial_experiences(d, mc)));
  }
  return out;
}

OptimizerConfig quick(Mode mode) {
  OptimizerConfig cfg;
  cfg.mode = mode;
  cfg.inner_pop = 12;
  cfg.inner_gens = 8;
  cfg.adapt.adapt_steps = 10;
  cfg.adapt.update_steps = 3;
  cfg.plain.steps = 10;
  cfg.plain.start_thetas = {1.0};
  return cfg;
}

}  // namespace

TEST_CASE("expected improvement examples") {
  CHECK(expected_improvement(0.3, 0.0, 1.0) == 0.0);
  CHECK(expected_improvement(1.0, 1.0, 1.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-14));
  CHECK(expected_improvement(-2.0, 1e-9, 1.0) == doctest::Approx(3.0).epsilon(1e-9));
  RngStream rng(1, 0);
  for (int i = 0; i < 200; ++i) {
    const double m = rng.normal(), s = rng.uniform(0.0, 3.0), f = rng.normal();
    CHECK(expected_improvement(m, s, f) >= 0.0);
    CHECK(expected_improvement(m, s, f) >= std::max(f - m, 0.0) - 1e-12);
  }
}

TEST_CASE("probability of feasibility examples") {
  CHECK(probability_of_feasibility(0.0, 1.0) == 0.5);
  CHECK(probability_of_feasibility(-10.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(probability_of_feasibility(0.1, 0.0) == 0.0);
  CHECK(probability_of_feasibility(0.0, 0.0) == 1.0);
  CHECK(probability_of_feasibility(-0.1, 0.0) == 1.0);
}

TEST_CASE("differential evolution finds a quadratic optimum") {
  const Bounds b = unit_bounds(5);
  auto score = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s -= (v - 0.3) * (v - 0.3);
    return s;
  };
  RngStream rng(2, 0);
  const Point best = de_maximize(score, b, DeOptions{50, 100}, rng);
  CHECK(scaled_gap(best, Point(5, 0.3)) < 1e-2);

  RngStream r1(3, 0), r2(3, 0);
  CHECK(de_maximize(score, b, DeOptions{10, 5}, r1) == de_maximize(score, b, DeOptions{10, 5}, r2));

  RngStream r3(4, 0), r4(4, 0);
  const Point zero_gens = de_maximize(score, b, DeOptions{10, 0}, r3);
  const PointSet pop = uniform_sample(10, b, r4);
  Point want = pop[0];
  for (const auto& p : pop)
    if (score(p) > score(want)) want = p;
  CHECK(zero_gens == want);

  CHECK(testing::error_code([&] { de_maximize(score, b, DeOptions{3, 5}, r1); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("single weight vector ignores the other objectives") {
  const TaskSpec t = canonical_dtlz(Family::kDtlz2);
  RngStream rng(5, 0);
  const Archive a = archive_from(t, lhs_sample(10, t.bounds, rng));
  const std::vector<std::vector<double>> w{{1.0, 0.0, 0.0}};
  const std::vector<Predictor> real{oracle(t, 0, 0.2), oracle(t, 1, 0.2), oracle(t, 2, 0.2)};
  auto flat = [](std::span<const double>) { return Prediction{7.0, 4.0}; };
  const std::vector<Predictor> swapped{oracle(t, 0, 0.2), flat, flat};
  std::size_t c1 = 0, c2 = 0;
  RngStream r1(6, 0), r2(6, 0);
  const auto p1 = moead_ego_propose(real, a, w, 1, c1, t.bounds, DeOptions{20, 20}, r1);
  const auto p2 = moead_ego_propose(swapped, a, w, 1, c2, t.bounds, DeOptions{20, 20}, r2);
  CHECK(p1 == p2);
  CHECK(c1 == 1);
}

TEST_CASE("moead proposals are in bounds and distinct") {
  const TaskSpec t = canonical_dtlz(Family::kDtlz2);
  const auto weights = simplex_lattice_weights(3, 12);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng(seed, 1);
    const Archive a = archive_from(t, lhs_sample(10, t.bounds, rng));
    const std::vector<Predictor> preds{oracle(t, 0, 0.1), oracle(t, 1, 0.1), oracle(t, 2, 0.1)};
    std::size_t cursor = 7;
    const auto props = moead_ego_propose(preds, a, weights, 5, cursor, t.bounds, DeOptions{12, 10}, rng);
    CHECK(props.size() == 5);
    CHECK(cursor == 12);
    for (std::size_t i = 0; i < props.size(); ++i) {
      for (double v : props[i]) CHECK((v >= 0.0 && v <= 1.0));
      for (std::size_t j = 0; j < i; ++j) CHECK(scaled_gap(props[i], props[j]) >= 1e-6);
      for (const auto& x : a.channels[0].xs) CHECK(scaled_gap(props[i], x) >= 1e-6);
    }
  }
}

TEST_CASE("exact zero-variance surrogates do not re-propose archive points") {
  const TaskSpec t = canonical_dtlz(Family::kDtlz2);
  const auto weights = simplex_lattice_weights(3, 12);
  RngStream rng(9, 0);
  const Archive a = archive_from(t, lhs_sample(10, t.bounds, rng));
  const std::vector<Predictor> preds{oracle(t, 0, 0.0), oracle(t, 1, 0.0), oracle(t, 2, 0.0)};
  std::size_t cursor = 0;
  const auto props = moead_ego_propose(preds, a, weights, 5, cursor, t.bounds, DeOptions{12, 10}, rng);
  for (const auto& p : props)
    for (const auto& x : a.channels[0].xs) CHECK(scaled_gap(p, x) >= 1e-6);
}

TEST_CASE("constrained proposal without constraints is plain EI maximization") {
  RngStream r(10, 0);
  const TaskSpec quad = sample_constrained(r);
  TaskSpec t = quad;
  t.n_constraints = 0;
  RngStream rng(11, 0);
  Archive a = archive_from(quad, lhs_sample(8, quad.bounds, rng));
  a.channels.resize(1);
  const Predictor obj = oracle(quad, 0, 0.3);
  RngStream r1(12, 0), r2(12, 0);
  const Point got = cons_ego_propose(obj, {}, a, t.bounds, DeOptions{12, 10}, r1);

  double f_min = std::numeric_limits<double>::infinity();
  std::size_t inc = 0;
  for (std::size_t i = 0; i < a.channels[0].size(); ++i)
    if (a.channels[0].ys[i] < f_min) {
      f_min = a.channels[0].ys[i];
      inc = i;
    }
  auto ei = [&](std::span<const double> x) {
    const Prediction p = obj(x);
    return expected_improvement(p.mean, std::sqrt(p.variance), f_min);
  };
  RngStream sub = r2.derive(0);
  const std::vector<Point> seeds{a.channels[0].xs[inc]};
  CHECK(got == de_maximize(ei, t.bounds, DeOptions{12, 10}, sub, seeds));
}

TEST_CASE("certainly infeasible regions score zero") {
  RngStream r(13, 0);
  const TaskSpec t = sample_constrained(r);
  RngStream rng(14, 0);
  Archive a = archive_from(t, lhs_sample(8, t.bounds, rng));
  // The objective prefers x0 = 1; the constraint forbids x0 > 0.5 with certainty.
  auto obj = [](std::span<const double> x) { return Prediction{-x[0], 0.01}; };
  auto wall = [](std::span<const double> x) { return Prediction{x[0] > 0.5 ? 1.0 : -1.0, 0.0}; };
  const std::vector<Predictor> cons{wall};
  a.channels.resize(2);
  for (std::uint64_t s = 0; s < 5; ++s) {
    RngStream prng(15, s);
    const Point p = cons_ego_propose(obj, cons, a, t.bounds, DeOptions{20, 20}, prng);
    CHECK(p[0] <= 0.5);
  }
}

TEST_CASE("exact surrogates propose feasible points on the constrained family") {
  int feasible = 0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    RngStream r(100 + trial, 0);
    const TaskSpec t = sample_constrained(r);
    const Archive a = archive_from(t, lhs_sample(12, t.bounds, r));
    std::vector<Predictor> cons;
    for (std::size_t j = 0; j < 4; ++j) cons.push_back(oracle(t, 1 + j, 0.0));
    const Point p = cons_ego_propose(oracle(t, 0, 0.1), cons, a, t.bounds, DeOptions{30, 30}, r);
    feasible += evaluate(t, p).feasible() ? 1 : 0;
  }
  CHECK(feasible >= 9);
}

TEST_CASE("configuration validation") {
  OptimizerConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.n_init = 1;
  CHECK(testing::error_code([&] { validate(cfg); }) == ErrorCode::kInvalidConfig);
  cfg = OptimizerConfig{};
  cfg.n_init = 61;
  CHECK(testing::error_code([&] { validate(cfg); }) == ErrorCode::kBudgetExhaustedAtInit);
  cfg = OptimizerConfig{};
  cfg.inner_pop = 3;
  CHECK(testing::error_code([&] { validate(cfg); }) == ErrorCode::kInvalidConfig);
  cfg = OptimizerConfig{};
  cfg.batch_q = 0;
  CHECK(testing::error_code([&] { validate(cfg); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("budget equal to the initial design runs no iterations") {
  const TaskSpec t = canonical_dtlz(Family::kDtlz2);
  OptimizerConfig cfg = quick(Mode::kBaselineGp);
  cfg.fe_max = cfg.n_init = 10;
  const Archive a = run_framework(t, {}, cfg);
  CHECK(a.fe == 10);
  CHECK(a.history.size() == 10);
  for (const auto& h : a.history) CHECK(h.iteration == 0);
  CHECK(a.history[3].x == initial_design(t, 10, cfg.seed)[3]);
}

TEST_CASE("experience-based run spends the budget exactly") {
  RngStream r(20, 0);
  const TaskSpec t = sample_dtlz_variant(Family::kDtlz2, Regime::kInRange, r);
  OptimizerConfig cfg = quick(Mode::kExperienceBased);
  cfg.fe_max = 60;
  cfg.n_init = 10;
  cfg.batch_q = 5;
  const auto stores = untrained_stores(10, 3);
  const Archive a = run_framework(t, stores, cfg);
  CHECK_FALSE(a.aborted);
  CHECK(a.fe == 60);
  CHECK(a.history.size() == 60);
  for (const auto& c : a.channels) CHECK(c.size() == 60);
  CHECK(a.history.back().iteration == 10);
  CHECK(a.updates.size() == 30);
  for (const auto& u : a.updates)
    if (!u.record.accepted) CHECK(u.increments_after == u.increments_before);

  // Every archive prefix keeps the per-weight best Tchebycheff value non-increasing.
  const auto ideal = a.ideal_point(3);
  for (const auto& w : simplex_lattice_weights(3, 4)) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& h : a.history) {
      const double g = std::min(best, tchebycheff(h.eval.objectives, w, ideal));
      CHECK(g <= best);
      best = g;
    }
  }
  for (const auto& h : a.history)
    for (double v : h.x) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("truncated last batch and budget at larger designs") {
  const TaskSpec t = canonical_dtlz(Family::kDtlz1);
  OptimizerConfig cfg = quick(Mode::kBaselineGp);
  cfg.fe_max = 18;
  cfg.n_init = 10;
  cfg.batch_q = 5;
  const Archive a = run_framework(t, {}, cfg);
  CHECK(a.fe == 18);
  CHECK(a.history.back().iteration == 2);

  cfg.n_init = 100;
  cfg.fe_max = 150;
  cfg.plain.steps = 3;
  const Archive big = run_framework(t, {}, cfg);
  CHECK(big.fe == 150);
  CHECK(big.history[99].iteration == 0);
  CHECK(big.history[100].iteration == 1);
}

TEST_CASE("constrained loop keeps the best feasible objective monotone") {
  RngStream r(30, 0);
  const TaskSpec t = sample_constrained(r);
  OptimizerConfig cfg = quick(Mode::kExperienceBased);
  cfg.backend = Backend::kConsEgo;
  cfg.fe_max = 16;
  cfg.n_init = 8;
  const auto stores = untrained_stores(6, 5);
  const Archive a = run_framework(t, stores, cfg);
  CHECK(a.fe == 16);
  CHECK(a.updates.size() == 8 * 5);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& h : a.history) {
    const double next = h.eval.feasible() ? std::min(best, h.eval.objectives[0]) : best;
    CHECK(next <= best);
    best = next;
  }
  std::size_t feasible = 0;
  for (const auto& h : a.history) feasible += h.eval.feasible() ? 1 : 0;
  CHECK(a.feasible_count() == feasible);
}

TEST_CASE("mode and store mismatches are rejected") {
  const TaskSpec t = canonical_dtlz(Family::kDtlz2);
  OptimizerConfig cfg = quick(Mode::kExperienceBased);
  CHECK(testing::error_code([&] { run_framework(t, {}, cfg); }) == ErrorCode::kInvalidConfig);
  const auto wrong_dim = untrained_stores(4, 3);
  CHECK(testing::error_code([&] { run_framework(t, wrong_dim, cfg); }) == ErrorCode::kInvalidConfig);
  cfg.mode = Mode::kBaselineGp;
  const auto stores = untrained_stores(10, 3);
  CHECK(testing::error_code([&] { run_framework(t, stores, cfg); }) == ErrorCode::kInvalidConfig);
  cfg.backend = Backend::kConsEgo;
  CHECK(testing::error_code([&] { run_framework(t, {}, cfg); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("runs are deterministic per seed") {
  const TaskSpec t = canonical_dtlz(Family::kDtlz2);
  OptimizerConfig cfg = quick(Mode::kBaselineGp);
  cfg.fe_max = 20;
  cfg.seed = 77;
  const Archive a = run_framework(t, {}, cfg);
  const Archive b = run_framework(t, {}, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].x == b.history[i].x);
}

TEST_CASE("config json round trip") {
  OptimizerConfig cfg;
  cfg.backend = Backend::kConsEgo;
  cfg.mode = Mode::kBaselineGp;
  cfg.fe_max = 48;
  cfg.seed = 1234567890123ULL;
  cfg.adapt.lr_beta = 0.125;
  cfg.plain.start_thetas = {0.5, 2.0, 8.0};
  const OptimizerConfig back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
  CHECK(config_from_json(nlohmann::json{{"fe_max", 90}}).fe_max == 90);
  CHECK(testing::error_code([] { config_from_json(nlohmann::json{{"backend", "nsga"}}); }) ==
        ErrorCode::kInvalidConfig);
  CHECK(testing::error_code([] { config_from_json(nlohmann::json{{"fe_max", "many"}}); }) ==
        ErrorCode::kInvalidConfig);
}

TEST_CASE("csv log layout") {
  RngStream r(40, 0);
  const TaskSpec t = sample_constrained(r);
  OptimizerConfig cfg = quick(Mode::kBaselineGp);
  cfg.backend = Backend::kConsEgo;
  cfg.fe_max = cfg.n_init = 4;
  const Archive a = run_framework(t, {}, cfg);
  const auto dir = testing::scratch("optimize_csv");
  write_run(a, t, cfg, dir);
  std::ifstream in(dir / "log.csv");
  std::string header, row;
  std::getline(in, header);
  CHECK(header == "iter,fe,x0,x1,x2,x3,x4,x5,f0,g0,g1,g2,g3,feasible");
  std::getline(in, row);
  CHECK(row.rfind("0,1,", 0) == 0);
  CHECK(std::count(row.begin(), row.end(), ',') == 13);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "updates.json"));
}
