#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "ebsaea/metrics.hpp"
#include "support.hpp"

using namespace ebsaea;

namespace {

double brute_igd_plus(const PointSet& ref, const PointSet& arch) {
  double total = 0.0;
  for (const auto& z : ref) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : arch) {
      double s = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double e = std::max(a[i] - z[i], 0.0);
        s += e * e;
      }
      best = std::min(best, std::sqrt(s));
    }
    total += best;
  }
  return total / static_cast<double>(ref.size());
}

PointSet random_set(std::size_t n, std::size_t m, RngStream& rng) {
  PointSet s(n, Point(m));
  for (auto& p : s)
    for (double& v : p) v = rng.uniform(-1.0, 3.0);
  return s;
}

bool mutually_nondominated(const PointSet& pts) {
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (i != j && dominates(pts[i], pts[j])) return false;
  return true;
}

}  // namespace

TEST_CASE("igd+ single pairs") {
  CHECK(igd_plus({{0.0, 0.0}}, {{1.0, 1.0}}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(igd_plus({{0.0, 0.0}}, {{-1.0, 1.0}}) == 1.0);
  CHECK(igd_plus({{0.0, 0.0}}, {{-1.0, -1.0}}) == 0.0);
}

TEST_CASE("igd+ matches brute force") {
  RngStream rng(1, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 2 + rng.uniform_index(3);
    const auto ref = random_set(1 + rng.uniform_index(100), m, rng);
    const auto arch = random_set(1 + rng.uniform_index(100), m, rng);
    CHECK(testing::rel_err(igd_plus(ref, arch), brute_igd_plus(ref, arch)) <= 1e-12);
  }
}

TEST_CASE("igd+ translation invariance and dominated additions") {
  RngStream rng(2, 0);
  for (int trial = 0; trial < 20; ++trial) {
    auto ref = random_set(40, 3, rng);
    auto arch = random_set(25, 3, rng);
    const double base = igd_plus(ref, arch);
    const Point shift{rng.normal(), rng.normal(), rng.normal()};
    auto ref2 = ref, arch2 = arch;
    for (auto& p : ref2)
      for (std::size_t i = 0; i < 3; ++i) p[i] += shift[i];
    for (auto& p : arch2)
      for (std::size_t i = 0; i < 3; ++i) p[i] += shift[i];
    CHECK(igd_plus(ref2, arch2) == doctest::Approx(base).epsilon(1e-12));

    Point worse = arch[rng.uniform_index(arch.size())];
    for (double& v : worse) v += rng.uniform(0.0, 1.0);
    arch.push_back(worse);
    CHECK(igd_plus(ref, arch) <= base);
  }
}

TEST_CASE("igd+ errors") {
  CHECK(testing::error_code([] { igd_plus({}, {{1.0, 1.0}}); }) == ErrorCode::kEmptySet);
  CHECK(testing::error_code([] { igd_plus({{1.0, 1.0}}, {}); }) == ErrorCode::kEmptySet);
  CHECK(testing::error_code([] { igd_plus({{1.0, 1.0}}, {{1.0, 1.0, 1.0}}); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("dominance and nondominated filtering") {
  CHECK(dominates(std::vector<double>{1, 2}, std::vector<double>{1, 3}));
  CHECK_FALSE(dominates(std::vector<double>{1, 2}, std::vector<double>{1, 2}));
  CHECK_FALSE(dominates(std::vector<double>{0, 3}, std::vector<double>{1, 2}));
  const PointSet pts{{1, 2}, {2, 1}, {2, 2}, {1, 2}, {0, 5}};
  CHECK(nondominated_indices(pts) == std::vector<std::size_t>{0, 1, 4});
}

TEST_CASE("reference fronts") {
  RngStream rng(3, 0);
  const auto f1 = pf_reference(Family::kDtlz1, 3, 500, rng);
  CHECK(f1.size() == 500);
  for (const auto& p : f1) {
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 0.5) < 1e-10);
    for (double v : p) CHECK(v >= 0.0);
  }
  for (Family fam : {Family::kDtlz2, Family::kDtlz3, Family::kDtlz4}) {
    const auto f = pf_reference(fam, 3, 300, rng);
    for (const auto& p : f) CHECK(std::abs(p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - 1.0) < 1e-10);
    CHECK(mutually_nondominated(f));
  }
  for (Family fam : {Family::kDtlz5, Family::kDtlz6}) {
    const auto f = pf_reference(fam, 3, 200, rng);
    for (const auto& p : f) {
      CHECK(std::abs(p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - 1.0) < 1e-10);
      CHECK(p[0] == doctest::Approx(p[1]).epsilon(1e-12));
    }
    CHECK(mutually_nondominated(f));
  }
  const auto f7 = pf_reference(Family::kDtlz7, 3, 400, rng);
  CHECK(f7.size() == 400);
  CHECK(mutually_nondominated(f7));
  for (const auto& p : f7) {
    double h = 3.0;
    for (int i = 0; i < 2; ++i) h -= p[i] / 2.0 * (1.0 + std::sin(3.0 * std::numbers::pi * p[i]));
    CHECK(p[2] == doctest::Approx(2.0 * h).epsilon(1e-12));
  }
  CHECK(mutually_nondominated(f1));
  CHECK(testing::error_code([&] { pf_reference(Family::kSinusoid, 3, 10, rng); }) == ErrorCode::kUnsupportedFamily);
}

TEST_CASE("regression errors") {
  const std::vector<double> t{1.0, 2.0, 4.0, 7.0};
  CHECK(mse(t, t) == 0.0);
  CHECK(nmse(t, t) == 0.0);
  const std::vector<double> plus_one{2.0, 3.0, 5.0, 8.0};
  CHECK(mse(plus_one, t) == 1.0);
  const std::vector<double> mean(4, 3.5);
  CHECK(nmse(mean, t) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(testing::error_code([&] { mse(std::vector<double>{1.0}, t); }) == ErrorCode::kLengthMismatch);
  CHECK(testing::error_code([] { mse(std::vector<double>{}, std::vector<double>{}); }) == ErrorCode::kLengthMismatch);
  CHECK(testing::error_code([] { nmse(std::vector<double>{1, 2}, std::vector<double>{3, 3}); }) ==
        ErrorCode::kZeroVariance);
}

TEST_CASE("rank-sum exact cases") {
  struct Case {
    std::vector<double> a, b;
    double w, p;
  };
  const Case cases[] = {
      {{1, 2, 3}, {4, 5, 6}, 6.0, 0.1},
      {{1, 3, 5, 7}, {2, 4, 6, 8, 10}, 16.0, 0.4126984126984127},
      {{0.5, 0.9, 1.4}, {0.1, 0.2, 2.0, 3.0, 4.0}, 12.0, 0.7857142857142857},
  };
  for (const auto& c : cases) {
    const auto r = wilcoxon_rank_sum(c.a, c.b);
    CHECK(r.exact);
    CHECK(r.statistic == c.w);
    CHECK(r.p_value == doctest::Approx(c.p).epsilon(1e-12));
  }
  const std::vector<double> s{0.3, 0.1, 0.2};
  CHECK(wilcoxon_rank_sum(s, s).p_value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rank-sum normal approximation with ties") {
  const std::vector<double> a1{1, 1, 2, 2, 3, 3, 4, 4}, b1{2, 3, 3, 4, 5, 5, 6, 6};
  auto r = wilcoxon_rank_sum(a1, b1);
  CHECK_FALSE(r.exact);
  CHECK(r.statistic == 48.0);
  CHECK(r.p_value == doctest::Approx(0.03287355881130927).epsilon(1e-10));

  std::vector<double> a2(10), b2(12);
  std::iota(a2.begin(), a2.end(), 0.0);
  for (std::size_t i = 0; i < 12; ++i) b2[i] = static_cast<double>(i) + 2.5;
  r = wilcoxon_rank_sum(a2, b2);
  CHECK(r.statistic == 83.0);
  CHECK(r.p_value == doctest::Approx(0.034856847263039586).epsilon(1e-10));

  RngStream rng(7, 0);
  std::vector<double> x(30), y(30);
  for (double& v : x) v = rng.normal();
  for (double& v : y) v = 3.0 + rng.normal();
  CHECK(wilcoxon_rank_sum(x, y).p_value < 1e-3);

  const std::vector<double> tiny{1, 2};
  CHECK(testing::error_code([&] { wilcoxon_rank_sum(tiny, a1); }) == ErrorCode::kTooFewSamples);
}

TEST_CASE("summaries and verdicts") {
  const std::vector<double> one{4.2};
  const auto s1 = summarize(one);
  CHECK(s1.n == 1);
  CHECK(s1.std == 0.0);
  CHECK(s1.mean == 4.2);
  CHECK(s1.median == 4.2);
  const std::vector<double> v{1, 2, 3, 10};
  const auto s = summarize(v);
  CHECK(s.mean == 4.0);
  CHECK(s.median == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(50.0 / 3.0)).epsilon(1e-14));
  CHECK(testing::error_code([] { summarize(std::vector<double>{}); }) == ErrorCode::kEmptySet);

  std::vector<double> good(10), bad(10);
  for (std::size_t i = 0; i < 10; ++i) {
    good[i] = 0.1 * static_cast<double>(i);
    bad[i] = 5.0 + 0.1 * static_cast<double>(i);
  }
  CHECK(compare_samples(good, bad) == Verdict::kWin);
  CHECK(compare_samples(bad, good) == Verdict::kLoss);
  CHECK(compare_samples(good, good) == Verdict::kTie);
  CHECK(to_string(Verdict::kTie) == "tie");
}
