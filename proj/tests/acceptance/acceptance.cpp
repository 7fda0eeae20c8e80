// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Benchmarks use the default experiment configurations, i.e. what
// `ebsaea regress-bench|moo-bench|cons-bench` run without a config file.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "ebsaea/experiment.hpp"
#include "ebsaea/gp.hpp"
#include "ebsaea/metrics.hpp"
#include "ebsaea/tasks.hpp"

using namespace ebsaea;

namespace {

const std::filesystem::path kOut = EBSAEA_TEST_TMP;
int g_failed = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail, double seconds) {
  std::printf("%s %d %s: %s [%.1f s]\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
  if (!ok) ++g_failed;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DeepKernelParams random_deep(std::size_t d, RngStream& rng) {
  DeepKernelParams p;
  const std::vector<std::size_t> hidden{40, 40};
  p.mlp = MlpParams::glorot(d, hidden, rng);
  for (auto& layer : p.mlp.layers)
    for (double& b : layer.biases) b = 0.1 * rng.normal();
  for (std::size_t k = 0; k < d; ++k) {
    p.base.log_theta.push_back(rng.uniform(-1.0, 1.0));
    p.base.p.push_back(rng.uniform(1.2, 1.9));
  }
  return p;
}

Dataset smooth_data(std::size_t n, std::size_t d, RngStream& rng) {
  Dataset data;
  data.bounds = unit_bounds(d);
  for (const auto& x : uniform_sample(n, data.bounds, rng)) {
    double y = 0.0;
    for (std::size_t k = 0; k < d; ++k) y += std::sin(3.0 * x[k] + static_cast<double>(k));
    data.push_back(x, y);
  }
  return data;
}

// On/off state of every hidden rectifier over the dataset.
std::vector<bool> activation_pattern(const MlpParams& mlp, const Dataset& data) {
  std::vector<bool> out;
  for (const auto& x : data.xs) {
    std::vector<double> a = scale_to_unit(x, data.bounds);
    for (std::size_t l = 0; l + 1 < mlp.layers.size(); ++l) {
      const auto& layer = mlp.layers[l];
      std::vector<double> z(layer.outputs);
      for (std::size_t o = 0; o < layer.outputs; ++o) {
        z[o] = layer.biases[o];
        for (std::size_t i = 0; i < layer.inputs; ++i) z[o] += layer.weights[o * layer.inputs + i] * a[i];
        out.push_back(z[o] > 0.0);
        z[o] = std::max(z[o], 0.0);
      }
      a = std::move(z);
    }
  }
  return out;
}

// Richardson-extrapolated central difference of f at t. The step is the
// largest of 1e-5, 1e-6, 1e-7 whose stencil stays on one linear piece of the
// network, so no rectifier kink lies inside it.
template <typename F, typename Pattern>
double central_difference(F&& f, Pattern&& pattern, double t) {
  const auto here = pattern(t);
  double h = 1e-5;
  for (; h > 1e-7; h /= 10.0) {
    if (pattern(t + h) == here && pattern(t - h) == here && pattern(t + h / 2) == here && pattern(t - h / 2) == here)
      break;
  }
  const double d1 = (f(t + h) - f(t - h)) / (2.0 * h);
  const double d2 = (f(t + h / 2) - f(t - h / 2)) / h;
  return (4.0 * d2 - d1) / 3.0;
}

void gradient_correctness() {
  Timer t;
  RngStream rng(101, 0);
  double worst = 0.0;
  std::size_t checked = 0;
  auto rel = [](double fd, double an) { return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3}); };
  for (int trial = 0; trial < 20; ++trial) {
    const auto params = random_deep(3, rng);
    const Dataset data = smooth_data(8, 3, rng);
    TaskIncrements inc = TaskIncrements::zeros(3);
    for (std::size_t k = 0; k < 3; ++k) {
      inc.delta_log_theta[k] = 0.2 * rng.normal();
      inc.delta_p[k] = 0.05 * rng.normal();
    }
    const auto res = neg_log_likelihood(params, inc, data);
    auto flat = params.flatten();
    const auto grad = res.grad.flatten();
    DeepKernelParams probe = params;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const double keep = flat[i];
      auto set = [&](double v) {
        flat[i] = v;
        probe.assign_flat(flat);
      };
      auto f = [&](double v) {
        set(v);
        return neg_log_likelihood(probe, inc, data).value;
      };
      auto pattern = [&](double v) {
        set(v);
        return activation_pattern(probe.mlp, data);
      };
      const double fd = central_difference(f, pattern, keep);
      set(keep);
      worst = std::max(worst, rel(fd, grad[i]));
      ++checked;
    }
    auto iflat = inc.flatten();
    const auto igrad = res.grad_increments.flatten();
    const auto fixed = activation_pattern(params.mlp, data);
    TaskIncrements iprobe = inc;
    for (std::size_t i = 0; i < iflat.size(); ++i) {
      const double keep = iflat[i];
      auto f = [&](double v) {
        iflat[i] = v;
        iprobe.assign_flat(iflat);
        return neg_log_likelihood(params, iprobe, data).value;
      };
      const double fd = central_difference(f, [&](double) { return fixed; }, keep);
      iflat[i] = keep;
      worst = std::max(worst, rel(fd, igrad[i]));
      ++checked;
    }
  }
  report(1, worst < 1e-4 && t.seconds() < 60.0, "gradient correctness",
         fmt("%zu partials over 20 instances, worst relative error %.2e", checked, worst), t.seconds());
}

void gp_parity() {
  Timer t;
  RngStream rng(102, 0);
  double worst_interp = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Dataset data = smooth_data(10, 3, rng);
    const DeepKernelParams k{MlpParams::identity(3), BaseKernelParams::uniform(3, 2.0, 1.7)};
    const GpState s = fit_gp(k, TaskIncrements::zeros(3), data);
    for (std::size_t i = 0; i < data.size(); ++i)
      worst_interp = std::max(worst_interp, std::abs(s.predict(data.xs[i]).mean - data.ys[i]) / s.y_std);
  }
  // Frozen from tests/oracles/gp_dense.py (explicit inverse of R, nugget 1e-8).
  struct Case {
    double lo, hi;
    std::vector<double> xs, ys;
    double theta, p;
    std::vector<std::array<double, 3>> queries;
  };
  const std::vector<Case> cases{
      {0.0, 1.0, {0.1, 0.5, 0.8}, {1.0, -0.5, 2.0}, 3.0, 2.0,
       {{{0.0, 1.7763116265163632, 0.15894952373075202}},
        {{0.3, -0.39363882434562303, 0.0832051099624687}},
        {{0.65, 0.5114558628313621, 0.03119917671316066}},
        {{1.0, 3.6064558219786473, 0.6283988495016409}}}},
      {-2.0, 3.0, {-1.5, 0.25, 2.0}, {10.0, 12.5, 9.0}, 0.7, 1.5,
       {{{-2.0, 9.588235545518927, 1.1391585674495854}},
        {{0.0, 12.365826177075727, 0.32373123919458136}},
        {{1.1, 11.014286569008014, 0.9405082613763449}},
        {{3.0, 8.145120498411494, 3.0865014808078137}}}},
      {0.0, 10.0, {2.0, 3.0, 7.5}, {0.01, 0.02, -0.03}, 12.0, 1.0,
       {{{0.5, -0.000624985112082259, 0.0004227914196448235}},
        {{2.5, 0.012226296033707982, 0.00023343835511491017}},
        {{5.0, -0.0020188143477813444, 0.0004300311677147345}},
        {{9.0, -0.007236940585001456, 0.0004227914196448235}}}},
  };
  double worst_oracle = 0.0;
  for (const auto& c : cases) {
    Dataset data;
    data.bounds = Bounds{{c.lo, c.hi}};
    for (std::size_t i = 0; i < 3; ++i) data.push_back({c.xs[i]}, c.ys[i]);
    const DeepKernelParams k{MlpParams::identity(1), BaseKernelParams::uniform(1, c.theta, c.p)};
    const GpState s = fit_gp(k, TaskIncrements::zeros(1), data);
    for (const auto& q : c.queries) {
      const auto p = s.predict(std::vector<double>{q[0]});
      worst_oracle = std::max(worst_oracle, std::abs(p.mean - q[1]) / std::max(1.0, std::abs(q[1])));
      worst_oracle = std::max(worst_oracle, std::abs(p.variance - q[2]) / std::max(1.0, std::abs(q[2])));
    }
  }
  report(2, worst_interp < 1e-6 && worst_oracle < 1e-10, "GP parity",
         fmt("interpolation error %.2e y-std, dense-oracle error %.2e", worst_interp, worst_oracle), t.seconds());
}

void igd_equivalence() {
  Timer t;
  RngStream rng(103, 0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + rng.uniform_index(3);
    auto make = [&](std::size_t n) {
      PointSet s(n, Point(m));
      for (auto& p : s)
        for (double& v : p) v = rng.uniform(-1.0, 3.0);
      return s;
    };
    const PointSet ref = make(1 + rng.uniform_index(100));
    const PointSet arch = make(1 + rng.uniform_index(100));
    double total = 0.0;
    for (const auto& z : ref) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& a : arch) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += std::pow(std::max(a[i] - z[i], 0.0), 2);
        best = std::min(best, std::sqrt(s));
      }
      total += best;
    }
    const double brute = total / static_cast<double>(ref.size());
    worst = std::max(worst, std::abs(igd_plus(ref, arch) - brute) / std::max(1.0, brute));
  }
  report(3, worst <= 1e-12, "IGD+ oracle equivalence", fmt("50 pairs, worst difference %.2e", worst), t.seconds());
}

void sinusoid_few_shot() {
  Timer t;
  ExperimentConfig cfg = default_experiment(Experiment::kSinusoidRegression);
  cfg.out_dir = kOut / "regress";
  const auto res = run_experiment(cfg);
  const double mdkl10 = mean(res.values("mdkl", "nmse", 10));
  const double gp10 = mean(res.values("gp", "nmse", 10));
  const double mdkl5 = mean(res.values("mdkl", "nmse", 5));
  const double mdkl30 = mean(res.values("mdkl", "nmse", 30));
  const bool ok = mdkl10 < gp10 && mdkl30 < mdkl5 && t.seconds() < 900.0 && cfg.n_runs == 30;
  report(4, ok, "sinusoid few-shot",
         fmt("NMSE at 10: MDKL %.3e vs GP %.3e; MDKL at 5 %.3e, at 30 %.3e", mdkl10, gp10, mdkl5, mdkl30),
         t.seconds());
}

struct MooRuns {
  ExperimentResult result;
  double seconds = 0.0;
};

MooRuns moo_bench(Regime regime, const std::string& dir) {
  Timer t;
  ExperimentConfig cfg = default_experiment(Experiment::kDtlzMoo);
  cfg.regime = regime;
  cfg.out_dir = kOut / dir;
  MooRuns r{run_experiment(cfg), 0.0};
  r.seconds = t.seconds();
  return r;
}

void update_invariant(const std::vector<const ExperimentResult*>& results, double seconds) {
  std::size_t accepted = 0, refused = 0, bad = 0;
  for (const auto* res : results) {
    for (const auto& la : res->archives) {
      for (const auto& u : la.archive.updates) {
        if (u.record.accepted) {
          ++accepted;
          if (!(u.record.e1 < u.record.e0)) ++bad;
        } else {
          ++refused;
          const bool same = u.increments_after.size() == u.increments_before.size() &&
                            std::memcmp(u.increments_after.data(), u.increments_before.data(),
                                        u.increments_after.size() * sizeof(double)) == 0;
          if (!same) ++bad;
        }
      }
    }
  }
  report(7, bad == 0 && accepted + refused > 0, "update-strategy invariant",
         fmt("%zu accepted, %zu refused, %zu violations", accepted, refused, bad), seconds);
}

void dtlz_identity() {
  Timer t;
  std::ifstream in(std::string(EBSAEA_TEST_DATA) + "/dtlz_textbook.json");
  const auto doc = nlohmann::json::parse(in);
  double worst = 0.0;
  std::size_t points = 0;
  for (Family f : {Family::kDtlz1, Family::kDtlz2, Family::kDtlz3, Family::kDtlz4, Family::kDtlz5, Family::kDtlz6,
                   Family::kDtlz7}) {
    const TaskSpec spec = canonical_dtlz(f);
    for (const auto& row : doc.at(std::string(to_string(f)))) {
      const auto got = eval_dtlz(spec, row.at("x").get<std::vector<double>>()).objectives;
      const auto want = row.at("f").get<std::vector<double>>();
      for (std::size_t j = 0; j < want.size(); ++j)
        worst = std::max(worst, std::abs(got[j] - want[j]) / std::max(1.0, std::abs(want[j])));
      ++points;
    }
  }
  report(8, worst <= 1e-12 && points == 700, "DTLZ variant identity",
         fmt("%zu points, worst relative difference %.2e", points, worst), t.seconds());
}

ExperimentResult cons_bench(const std::string& dir, double& seconds) {
  Timer t;
  ExperimentConfig cfg = default_experiment(Experiment::kConstrainedSoo);
  cfg.out_dir = kOut / dir;
  auto res = run_experiment(cfg);
  seconds = t.seconds();
  return res;
}

}  // namespace

int main() {
  std::filesystem::remove_all(kOut);
  std::filesystem::create_directories(kOut);

  gradient_correctness();
  gp_parity();
  igd_equivalence();
  sinusoid_few_shot();

  const MooRuns in = moo_bench(Regime::kInRange, "moo-in");
  {
    const auto eb = in.result.values("eb", "igd_plus");
    const auto base = in.result.values("baseline", "igd_plus");
    const bool ok = eb.size() == 10 && base.size() == 10 && median(eb) <= median(base) && in.seconds < 2700.0;
    report(5, ok, "DTLZ2 budget saving",
           fmt("median IGD+ EB (10+30) %.4f vs baseline (60+30) %.4f", median(eb), median(base)), in.seconds);
  }
  const MooRuns out = moo_bench(Regime::kOutOfRange, "moo-out");
  {
    const auto eb_in = in.result.values("eb", "igd_plus");
    const auto eb_out = out.result.values("eb", "igd_plus");
    const double rel = std::abs(median(eb_out) - median(eb_in)) / median(eb_in);
    const double p = wilcoxon_rank_sum(eb_out, eb_in).p_value;
    report(6, rel <= 0.25 && p > 0.05, "out-of-range robustness",
           fmt("median EB out %.4f vs in %.4f (%.1f%%), rank-sum p = %.3f", median(eb_out), median(eb_in),
               100.0 * rel, p),
           out.seconds);
  }
  update_invariant({&in.result, &out.result}, 0.0);
  dtlz_identity();

  double cons_seconds = 0.0;
  const auto cons = cons_bench("cons", cons_seconds);
  {
    const auto eb = cons.values("eb", "feasible_search");
    const auto base = cons.values("baseline", "feasible_search");
    const auto found = static_cast<std::size_t>(std::count_if(eb.begin(), eb.end(), [](double v) { return v >= 1.0; }));
    const bool ok = eb.size() == 10 && found >= 8 && mean(eb) >= mean(base);
    report(9, ok, "constrained backend",
           fmt("EB found feasible points in %zu/10 runs; mean feasible found EB %.1f vs baseline %.1f", found,
               mean(eb), mean(base)),
           cons_seconds);
  }

  double again_seconds = 0.0;
  cons_bench("cons-repeat", again_seconds);
  {
    std::size_t files = 0, differ = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(kOut / "cons")) {
      if (entry.path().extension() != ".csv") continue;
      const auto rel = std::filesystem::relative(entry.path(), kOut / "cons");
      ++files;
      if (slurp(entry.path()) != slurp(kOut / "cons-repeat" / rel)) ++differ;
    }
    report(10, files > 0 && differ == 0, "determinism",
           fmt("repeated cons-bench: %zu CSV files, %zu differ", files, differ), again_seconds);
  }

  std::printf("%d criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
