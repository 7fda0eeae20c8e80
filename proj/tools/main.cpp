// ebsaea command-line front end.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ebsaea/error.hpp"
#include "ebsaea/experiment.hpp"
#include "ebsaea/meta.hpp"
#include "ebsaea/optimize.hpp"
#include "ebsaea/tasks.hpp"

namespace {

using namespace ebsaea;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> runs;
  std::optional<std::string> regime;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "JSON config file");
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--out-dir", f.out_dir, "output directory");
  app->add_option("--runs", f.runs, "number of repetitions");
  app->add_option("--regime", f.regime, "related-task regime")->check(CLI::IsMember({"in", "out"}));
}

nlohmann::json read_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open config " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kInvalidConfig, path + ": " + e.what());
  }
}

ExperimentConfig experiment_config(const CommonFlags& f, std::optional<Experiment> forced) {
  nlohmann::json doc = read_config(f.config);
  if (forced) {
    const std::string name(to_string(*forced));
    if (doc.contains("experiment") && doc.at("experiment") != name) {
      throw Error(ErrorCode::kInvalidConfig, "config is for '" + doc.at("experiment").get<std::string>() +
                                                 "' but the subcommand runs '" + name + "'");
    }
    doc["experiment"] = name;
  }
  if (f.seed) doc["seed"] = *f.seed;
  if (f.out_dir) doc["out_dir"] = *f.out_dir;
  if (f.runs) doc["runs"] = *f.runs;
  if (f.regime) doc["regime"] = *f.regime;
  return experiment_from_json(doc);
}

void print_summary(const nlohmann::json& summary) {
  const auto metrics = summary.at("metrics").get<std::vector<std::string>>();
  std::printf("%-10s %5s", "mode", "size");
  for (const auto& m : metrics) std::printf(" %14s %14s", (m + ".mean").c_str(), (m + ".median").c_str());
  std::printf("\n");
  for (const auto& g : summary.at("groups")) {
    std::printf("%-10s %5zu", g.at("mode").get<std::string>().c_str(), g.at("size").get<std::size_t>());
    for (const auto& m : metrics) {
      const auto& s = g.at(m);
      if (s.value("n", 0) == 0) {
        std::printf(" %14s %14s", "-", "-");
      } else {
        std::printf(" %14.6e %14.6e", s.at("mean").get<double>(), s.at("median").get<double>());
      }
    }
    std::printf("\n");
  }
  for (const auto& c : summary.at("comparisons")) {
    std::printf("%s vs %s, size %zu, %s: %s", c.at("candidate").get<std::string>().c_str(),
                c.at("baseline").get<std::string>().c_str(), c.at("size").get<std::size_t>(),
                c.at("metric").get<std::string>().c_str(), c.at("verdict").get<std::string>().c_str());
    if (c.contains("p_value")) std::printf(" (p = %.4g)", c.at("p_value").get<double>());
    std::printf("\n");
  }
  const auto& wtl = summary.at("win_tie_loss");
  std::printf("win/tie/loss: %zu/%zu/%zu\n", wtl.at("win").get<std::size_t>(), wtl.at("tie").get<std::size_t>(),
              wtl.at("loss").get<std::size_t>());
}

int cmd_meta_train(const CommonFlags& f) {
  const ExperimentConfig cfg = experiment_config(f, std::nullopt);
  auto results = train_experiences(cfg);
  std::vector<ExperienceParams> stores;
  for (auto& r : results) {
    std::fprintf(stderr, "channel %zu: %zu updates, final loss %.6g\n", stores.size(), r.trace.updates,
                 r.trace.mean_loss.empty() ? 0.0 : r.trace.mean_loss.back());
    stores.push_back(std::move(r.params));
  }
  const auto path = cfg.out_dir / "experiences.json";
  save_experience_set(stores, path);
  std::printf("%s\n", path.string().c_str());
  return kExitOk;
}

// {"task": {...}, "optimizer": {...}, "experiences": "path", "id": "name"}
int cmd_optimize(const CommonFlags& f) {
  const nlohmann::json doc = read_config(f.config);
  if (!doc.contains("task")) throw Error(ErrorCode::kInvalidConfig, "optimize config needs a 'task' field");
  const TaskSpec task = task_from_json(doc.at("task"));
  OptimizerConfig cfg = config_from_json(doc.value("optimizer", nlohmann::json::object()));
  if (f.seed) cfg.seed = *f.seed;
  const std::filesystem::path out = f.out_dir ? *f.out_dir : doc.value("out_dir", std::string("out"));
  const std::string id = doc.value("id", "run-" + std::to_string(cfg.seed));

  std::vector<std::shared_ptr<const ExperienceParams>> exps;
  if (cfg.mode == Mode::kExperienceBased) {
    if (!doc.contains("experiences")) {
      throw Error(ErrorCode::kInvalidConfig, "experience-based mode needs an 'experiences' path");
    }
    for (auto& e : load_experience_set(doc.at("experiences").get<std::string>())) {
      exps.push_back(std::make_shared<const ExperienceParams>(std::move(e)));
    }
  }
  const Archive a = run_framework(task, exps, cfg);
  const auto dir = out / "runs" / id;
  write_run(a, task, cfg, dir);
  std::printf("%s: %zu evaluations, %zu feasible\n", dir.string().c_str(), a.fe, a.feasible_count());
  if (a.aborted) {
    std::fprintf(stderr, "run aborted: %s\n", a.abort_reason.c_str());
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_bench(const CommonFlags& f, Experiment e) {
  const ExperimentConfig cfg = experiment_config(f, e);
  const ExperimentResult res = run_experiment(cfg);
  print_summary(res.summary);
  for (const auto& la : res.archives) {
    if (la.archive.aborted) {
      std::fprintf(stderr, "run %s-%zu aborted: %s\n", la.mode.c_str(), la.run, la.archive.abort_reason.c_str());
      return kExitNumerical;
    }
  }
  return kExitOk;
}

int cmd_report(const CommonFlags& f) {
  const std::filesystem::path dir = f.out_dir ? *f.out_dir : std::string("out");
  std::vector<std::string> names;
  const auto rows = read_rows_csv(dir / "runs.csv", &names);
  Experiment e = Experiment::kDtlzMoo;
  const auto summary_path = dir / "summary.json";
  if (std::filesystem::exists(summary_path)) {
    e = experiment_from_string(read_config(summary_path.string()).at("experiment").get<std::string>());
  } else if (!names.empty() && names.front() == "nmse") {
    e = Experiment::kSinusoidRegression;
  } else if (!names.empty() && names.front() == "feasible_search") {
    e = Experiment::kConstrainedSoo;
  }
  print_summary(summarize_rows(e, names, rows));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experience-based surrogate-assisted evolutionary optimization"};
  app.require_subcommand(1);
  CommonFlags flags;
  auto* meta = app.add_subcommand("meta-train", "learn experiences from related tasks");
  auto* opt = app.add_subcommand("optimize", "run one optimization on a task");
  auto* regress = app.add_subcommand("regress-bench", "sinusoid few-shot regression benchmark");
  auto* moo = app.add_subcommand("moo-bench", "DTLZ multi-objective benchmark");
  auto* cons = app.add_subcommand("cons-bench", "constrained single-objective benchmark");
  auto* report = app.add_subcommand("report", "summarize runs.csv in an output directory");
  for (auto* sub : {meta, opt, regress, moo, cons, report}) add_common(sub, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*meta) return cmd_meta_train(flags);
    if (*opt) return cmd_optimize(flags);
    if (*regress) return cmd_bench(flags, Experiment::kSinusoidRegression);
    if (*moo) return cmd_bench(flags, Experiment::kDtlzMoo);
    if (*cons) return cmd_bench(flags, Experiment::kConstrainedSoo);
    if (*report) return cmd_report(flags);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return is_numerical(e.code()) ? kExitNumerical : kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitOk;
}
