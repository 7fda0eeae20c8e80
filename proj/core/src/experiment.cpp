#include "ebsaea/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "ebsaea/error.hpp"

namespace ebsaea {

namespace {

constexpr std::uint64_t kRelatedStream = 0x52454c;
constexpr std::uint64_t kTargetStream = 0x544754;
constexpr std::uint64_t kRunSeedStream = 0x5345454453;
constexpr std::uint64_t kReferenceStream = 0x524546;
constexpr std::uint64_t kSupportStream = 0x535550;

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

}  // namespace

std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::kSinusoidRegression:
      return "sinusoid-regression";
    case Experiment::kDtlzMoo:
      return "dtlz-moo";
    default:
      return "constrained-soo";
  }
}

Experiment experiment_from_string(std::string_view name) {
  if (name == "sinusoid-regression") return Experiment::kSinusoidRegression;
  if (name == "dtlz-moo") return Experiment::kDtlzMoo;
  if (name == "constrained-soo") return Experiment::kConstrainedSoo;
  throw Error(ErrorCode::kInvalidConfig, "unknown experiment '" + std::string(name) +
                                             "' (expected sinusoid-regression|dtlz-moo|constrained-soo)");
}

ExperimentConfig default_experiment(Experiment e) {
  ExperimentConfig cfg;
  cfg.experiment = e;
  cfg.meta.n_meta = 20000;
  cfg.meta.batch = 10;
  switch (e) {
    case Experiment::kSinusoidRegression:
      cfg.family = Family::kSinusoid;
      cfg.d = 1;
      cfg.m = 1;
      cfg.related_count = 2000;
      cfg.meta.n_meta = 2000;
      cfg.related_size = 10;
      cfg.related_sampling = Sampling::kUniform;
      cfg.meta.dm_size = 10;
      cfg.n_runs = 30;
      cfg.meta.noise_variance = kSinusoidNoiseSd * kSinusoidNoiseSd;
      cfg.adapt.noise_variance = cfg.meta.noise_variance;
      cfg.plain.noise_variance = cfg.meta.noise_variance;
      break;
    case Experiment::kDtlzMoo:
      cfg.family = Family::kDtlz2;
      cfg.related_count = 500;
      cfg.related_size = 20;
      cfg.meta.dm_size = 20;
      cfg.n_runs = 10;
      cfg.eb.backend = Backend::kMoeadEgo;
      cfg.eb.mode = Mode::kExperienceBased;
      cfg.eb.n_init = 10;
      cfg.eb.fe_max = 40;
      cfg.baseline = cfg.eb;
      cfg.baseline.mode = Mode::kBaselineGp;
      cfg.baseline.n_init = 60;
      cfg.baseline.fe_max = 90;
      break;
    case Experiment::kConstrainedSoo:
      cfg.family = Family::kConstrained;
      cfg.d = kConstrainedDim;
      cfg.m = 1;
      cfg.related_count = 200;
      cfg.related_size = 60;
      cfg.meta.dm_size = 12;
      cfg.n_runs = 10;
      cfg.eb.backend = Backend::kConsEgo;
      cfg.eb.mode = Mode::kExperienceBased;
      cfg.eb.n_init = 6;
      cfg.eb.fe_max = 30;
      cfg.eb.batch_q = 1;
      cfg.baseline = cfg.eb;
      cfg.baseline.mode = Mode::kBaselineGp;
      cfg.baseline.n_init = 24;
      cfg.baseline.fe_max = 48;
      break;
  }
  cfg.meta.seed = cfg.seed;
  return cfg;
}

namespace {

void meta_from_json(const nlohmann::json& j, MetaConfig& m) {
  m.n_meta = j.value("n_meta", m.n_meta);
  m.dm_size = j.value("dm_size", m.dm_size);
  m.batch = j.value("batch", m.batch);
  m.lr_alpha = j.value("lr_alpha", m.lr_alpha);
  m.seed = j.value("seed", m.seed);
  if (j.contains("optimizer")) {
    const auto name = j.at("optimizer").get<std::string>();
    if (name == "adam") {
      m.optimizer = MetaOptimizer::kAdam;
    } else if (name == "gd") {
      m.optimizer = MetaOptimizer::kGradientDescent;
    } else {
      throw Error(ErrorCode::kInvalidConfig, "meta.optimizer must be adam or gd");
    }
  }
  m.hidden = j.value("hidden", m.hidden);
  m.init_theta = j.value("init_theta", m.init_theta);
  m.init_p = j.value("init_p", m.init_p);
  m.nugget = j.value("nugget", m.nugget);
  m.noise_variance = j.value("noise_variance", m.noise_variance);
  m.inner_steps = j.value("inner_steps", m.inner_steps);
  m.inner_lr = j.value("inner_lr", m.inner_lr);
}

nlohmann::json meta_to_json(const MetaConfig& m) {
  return {{"n_meta", m.n_meta},
          {"dm_size", m.dm_size},
          {"batch", m.batch},
          {"lr_alpha", m.lr_alpha},
          {"seed", m.seed},
          {"optimizer", m.optimizer == MetaOptimizer::kAdam ? "adam" : "gd"},
          {"hidden", m.hidden},
          {"init_theta", m.init_theta},
          {"init_p", m.init_p},
          {"nugget", m.nugget},
          {"noise_variance", m.noise_variance},
          {"inner_steps", m.inner_steps},
          {"inner_lr", m.inner_lr}};
}

const std::set<std::string> kTopLevelKeys{
    "experiment", "regime",   "family",  "d",          "m",       "related",        "meta",
    "runs",       "seed",     "support_sizes", "test_points", "adapt", "plain",     "eb",
    "baseline",   "modes",    "reference_points", "experiences", "out_dir"};

}  // namespace

ExperimentConfig experiment_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kInvalidConfig, "experiment config must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!kTopLevelKeys.contains(key)) throw Error(ErrorCode::kInvalidConfig, "unknown config key '" + key + "'");
  }
  if (!doc.contains("experiment")) throw Error(ErrorCode::kInvalidConfig, "config needs an 'experiment' field");
  try {
    ExperimentConfig cfg = default_experiment(experiment_from_string(doc.at("experiment").get<std::string>()));
    if (doc.contains("regime")) cfg.regime = regime_from_string(doc.at("regime").get<std::string>());
    if (doc.contains("family")) cfg.family = family_from_string(doc.at("family").get<std::string>());
    cfg.d = doc.value("d", cfg.d);
    cfg.m = doc.value("m", cfg.m);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.meta.seed = cfg.seed;
    if (doc.contains("related")) {
      const auto& r = doc.at("related");
      cfg.related_count = r.value("count", cfg.related_count);
      cfg.related_size = r.value("size", cfg.related_size);
      if (r.contains("sampling")) {
        const auto s = r.at("sampling").get<std::string>();
        if (s != "lhs" && s != "uniform") throw Error(ErrorCode::kInvalidConfig, "related.sampling must be lhs or uniform");
        cfg.related_sampling = s == "lhs" ? Sampling::kLhs : Sampling::kUniform;
      }
    }
    if (doc.contains("meta")) meta_from_json(doc.at("meta"), cfg.meta);
    cfg.n_runs = doc.value("runs", cfg.n_runs);
    cfg.support_sizes = doc.value("support_sizes", cfg.support_sizes);
    cfg.test_points = doc.value("test_points", cfg.test_points);
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
    if (doc.contains("eb")) cfg.eb = config_from_json(doc.at("eb"), cfg.eb);
    if (doc.contains("baseline")) cfg.baseline = config_from_json(doc.at("baseline"), cfg.baseline);
    cfg.eb.mode = Mode::kExperienceBased;
    cfg.baseline.mode = Mode::kBaselineGp;
    if (doc.contains("modes")) {
      const auto modes = doc.at("modes").get<std::vector<std::string>>();
      cfg.run_eb = cfg.run_baseline = false;
      for (const auto& m : modes) {
        if (m == "eb") {
          cfg.run_eb = true;
        } else if (m == "baseline") {
          cfg.run_baseline = true;
        } else {
          throw Error(ErrorCode::kInvalidConfig, "modes entries must be eb or baseline");
        }
      }
    }
    cfg.reference_points = doc.value("reference_points", cfg.reference_points);
    if (doc.contains("experiences") && !doc.at("experiences").is_null()) {
      cfg.experiences = doc.at("experiences").get<std::string>();
    }
    if (doc.contains("out_dir")) cfg.out_dir = doc.at("out_dir").get<std::string>();
    if (cfg.n_runs == 0) throw Error(ErrorCode::kInvalidConfig, "runs must be >= 1");
    if (cfg.related_count == 0) throw Error(ErrorCode::kInvalidConfig, "related.count must be >= 1");
    if (cfg.experiment == Experiment::kSinusoidRegression && cfg.support_sizes.empty()) {
      throw Error(ErrorCode::kInvalidConfig, "support_sizes must not be empty");
    }
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("experiment config: ") + e.what());
  }
}

nlohmann::json experiment_to_json(const ExperimentConfig& cfg) {
  nlohmann::json modes = nlohmann::json::array();
  if (cfg.run_eb) modes.push_back("eb");
  if (cfg.run_baseline) modes.push_back("baseline");
  nlohmann::json doc{
      {"experiment", std::string(to_string(cfg.experiment))},
      {"regime", cfg.regime == Regime::kInRange ? "in" : "out"},
      {"family", std::string(to_string(cfg.family))},
      {"d", cfg.d},
      {"m", cfg.m},
      {"related",
       {{"count", cfg.related_count},
        {"size", cfg.related_size},
        {"sampling", cfg.related_sampling == Sampling::kLhs ? "lhs" : "uniform"}}},
      {"meta", meta_to_json(cfg.meta)},
      {"runs", cfg.n_runs},
      {"seed", cfg.seed},
      {"support_sizes", cfg.support_sizes},
      {"test_points", cfg.test_points},
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
      {"eb", config_to_json(cfg.eb)},
      {"baseline", config_to_json(cfg.baseline)},
      {"modes", modes},
      {"reference_points", cfg.reference_points},
      {"out_dir", cfg.out_dir.string()},
  };
  doc["experiences"] = cfg.experiences ? nlohmann::json(cfg.experiences->string()) : nlohmann::json(nullptr);
  return doc;
}

namespace {

TaskSpec related_task(const ExperimentConfig& cfg, RngStream& rng) {
  switch (cfg.experiment) {
    case Experiment::kSinusoidRegression:
      return sample_sinusoid(rng);
    case Experiment::kDtlzMoo:
      return sample_dtlz_variant(cfg.family, cfg.regime, rng, cfg.d, cfg.m);
    default:
      return sample_constrained(rng);
  }
}

std::size_t channel_count(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::kSinusoidRegression:
      return 1;
    case Experiment::kDtlzMoo:
      return cfg.m;
    default:
      return 1 + kConstrainedCount;
  }
}

}  // namespace

std::vector<std::vector<Dataset>> related_datasets(const ExperimentConfig& cfg) {
  RngStream rng(cfg.seed, kRelatedStream);
  std::vector<std::vector<Dataset>> out(channel_count(cfg));
  for (auto& c : out) c.reserve(cfg.related_count);
  for (std::size_t i = 0; i < cfg.related_count; ++i) {
    const TaskSpec spec = related_task(cfg, rng);
    auto data = generate_dataset(spec, cfg.related_size, cfg.related_sampling, rng);
    for (std::size_t c = 0; c < out.size(); ++c) out[c].push_back(std::move(data[c]));
  }
  return out;
}

std::vector<MetaResult> train_experiences(const ExperimentConfig& cfg) {
  const auto sources = related_datasets(cfg);
  std::vector<MetaResult> out;
  for (std::size_t c = 0; c < sources.size(); ++c) {
    MetaConfig mc = cfg.meta;
    mc.seed = cfg.meta.seed + 0x9e3779b97f4a7c15ULL * c;
    out.push_back(meta_train(sources[c], mc));
  }
  return out;
}

std::uint64_t run_seed(const ExperimentConfig& cfg, std::size_t run) {
  return RngStream(cfg.seed, kRunSeedStream).derive(run).next_u64();
}

TaskSpec target_task(const ExperimentConfig& cfg, std::size_t run) {
  RngStream rng = RngStream(cfg.seed, kTargetStream).derive(run);
  switch (cfg.experiment) {
    case Experiment::kSinusoidRegression:
      return sample_sinusoid(rng);
    case Experiment::kDtlzMoo:
      return canonical_dtlz(cfg.family, cfg.d, cfg.m);
    default:
      return sample_constrained(rng);
  }
}

std::vector<double> ExperimentResult::values(std::string_view mode, std::string_view metric,
                                             std::optional<std::size_t> size) const {
  std::size_t col = metric_names.size();
  for (std::size_t i = 0; i < metric_names.size(); ++i)
    if (metric_names[i] == metric) col = i;
  if (col == metric_names.size()) throw Error(ErrorCode::kInvalidConfig, "no metric '" + std::string(metric) + "'");
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r.mode == mode && (!size || r.size == *size)) out.push_back(r.values[col]);
  }
  return out;
}

namespace {

struct Comparison {
  std::string candidate;
  std::string baseline;
  std::string metric;
  bool larger_is_better = false;
};

Comparison comparison_for(Experiment e) {
  switch (e) {
    case Experiment::kSinusoidRegression:
      return {"mdkl", "gp", "nmse", false};
    case Experiment::kDtlzMoo:
      return {"eb", "baseline", "igd_plus", false};
    default:
      return {"eb", "baseline", "feasible_search", true};
  }
}

std::vector<double> finite_only(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v)
    if (std::isfinite(x)) out.push_back(x);
  return out;
}

}  // namespace

nlohmann::json summarize_rows(Experiment experiment, const std::vector<std::string>& metric_names,
                              const std::vector<RunRow>& rows) {
  std::vector<std::pair<std::string, std::size_t>> groups;
  for (const auto& r : rows) {
    const std::pair<std::string, std::size_t> key{r.mode, r.size};
    if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
  }
  auto column = [&](const std::string& mode, std::size_t size, std::size_t col) {
    std::vector<double> v;
    for (const auto& r : rows)
      if (r.mode == mode && r.size == size) v.push_back(r.values[col]);
    return v;
  };
  nlohmann::json doc;
  doc["experiment"] = std::string(to_string(experiment));
  doc["metrics"] = metric_names;
  doc["groups"] = nlohmann::json::array();
  for (const auto& [mode, size] : groups) {
    nlohmann::json g{{"mode", mode}, {"size", size}};
    for (std::size_t c = 0; c < metric_names.size(); ++c) {
      const auto v = finite_only(column(mode, size, c));
      if (v.empty()) {
        g[metric_names[c]] = {{"n", 0}};
        continue;
      }
      const auto s = summarize(v);
      g[metric_names[c]] = {{"mean", s.mean}, {"std", s.std}, {"median", s.median}, {"n", s.n}};
    }
    doc["groups"].push_back(std::move(g));
  }

  const Comparison cmp = comparison_for(experiment);
  std::size_t col = metric_names.size();
  for (std::size_t c = 0; c < metric_names.size(); ++c)
    if (metric_names[c] == cmp.metric) col = c;
  std::size_t win = 0, tie = 0, loss = 0;
  doc["comparisons"] = nlohmann::json::array();
  for (const auto& [mode, size] : groups) {
    if (mode != cmp.candidate || col == metric_names.size()) continue;
    auto a = finite_only(column(cmp.candidate, size, col));
    auto b = finite_only(column(cmp.baseline, size, col));
    if (b.empty() || a.empty()) continue;
    if (cmp.larger_is_better) {
      for (double& x : a) x = -x;
      for (double& x : b) x = -x;
    }
    const Verdict v = compare_samples(a, b);
    nlohmann::json c{{"size", size},
                     {"metric", cmp.metric},
                     {"candidate", cmp.candidate},
                     {"baseline", cmp.baseline},
                     {"verdict", std::string(to_string(v))}};
    if (a.size() >= 3 && b.size() >= 3) c["p_value"] = wilcoxon_rank_sum(a, b).p_value;
    doc["comparisons"].push_back(std::move(c));
    (v == Verdict::kWin ? win : v == Verdict::kLoss ? loss : tie) += 1;
  }
  doc["win_tie_loss"] = {{"win", win}, {"tie", tie}, {"loss", loss}};
  return doc;
}

void write_rows_csv(const std::vector<std::string>& metric_names, const std::vector<RunRow>& rows,
                    const std::filesystem::path& path) {
  std::ostringstream out;
  out << "run,mode,size";
  for (const auto& n : metric_names) out << ',' << n;
  out << '\n';
  for (const auto& r : rows) {
    out << r.run << ',' << r.mode << ',' << r.size;
    for (double v : r.values) out << ',' << format_real(v);
    out << '\n';
  }
  write_text(out.str(), path);
}

std::vector<RunRow> read_rows_csv(const std::filesystem::path& path, std::vector<std::string>* metric_names) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kSchemaError, path.string() + ": empty file");
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  const auto header = split(line);
  if (header.size() < 3 || header[0] != "run" || header[1] != "mode" || header[2] != "size") {
    throw Error(ErrorCode::kSchemaError, path.string() + ": header must start with run,mode,size");
  }
  if (metric_names) metric_names->assign(header.begin() + 3, header.end());
  std::vector<RunRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw Error(ErrorCode::kSchemaError, path.string() + ": ragged row");
    RunRow r;
    r.run = std::stoul(cells[0]);
    r.mode = cells[1];
    r.size = std::stoul(cells[2]);
    for (std::size_t i = 3; i < cells.size(); ++i) r.values.push_back(std::strtod(cells[i].c_str(), nullptr));
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

void write_meta_trace(const std::vector<MetaTrace>& traces, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "channel,iteration,mean_loss,skipped\n";
  for (std::size_t c = 0; c < traces.size(); ++c) {
    for (std::size_t i = 0; i < traces[c].mean_loss.size(); ++i) {
      out << c << ',' << i << ',' << format_real(traces[c].mean_loss[i]) << ',' << traces[c].skipped[i] << '\n';
    }
  }
  write_text(out.str(), path);
}

void run_regression(const ExperimentConfig& cfg, const std::vector<std::shared_ptr<const ExperienceParams>>& exps,
                    ExperimentResult& res) {
  res.metric_names = {"nmse"};
  std::size_t max_size = 0;
  for (std::size_t s : cfg.support_sizes) max_size = std::max(max_size, s);
  const Bounds bounds{Interval{-5.0, 5.0}};
  for (std::size_t r = 0; r < cfg.n_runs; ++r) {
    const TaskSpec target = target_task(cfg, r);
    RngStream rng(run_seed(cfg, r), kSupportStream);
    const PointSet test_x = uniform_sample(cfg.test_points, bounds, rng);
    std::vector<double> truth;
    for (const auto& x : test_x) truth.push_back(eval_sinusoid(target, x[0], nullptr));
    const PointSet support_x = uniform_sample(max_size, bounds, rng);
    Dataset support;
    support.bounds = bounds;
    for (const auto& x : support_x) support.push_back(x, eval_sinusoid(target, x[0], &rng));

    for (std::size_t size : cfg.support_sizes) {
      std::vector<std::size_t> idx(size);
      for (std::size_t i = 0; i < size; ++i) idx[i] = i;
      const Dataset data = support.subset(idx);
      std::vector<double> pred(test_x.size());
      if (cfg.run_eb) {
        const Surrogate s = adapt(Surrogate(exps.front(), cfg.adapt), data);
        for (std::size_t i = 0; i < test_x.size(); ++i) pred[i] = s.predict(test_x[i]).mean;
        res.rows.push_back({r, "mdkl", size, {nmse(pred, truth)}});
      }
      if (cfg.run_baseline) {
        const auto params = fit_plain_gp(data, cfg.plain);
        const GpState st = fit_gp(params, TaskIncrements::zeros(1), data,
                                  noise_nugget(cfg.plain.nugget, cfg.plain.noise_variance, data.ys));
        for (std::size_t i = 0; i < test_x.size(); ++i) pred[i] = st.predict(test_x[i]).mean;
        res.rows.push_back({r, "gp", size, {nmse(pred, truth)}});
      }
    }
  }
}

void run_optimization(const ExperimentConfig& cfg, const std::vector<std::shared_ptr<const ExperienceParams>>& exps,
                      ExperimentResult& res) {
  const bool moo = cfg.experiment == Experiment::kDtlzMoo;
  res.metric_names = moo ? std::vector<std::string>{"igd_plus", "fe"}
                         : std::vector<std::string>{"feasible_search", "feasible_total", "best_feasible", "fe"};
  PointSet reference;
  if (moo) {
    RngStream ref_rng(cfg.seed, kReferenceStream);
    reference = pf_reference(cfg.family, cfg.m, cfg.reference_points, ref_rng);
  }
  for (std::size_t r = 0; r < cfg.n_runs; ++r) {
    const TaskSpec target = target_task(cfg, r);
    const std::uint64_t seed = run_seed(cfg, r);
    for (int pass = 0; pass < 2; ++pass) {
      const bool eb = pass == 0;
      if (eb ? !cfg.run_eb : !cfg.run_baseline) continue;
      OptimizerConfig oc = eb ? cfg.eb : cfg.baseline;
      oc.seed = seed;
      const std::vector<std::shared_ptr<const ExperienceParams>> none;
      Archive a = run_framework(target, eb ? exps : none, oc);
      const std::string mode = eb ? "eb" : "baseline";
      write_run(a, target, oc, cfg.out_dir / "runs" / (mode + "-" + std::to_string(r)));
      RunRow row{r, mode, 0, {}};
      if (moo) {
        PointSet objs;
        for (const auto& h : a.history) objs.push_back(h.eval.objectives);
        row.values = {igd_plus(reference, objs), static_cast<double>(a.fe)};
      } else {
        double search = 0.0;
        double best = std::numeric_limits<double>::quiet_NaN();
        for (const auto& h : a.history) {
          if (!h.eval.feasible()) continue;
          if (h.iteration > 0) search += 1.0;
          if (!(best <= h.eval.objectives[0])) best = h.eval.objectives[0];
        }
        row.values = {search, static_cast<double>(a.feasible_count()), best, static_cast<double>(a.fe)};
      }
      res.rows.push_back(std::move(row));
      res.archives.push_back({r, mode, std::move(a)});
    }
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  ExperimentResult res;
  std::vector<ExperienceParams> stores;
  if (cfg.run_eb) {
    if (cfg.experiences) {
      stores = load_experience_set(*cfg.experiences);
    } else {
      for (auto& t : train_experiences(cfg)) {
        stores.push_back(std::move(t.params));
        res.traces.push_back(std::move(t.trace));
      }
      write_meta_trace(res.traces, cfg.out_dir / "meta_trace.csv");
    }
    if (stores.size() != channel_count(cfg)) {
      throw Error(ErrorCode::kInvalidConfig, "experience set has " + std::to_string(stores.size()) +
                                                 " channels, experiment needs " + std::to_string(channel_count(cfg)));
    }
    save_experience_set(stores, cfg.out_dir / "experiences.json");
  }
  std::vector<std::shared_ptr<const ExperienceParams>> exps;
  for (auto& s : stores) exps.push_back(std::make_shared<const ExperienceParams>(std::move(s)));

  if (cfg.experiment == Experiment::kSinusoidRegression) {
    run_regression(cfg, exps, res);
  } else {
    run_optimization(cfg, exps, res);
  }
  write_rows_csv(res.metric_names, res.rows, cfg.out_dir / "runs.csv");
  res.summary = summarize_rows(cfg.experiment, res.metric_names, res.rows);
  res.summary["config"] = experiment_to_json(cfg);
  write_text(res.summary.dump(1) + "\n", cfg.out_dir / "summary.json");
  return res;
}

}  // namespace ebsaea
