#include "ebsaea/meta.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "ebsaea/error.hpp"

namespace ebsaea {

ExperienceParams initial_experiences(std::size_t d, const MetaConfig& cfg) {
  RngStream rng(cfg.seed, 0x6d6c7000);
  ExperienceParams e;
  e.kernel.mlp = MlpParams::glorot(d, cfg.hidden, rng);
  e.kernel.base = BaseKernelParams::uniform(d, cfg.init_theta > 0.0 ? cfg.init_theta : 1.0, cfg.init_p);
  e.kernel.clamp_base();
  return e;
}

MetaResult meta_train(std::span<const Dataset> sources, const MetaConfig& cfg) {
  if (sources.empty()) throw Error(ErrorCode::kInvalidConfig, "meta_train needs at least one source dataset");
  ExperienceParams init = initial_experiences(sources.front().dim(), cfg);
  if (cfg.init_theta <= 0.0) calibrate_theta(init, sources);
  return meta_train(sources, cfg, std::move(init));
}

void calibrate_theta(ExperienceParams& e, std::span<const Dataset> sources, std::size_t max_sources) {
  auto& base = e.kernel.base;
  const std::size_t d = base.dim();
  std::vector<std::vector<double>> dist(d);
  for (std::size_t s = 0; s < sources.size() && s < max_sources; ++s) {
    const Dataset& data = sources[s];
    if (data.dim() != e.kernel.input_dim()) throw Error(ErrorCode::kShapeMismatch, "source dataset dimension differs");
    PointSet unit;
    for (const auto& x : data.xs) unit.push_back(scale_to_unit(x, data.bounds));
    const Matrix phi = feature_matrix(e.kernel.mlp, unit);
    for (std::size_t i = 0; i < phi.rows(); ++i)
      for (std::size_t j = i + 1; j < phi.rows(); ++j)
        for (std::size_t k = 0; k < d; ++k) dist[k].push_back(abs_pow(phi(i, k) - phi(j, k), base.p[k]));
  }
  for (std::size_t k = 0; k < d; ++k) {
    if (dist[k].empty()) continue;
    auto mid = dist[k].begin() + static_cast<std::ptrdiff_t>(dist[k].size() / 2);
    std::nth_element(dist[k].begin(), mid, dist[k].end());
    if (*mid > 0.0) base.log_theta[k] = -std::log(static_cast<double>(d) * *mid);
  }
  e.kernel.clamp_base();
}

namespace {

// First `k` entries of a random permutation of [0, n).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

TaskIncrements inner_adapt(const ExperienceParams& e, const Dataset& data, const MetaConfig& cfg, double nugget) {
  TaskIncrements inc = TaskIncrements::zeros(e.kernel.base.dim());
  if (cfg.inner_steps == 0) return inc;
  const FeatureData fd = prepare_features(e.kernel.mlp, data);
  std::vector<double> flat = inc.flatten();
  for (std::size_t s = 0; s < cfg.inner_steps; ++s) {
    const auto lik = feature_likelihood(e.kernel.base, inc, fd, nugget);
    const auto g = lik.grad_increments.flatten();
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= cfg.inner_lr * g[i];
    inc.assign_flat(flat);
    clamp_increments(e.kernel.base, inc);
    flat = inc.flatten();
  }
  return inc;
}

}  // namespace

MetaResult meta_train(std::span<const Dataset> sources, const MetaConfig& cfg, ExperienceParams init) {
  if (sources.empty()) throw Error(ErrorCode::kInvalidConfig, "meta_train needs at least one source dataset");
  if (cfg.batch == 0) throw Error(ErrorCode::kInvalidConfig, "batch must be >= 1");
  if (cfg.dm_size < 2) throw Error(ErrorCode::kInvalidConfig, "dm_size must be >= 2");
  const std::size_t d = init.kernel.input_dim();
  for (const auto& s : sources) {
    if (s.size() < cfg.dm_size) {
      throw Error(ErrorCode::kInvalidConfig, "source dataset smaller than dm_size");
    }
    if (s.dim() != d) throw Error(ErrorCode::kShapeMismatch, "source dataset dimension differs");
  }

  RngStream rng(cfg.seed, 0x4d455441);
  const std::size_t iterations = cfg.iterations();
  const std::size_t n_sources = sources.size();

  // Dataset schedule: consecutive random permutations, so a task is reused
  // only once every other task has been drawn.
  std::vector<std::size_t> schedule;
  schedule.reserve(iterations * cfg.batch);
  std::vector<std::size_t> perm(n_sources);
  while (schedule.size() < iterations * cfg.batch) {
    for (std::size_t i = 0; i < n_sources; ++i) perm[i] = i;
    rng.shuffle(perm);
    for (std::size_t i : perm) {
      if (schedule.size() == iterations * cfg.batch) break;
      schedule.push_back(i);
    }
  }

  MetaResult result;
  result.params = std::move(init);
  auto& params = result.params;
  std::vector<double> flat = params.kernel.flatten();
  Adam adam(flat.size(), cfg.lr_alpha);
  std::vector<double> grad(flat.size());

  for (std::size_t it = 0; it < iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss_sum = 0.0;
    std::size_t fitted = 0;
    std::size_t skipped = 0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const Dataset& src = sources[schedule[it * cfg.batch + b]];
      const auto idx = sample_without_replacement(src.size(), cfg.dm_size, rng);
      const Dataset dm = src.subset(idx);
      try {
        const double nugget = noise_nugget(cfg.nugget, cfg.noise_variance, dm.ys);
        const TaskIncrements inc = inner_adapt(params, dm, cfg, nugget);
        const auto lik = neg_log_likelihood(params.kernel, inc, dm, nugget);
        const auto g = lik.grad.flatten();
        bool finite = std::isfinite(lik.value);
        for (double v : g) finite = finite && std::isfinite(v);
        if (!finite) {
          ++skipped;
          continue;
        }
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
        loss_sum += lik.value;
        ++fitted;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNotPositiveDefinite && e.code() != ErrorCode::kTooFewPoints) throw;
        ++skipped;
      }
    }
    result.trace.skipped.push_back(skipped);
    result.trace.mean_loss.push_back(fitted ? loss_sum / static_cast<double>(fitted)
                                            : std::numeric_limits<double>::quiet_NaN());
    if (fitted == 0) continue;
    if (cfg.optimizer == MetaOptimizer::kAdam) {
      adam.step(flat, grad);
    } else {
      for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= cfg.lr_alpha * grad[i];
    }
    params.kernel.assign_flat(flat);
    params.kernel.clamp_base();
    flat = params.kernel.flatten();
    ++result.trace.updates;
  }
  return result;
}

nlohmann::json experiences_to_json(const ExperienceParams& params) {
  const auto& k = params.kernel;
  nlohmann::json doc;
  doc["version"] = kExperienceStoreVersion;
  doc["d"] = k.input_dim();
  doc["layer_sizes"] = k.mlp.layer_sizes();
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (const auto& layer : k.mlp.layers) {
    weights.push_back(layer.weights);
    biases.push_back(layer.biases);
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  doc["log_theta"] = k.base.log_theta;
  doc["p"] = k.base.p;
  return doc;
}

namespace {

const nlohmann::json& require(const nlohmann::json& doc, const char* field) {
  if (!doc.is_object() || !doc.contains(field)) {
    throw Error(ErrorCode::kSchemaError, std::string("missing field '") + field + "'");
  }
  return doc.at(field);
}

std::vector<double> real_array(const nlohmann::json& node, const std::string& field, std::size_t expected) {
  if (!node.is_array()) throw Error(ErrorCode::kSchemaError, "field '" + field + "' is not an array");
  if (node.size() != expected) {
    throw Error(ErrorCode::kSchemaError, "field '" + field + "' has " + std::to_string(node.size()) +
                                             " entries, expected " + std::to_string(expected));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : node) {
    if (!v.is_number()) throw Error(ErrorCode::kSchemaError, "field '" + field + "' holds a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

ExperienceParams experiences_from_json(const nlohmann::json& doc) {
  const auto& version = require(doc, "version");
  if (!version.is_number_integer() || version.get<int>() != kExperienceStoreVersion) {
    throw Error(ErrorCode::kVersionMismatch, "experience store version " + version.dump() + ", expected " +
                                                 std::to_string(kExperienceStoreVersion));
  }
  const auto& d_node = require(doc, "d");
  if (!d_node.is_number_unsigned()) throw Error(ErrorCode::kSchemaError, "field 'd' is not a count");
  const std::size_t d = d_node.get<std::size_t>();
  const auto& sizes_node = require(doc, "layer_sizes");
  if (!sizes_node.is_array() || sizes_node.empty()) {
    throw Error(ErrorCode::kSchemaError, "field 'layer_sizes' must be a non-empty array");
  }
  std::vector<std::size_t> sizes;
  for (const auto& s : sizes_node) {
    if (!s.is_number_unsigned()) throw Error(ErrorCode::kSchemaError, "field 'layer_sizes' holds a non-count");
    sizes.push_back(s.get<std::size_t>());
  }
  if (sizes.front() != d || sizes.back() != d) {
    throw Error(ErrorCode::kSchemaError, "field 'layer_sizes' must start and end with d");
  }
  const auto& weights = require(doc, "weights");
  const auto& biases = require(doc, "biases");
  const std::size_t n_layers = sizes.size() - 1;
  if (!weights.is_array() || weights.size() != n_layers) {
    throw Error(ErrorCode::kSchemaError, "field 'weights' must hold one array per layer");
  }
  if (!biases.is_array() || biases.size() != n_layers) {
    throw Error(ErrorCode::kSchemaError, "field 'biases' must hold one array per layer");
  }
  ExperienceParams e;
  e.kernel.mlp.input_dim = d;
  for (std::size_t l = 0; l < n_layers; ++l) {
    DenseLayer layer;
    layer.inputs = sizes[l];
    layer.outputs = sizes[l + 1];
    layer.weights = real_array(weights[l], "weights[" + std::to_string(l) + "]", layer.inputs * layer.outputs);
    layer.biases = real_array(biases[l], "biases[" + std::to_string(l) + "]", layer.outputs);
    e.kernel.mlp.layers.push_back(std::move(layer));
  }
  e.kernel.base.log_theta = real_array(require(doc, "log_theta"), "log_theta", d);
  e.kernel.base.p = real_array(require(doc, "p"), "p", d);
  return e;
}

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kSchemaError, path.string() + ": " + e.what());
  }
}

void write_json(const nlohmann::json& doc, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

}  // namespace

void save_experiences(const ExperienceParams& params, const std::filesystem::path& path) {
  write_json(experiences_to_json(params), path);
}

ExperienceParams load_experiences(const std::filesystem::path& path) {
  return experiences_from_json(read_json(path));
}

void save_experience_set(std::span<const ExperienceParams> channels, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["version"] = kExperienceStoreVersion;
  doc["channels"] = nlohmann::json::array();
  for (const auto& c : channels) doc["channels"].push_back(experiences_to_json(c));
  write_json(doc, path);
}

std::vector<ExperienceParams> load_experience_set(const std::filesystem::path& path) {
  const auto doc = read_json(path);
  if (doc.is_object() && doc.contains("channels")) {
    const auto& version = require(doc, "version");
    if (!version.is_number_integer() || version.get<int>() != kExperienceStoreVersion) {
      throw Error(ErrorCode::kVersionMismatch, "experience set version " + version.dump());
    }
    std::vector<ExperienceParams> out;
    for (const auto& c : doc.at("channels")) out.push_back(experiences_from_json(c));
    return out;
  }
  return {experiences_from_json(doc)};
}

}  // namespace ebsaea
