#pragma once

// Experiment orchestration: plans, datasets, reconstruction sweeps, the
// transformer -> reservoir climate pipeline, leave-out rotations and
// hyperparameter search objectives.  Every stage seed is derived from the
// plan's master seed.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chronoweft/config.hpp"
#include "chronoweft/dynsys.hpp"
#include "chronoweft/error.hpp"
#include "chronoweft/hyperopt.hpp"
#include "chronoweft/io.hpp"
#include "chronoweft/manifest.hpp"
#include "chronoweft/metrics.hpp"
#include "chronoweft/observe.hpp"
#include "chronoweft/reservoir.hpp"
#include "chronoweft/transformer.hpp"

namespace chronoweft::harness {

inline constexpr const char* kOutputRootEnv = "CHRONOWEFT_OUTPUT_ROOT";
inline constexpr std::string_view kStochasticTarget = "stochastic";
inline constexpr double kStochasticKernelSigma = 12.0;

/// Relative paths are placed under $CHRONOWEFT_OUTPUT_ROOT when it is set.
[[nodiscard]] inline std::filesystem::path resolve_output(const std::filesystem::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return std::filesystem::path(root) / p;
  return p;
}

/// "all", "all-minus:a,b", or an explicit comma list.  Names are
/// canonicalized and checked against the catalog; order follows the catalog.
[[nodiscard]] inline std::vector<std::string> resolve_pool(std::string_view selector) {
  auto split = [](std::string_view s) {
    std::set<std::string> out;
    while (!s.empty()) {
      const auto comma = s.find(',');
      const auto item = detail::trim(s.substr(0, comma));
      if (!item.empty()) out.insert(find_system(item).name);
      if (comma == std::string_view::npos) break;
      s = s.substr(comma + 1);
    }
    return out;
  };
  selector = detail::trim(selector);
  std::set<std::string> include, exclude;
  bool all = false;
  if (selector == "all") {
    all = true;
  } else if (selector.rfind("all-minus:", 0) == 0) {
    all = true;
    exclude = split(selector.substr(10));
  } else {
    include = split(selector);
  }
  std::vector<std::string> out;
  for (const auto& s : catalog()) {
    if ((all && !exclude.count(s.name)) || include.count(s.name)) out.push_back(s.name);
  }
  if (out.empty()) throw ValidationError("pool selector '" + std::string(selector) + "' selects no systems");
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory generation

struct SamplingPolicy {
  std::optional<std::size_t> fixed_subsample;  // empty: per-system stride
  std::size_t transient_steps = kDefaultTransientSteps;
  double dt = kDefaultDt;

  [[nodiscard]] std::size_t stride(const SystemSpec& s) const {
    return fixed_subsample ? *fixed_subsample : s.sampling_stride(kSamplesPerCycle, dt);
  }
};

/// simulate -> drop transient -> subsample -> project to 3 dims -> normalize.
[[nodiscard]] inline TrajectoryMatrix generate_trajectory(const SystemSpec& spec, std::size_t rows,
                                                          std::size_t subsample, std::uint64_t seed,
                                                          std::size_t transient_steps = kDefaultTransientSteps,
                                                          double dt = kDefaultDt) {
  if (rows == 0 || subsample == 0) throw ValidationError("generate_trajectory: rows and subsample must be >= 1");
  const RawTrajectory raw = simulate(spec, transient_steps + rows * subsample, dt, seed);
  return preprocess(raw, transient_steps, subsample, std::nullopt);
}

/// Test data for a target: a catalog system, or the smoothed-noise signal.
[[nodiscard]] inline TrajectoryMatrix target_trajectory(const std::string& name, std::size_t rows,
                                                        const SamplingPolicy& sampling, std::uint64_t seed) {
  if (name == kStochasticTarget) return gen_stochastic_signal(rows, 3, kStochasticKernelSigma, seed);
  const SystemSpec spec = find_system(name);
  return generate_trajectory(spec, rows, sampling.stride(spec), seed, sampling.transient_steps, sampling.dt);
}

// ---------------------------------------------------------------------------
// Plan

struct ClimateSettings {
  std::size_t segments = 3;
  std::size_t training_rows = 20'000;  // T_l, summed over segments
  std::size_t horizon = 10'000;
  std::size_t rmse_horizon = 150;
  std::size_t warmup = 200;
  double sparsity = 0.5;
  double noise = 0.05;
  double cell = kDefaultCellSize;
};

struct ExperimentPlan {
  std::string profile = "desk";
  std::string pool_selector = "all-minus:food_chain,lorenz,lotka_volterra";
  std::vector<std::string> pool;
  std::vector<std::string> targets{"lorenz"};
  std::vector<std::size_t> seq_lens{200};
  std::vector<double> sparsities{0.5};
  std::vector<double> noises{0.05};
  std::size_t realizations = 50;
  std::uint64_t seed = 0;
  std::size_t test_rows = 20'000;
  SamplingPolicy sampling;
  TransformerConfig transformer = TransformerConfig::desk();
  std::string reservoir_preset = "lorenz";
  ReservoirConfig reservoir = ReservoirConfig::preset("lorenz");
  ClimateSettings climate;
  std::size_t rotation_group = 4;
  std::size_t search_trials = 0;  // 0: per-target default
  std::map<std::string, std::string> search_space;

  /// Canonical, fully resolved form: defaults included, so changing a
  /// default changes the hash.
  [[nodiscard]] KeyValueConfig to_config() const;
  [[nodiscard]] std::string hash() const { return to_config().hash(); }

  void validate() const {
    if (pool.empty()) throw ValidationError("plan: empty training pool");
    if (realizations == 0) throw ValidationError("plan: realizations must be >= 1");
    if (rotation_group == 0) throw ValidationError("plan: rotation group size must be >= 1");
    const std::set<std::string> p(pool.begin(), pool.end());
    for (const auto& t : targets) {
      if (p.count(t)) throw ValidationError("plan: target '" + t + "' is also in the training pool");
    }
    for (auto L : seq_lens) {
      if (L == 0 || L > transformer.max_len) {
        throw SequenceLengthError("plan: sequence length " + std::to_string(L) + " outside [1, " +
                                  std::to_string(transformer.max_len) + "]");
      }
    }
    for (double s : sparsities) {
      if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("plan: sparsity outside [0, 1]");
    }
    transformer.validate();
    reservoir.validate();
  }
};

namespace detail {

inline void set_transformer_field(TransformerConfig& c, const std::string& key, const std::string& v) {
  auto u = [&](std::size_t& f) { f = static_cast<std::size_t>(std::stoull(v)); };
  auto d = [&](double& f) { f = std::stod(v); };
  auto b = [&](bool& f) { f = v == "true" || v == "1"; };
  try {
    if (key == "input_dim") u(c.input_dim);
    else if (key == "embed_dim") u(c.embed_dim);
    else if (key == "heads") u(c.heads);
    else if (key == "blocks") u(c.blocks);
    else if (key == "ffn_dim") u(c.ffn_dim);
    else if (key == "d_k") u(c.d_k);
    else if (key == "d_v") u(c.d_v);
    else if (key == "max_len") u(c.max_len);
    else if (key == "dropout") d(c.dropout);
    else if (key == "lr") d(c.lr);
    else if (key == "batch_size") u(c.batch_size);
    else if (key == "epochs") u(c.epochs);
    else if (key == "smooth_weight") d(c.smooth_weight);
    else if (key == "data_length") u(c.data_length);
    else if (key == "noise_sigma") d(c.noise_sigma);
    else if (key == "steps_per_epoch") u(c.steps_per_epoch);
    else if (key == "masked_only_loss") b(c.masked_only_loss);
    else if (key == "positional_encoding") b(c.positional_encoding);
    else throw ValidationError("unknown transformer setting '" + key + "'");
  } catch (const std::logic_error&) {
    throw ValidationError("transformer setting '" + key + "' has invalid value '" + v + "'");
  }
}

inline void put_transformer(KeyValueConfig& kv, const std::string& prefix, const TransformerConfig& c) {
  kv.set(prefix + "input_dim", std::uint64_t{c.input_dim});
  kv.set(prefix + "embed_dim", std::uint64_t{c.embed_dim});
  kv.set(prefix + "heads", std::uint64_t{c.heads});
  kv.set(prefix + "blocks", std::uint64_t{c.blocks});
  kv.set(prefix + "ffn_dim", std::uint64_t{c.ffn_dim});
  kv.set(prefix + "d_k", std::uint64_t{c.d_k});
  kv.set(prefix + "d_v", std::uint64_t{c.d_v});
  kv.set(prefix + "max_len", std::uint64_t{c.max_len});
  kv.set(prefix + "dropout", c.dropout);
  kv.set(prefix + "lr", c.lr);
  kv.set(prefix + "batch_size", std::uint64_t{c.batch_size});
  kv.set(prefix + "epochs", std::uint64_t{c.epochs});
  kv.set(prefix + "smooth_weight", c.smooth_weight);
  kv.set(prefix + "data_length", std::uint64_t{c.data_length});
  kv.set(prefix + "noise_sigma", c.noise_sigma);
  kv.set(prefix + "steps_per_epoch", std::uint64_t{c.steps_per_epoch});
  kv.set(prefix + "masked_only_loss", c.masked_only_loss);
  kv.set(prefix + "positional_encoding", c.positional_encoding);
}

inline void set_reservoir_field(ReservoirConfig& c, const std::string& key, const std::string& v) {
  try {
    if (key == "size") c.size = static_cast<std::size_t>(std::stoull(v));
    else if (key == "leak") c.leak = std::stod(v);
    else if (key == "ridge") c.ridge = std::stod(v);
    else if (key == "input_scale") c.input_scale = std::stod(v);
    else if (key == "spectral_radius") c.spectral_radius = std::stod(v);
    else if (key == "link_prob") c.link_prob = std::stod(v);
    else if (key == "train_noise") c.train_noise = std::stod(v);
    else if (key == "washout") c.washout = static_cast<std::size_t>(std::stoull(v));
    else if (key == "seed") c.seed = std::stoull(v);
    else throw ValidationError("unknown reservoir setting '" + key + "'");
  } catch (const std::logic_error&) {
    throw ValidationError("reservoir setting '" + key + "' has invalid value '" + v + "'");
  }
}

inline void put_reservoir(KeyValueConfig& kv, const std::string& prefix, const ReservoirConfig& c) {
  kv.set(prefix + "size", std::uint64_t{c.size});
  kv.set(prefix + "leak", c.leak);
  kv.set(prefix + "ridge", c.ridge);
  kv.set(prefix + "input_scale", c.input_scale);
  kv.set(prefix + "spectral_radius", c.spectral_radius);
  kv.set(prefix + "link_prob", c.link_prob);
  kv.set(prefix + "train_noise", c.train_noise);
  kv.set(prefix + "washout", std::uint64_t{c.washout});
  kv.set(prefix + "seed", c.seed);
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, std::string>) {
      out += items[i];
    } else if constexpr (std::is_floating_point_v<T>) {
      out += format_double(items[i]);
    } else {
      out += std::to_string(items[i]);
    }
  }
  return out;
}

inline const std::set<std::string>& plan_keys() {
  static const std::set<std::string> keys = {
      "profile",         "pool",          "targets",          "sweep.seq_len",         "sweep.sparsity",
      "sweep.noise",     "realizations",  "seed",             "test.rows",             "sampling",
      "subsample",       "transient",     "dt",               "reservoir.preset",      "climate.segments",
      "climate.training_rows", "climate.horizon", "climate.rmse_horizon", "climate.warmup", "climate.sparsity",
      "climate.noise",   "climate.cell",  "rotation.group_size", "search.trials"};
  return keys;
}

}  // namespace detail

inline KeyValueConfig ExperimentPlan::to_config() const {
  KeyValueConfig kv;
  kv.set("profile", profile);
  kv.set("pool", detail::join(pool));
  kv.set("targets", detail::join(targets));
  kv.set("sweep.seq_len", detail::join(seq_lens));
  kv.set("sweep.sparsity", detail::join(sparsities));
  kv.set("sweep.noise", detail::join(noises));
  kv.set("realizations", std::uint64_t{realizations});
  kv.set("seed", seed);
  kv.set("test.rows", std::uint64_t{test_rows});
  kv.set("sampling", std::string(sampling.fixed_subsample ? "fixed" : "per_system"));
  if (sampling.fixed_subsample) kv.set("subsample", std::uint64_t{*sampling.fixed_subsample});
  kv.set("transient", std::uint64_t{sampling.transient_steps});
  kv.set("dt", sampling.dt);
  detail::put_transformer(kv, "transformer.", transformer);
  kv.set("reservoir.preset", reservoir_preset);
  detail::put_reservoir(kv, "reservoir.", reservoir);
  kv.set("climate.segments", std::uint64_t{climate.segments});
  kv.set("climate.training_rows", std::uint64_t{climate.training_rows});
  kv.set("climate.horizon", std::uint64_t{climate.horizon});
  kv.set("climate.rmse_horizon", std::uint64_t{climate.rmse_horizon});
  kv.set("climate.warmup", std::uint64_t{climate.warmup});
  kv.set("climate.sparsity", climate.sparsity);
  kv.set("climate.noise", climate.noise);
  kv.set("climate.cell", climate.cell);
  kv.set("rotation.group_size", std::uint64_t{rotation_group});
  kv.set("search.trials", std::uint64_t{search_trials});
  for (const auto& [k, v] : search_space) kv.set("search.space." + k, v);
  return kv;
}

/// Builds a plan from a config; unknown keys are rejected so typos do not
/// silently fall back to defaults.
[[nodiscard]] inline ExperimentPlan plan_from_config(const KeyValueConfig& kv) {
  for (const auto& [k, v] : kv.entries()) {
    if (detail::plan_keys().count(k) || k.rfind("transformer.", 0) == 0 || k.rfind("reservoir.", 0) == 0 ||
        k.rfind("search.space.", 0) == 0) {
      continue;
    }
    throw ValidationError("plan: unknown key '" + k + "'");
  }
  ExperimentPlan p;
  p.profile = kv.get("profile", "desk");
  if (p.profile == "desk") {
    p.transformer = TransformerConfig::desk();
  } else if (p.profile == "paper") {
    p.transformer = TransformerConfig::paper();
  } else {
    throw ValidationError("plan: profile must be desk or paper, got '" + p.profile + "'");
  }
  for (const auto& [k, v] : kv.section("transformer.")) detail::set_transformer_field(p.transformer, k, v);

  p.pool_selector = kv.get("pool", p.pool_selector);
  p.pool = resolve_pool(p.pool_selector);
  if (kv.has("targets")) {
    p.targets.clear();
    for (const auto& t : kv.list("targets")) p.targets.push_back(t == kStochasticTarget ? t : find_system(t).name);
  }
  if (kv.has("sweep.seq_len")) {
    p.seq_lens.clear();
    for (double v : kv.numbers("sweep.seq_len")) p.seq_lens.push_back(static_cast<std::size_t>(v));
  }
  if (kv.has("sweep.sparsity")) p.sparsities = kv.numbers("sweep.sparsity");
  if (kv.has("sweep.noise")) p.noises = kv.numbers("sweep.noise");
  p.realizations = kv.integer("realizations", p.realizations);
  p.seed = kv.integer("seed", p.seed);
  p.test_rows = kv.integer("test.rows", p.test_rows);
  const std::string sampling = kv.get("sampling", "per_system");
  if (sampling == "fixed") {
    p.sampling.fixed_subsample = kv.integer("subsample", kDefaultSubsample);
  } else if (sampling != "per_system") {
    throw ValidationError("plan: sampling must be per_system or fixed");
  }
  p.sampling.transient_steps = kv.integer("transient", p.sampling.transient_steps);
  p.sampling.dt = kv.number("dt", p.sampling.dt);

  p.reservoir_preset = kv.get("reservoir.preset", p.reservoir_preset);
  p.reservoir = ReservoirConfig::preset(p.reservoir_preset);
  for (const auto& [k, v] : kv.section("reservoir.")) {
    if (k != "preset") detail::set_reservoir_field(p.reservoir, k, v);
  }
  auto& c = p.climate;
  c.segments = kv.integer("climate.segments", c.segments);
  c.training_rows = kv.integer("climate.training_rows", c.training_rows);
  c.horizon = kv.integer("climate.horizon", c.horizon);
  c.rmse_horizon = kv.integer("climate.rmse_horizon", c.rmse_horizon);
  c.warmup = kv.integer("climate.warmup", c.warmup);
  c.sparsity = kv.number("climate.sparsity", c.sparsity);
  c.noise = kv.number("climate.noise", c.noise);
  c.cell = kv.number("climate.cell", c.cell);
  p.rotation_group = kv.integer("rotation.group_size", p.rotation_group);
  p.search_trials = kv.integer("search.trials", p.search_trials);
  p.search_space = kv.section("search.space.");
  p.validate();
  return p;
}

/// Named sweep presets for the qualitative figure reproductions.
///   fig4   reconstruction error over the (L_s, S_r) plane on the targets
///   fig5   transformer -> reservoir climate pipeline on the targets
///   fig9   reconstruction error over the (sigma, S_r) noise plane
///   fig12  smoothed-noise signal against the dynamical targets
[[nodiscard]] inline KeyValueConfig preset_config(std::string_view name) {
  KeyValueConfig kv;
  if (name == "fig4") {
    kv.set("targets", std::string("food_chain,lorenz,lotka_volterra"));
    kv.set("sweep.seq_len", std::string("50,100,150,200,250"));
    kv.set("sweep.sparsity", std::string("0.1,0.3,0.5,0.7,0.9"));
    kv.set("realizations", std::uint64_t{50});
  } else if (name == "fig5") {
    kv.set("targets", std::string("lorenz,lotka_volterra"));
  } else if (name == "fig9") {
    kv.set("targets", std::string("food_chain,lorenz,lotka_volterra"));
    kv.set("sweep.noise", std::string("0,0.05,0.1,0.2"));
    kv.set("sweep.sparsity", std::string("0.1,0.3,0.5,0.7,0.9"));
    kv.set("realizations", std::uint64_t{50});
  } else if (name == "fig12") {
    kv.set("targets", std::string("stochastic,food_chain,lorenz,lotka_volterra"));
    kv.set("sweep.sparsity", std::string("0.1,0.3,0.5,0.7,0.9"));
    kv.set("realizations", std::uint64_t{50});
  } else {
    throw ValidationError("unknown preset '" + std::string(name) + "' (fig4, fig5, fig9, fig12)");
  }
  return kv;
}

// ---------------------------------------------------------------------------
// Datasets

struct DatasetEntry {
  std::string system;
  std::filesystem::path file;
  std::uint64_t seed = 0;
  std::size_t rows = 0;
  std::size_t subsample = 0;
};

struct DatasetBuild {
  std::vector<DatasetEntry> entries;
  std::vector<std::pair<std::string, std::string>> skipped;  // (system, reason)
};

[[nodiscard]] inline std::uint64_t dataset_seed(const ExperimentPlan& plan, const std::string& system) {
  return derive_seed(plan.seed, "dataset:" + system);
}

/// In-memory training pool.  Systems whose integration diverges are skipped
/// and reported through `warn`.
[[nodiscard]] inline TrainingRegime build_regime(const ExperimentPlan& plan, const std::vector<std::string>& pool,
                                                 const std::function<void(const std::string&)>& warn = {}) {
  TrainingRegime r;
  r.seed = derive_seed(plan.seed, "train");
  for (const auto& name : pool) {
    const SystemSpec spec = find_system(name);
    try {
      r.pool.push_back({name, generate_trajectory(spec, plan.transformer.data_length, plan.sampling.stride(spec),
                                                  dataset_seed(plan, name), plan.sampling.transient_steps,
                                                  plan.sampling.dt)});
    } catch (const NumericalError& e) {
      if (warn) warn("skipping " + name + ": " + e.what());
    }
  }
  if (r.pool.empty()) throw InsufficientDataError("build_regime: every pool system failed to integrate");
  return r;
}

/// Writes one trajectory file per pool system into `dir`.
[[nodiscard]] inline DatasetBuild build_dataset(const ExperimentPlan& plan, const std::filesystem::path& dir,
                                                const std::function<void(const std::string&)>& warn = {}) {
  DatasetBuild out;
  for (const auto& name : plan.pool) {
    const SystemSpec spec = find_system(name);
    DatasetEntry e{name, dir / (name + ".cwtj"), dataset_seed(plan, name), plan.transformer.data_length,
                   plan.sampling.stride(spec)};
    try {
      io::write_trajectory(e.file, generate_trajectory(spec, e.rows, e.subsample, e.seed,
                                                       plan.sampling.transient_steps, plan.sampling.dt));
      out.entries.push_back(std::move(e));
    } catch (const NumericalError& err) {
      out.skipped.emplace_back(name, err.what());
      if (warn) warn("skipping " + name + ": " + err.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Long-sequence reconstruction

/// Reconstructs a series longer than max_len in consecutive windows.
[[nodiscard]] inline TrajectoryMatrix reconstruct_windows(const SparseSeries& sparse, const TransformerParams& params) {
  const std::size_t W = params.config.max_len;
  TrajectoryMatrix out;
  out.dt_effective = sparse.dt_effective;
  out.norm_stats = sparse.norm_stats;
  out.data.resize(sparse.values.rows(), sparse.values.cols());
  for (std::size_t start = 0; start < sparse.length(); start += W) {
    const std::size_t len = std::min(W, sparse.length() - start);
    const auto s = static_cast<Eigen::Index>(start), l = static_cast<Eigen::Index>(len);
    out.data.middleRows(s, l) = forward(sparse.values.middleRows(s, l), params, Mode::eval);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reconstruction sweep

struct SweepOutput {
  CsvTable realizations{{"config_hash", "system", "seq_len", "sparsity", "noise", "realization", "seed", "offset",
                         "mse", "rmse", "baseline_mse"}};
  CsvTable summary{{"config_hash", "system", "seq_len", "sparsity", "noise", "realizations", "mean_mse", "median_mse",
                    "mean_rmse", "rs_0.01", "median_baseline_mse"}};
  std::vector<EvalReport> reports;
  std::vector<std::vector<double>> mses;  // per report, in realization order
};

[[nodiscard]] inline std::uint64_t realization_seed(std::uint64_t master, const std::string& system, std::size_t L,
                                                    double sparsity, double noise, std::size_t r) {
  return derive_seed(master, "sweep:" + system + ":" + std::to_string(L) + ":" + format_double(sparsity) + ":" +
                                 format_double(noise),
                     r);
}

/// One realization: random window of the test trajectory, fresh mask and
/// noise, reconstruction, score.
struct RealizationScore {
  std::uint64_t seed = 0;
  std::size_t offset = 0;
  double mse = 0.0;
  double baseline_mse = 0.0;
};

/// Scores one already-cut window.
[[nodiscard]] inline RealizationScore score_window(const TrajectoryMatrix& window, const TransformerParams& params,
                                                   double sparsity, double noise, std::uint64_t seed) {
  RealizationScore s;
  s.seed = seed;
  const SparseSeries obs = apply_observation(window, {sparsity, noise, 0.0, derive_seed(seed, "observe")});
  s.mse = mse(forward(obs.values, params, Mode::eval), window.data);
  s.baseline_mse = mse(linear_interpolation(obs), window.data);
  return s;
}

[[nodiscard]] inline RealizationScore score_realization(const TrajectoryMatrix& test, const TransformerParams& params,
                                                        std::size_t L, double sparsity, double noise,
                                                        std::uint64_t seed) {
  if (test.length() < L) throw InsufficientDataError("test trajectory shorter than sequence length");
  Rng rng = make_rng(seed);
  const std::size_t offset = std::uniform_int_distribution<std::size_t>(0, test.length() - L)(rng);
  RealizationScore s = score_window(test.segment(offset, L), params, sparsity, noise, seed);
  s.offset = offset;
  return s;
}

/// Scores realization `r` of `system`.  The smoothed-noise target has no
/// attractor to sample from: each realization draws a fresh signal of length
/// L, min-max normalized over that window.
[[nodiscard]] inline RealizationScore score_target(const std::string& system, const TrajectoryMatrix* test,
                                                   const TransformerParams& params, std::size_t L, double sparsity,
                                                   double noise, std::uint64_t seed) {
  if (system == kStochasticTarget) {
    const TrajectoryMatrix window = gen_stochastic_signal(L, params.config.input_dim, kStochasticKernelSigma,
                                                          derive_seed(seed, "signal"));
    return score_window(window, params, sparsity, noise, seed);
  }
  return score_realization(*test, params, L, sparsity, noise, seed);
}

[[nodiscard]] inline SweepOutput run_reconstruction_sweep(const ExperimentPlan& plan, const TransformerParams& params,
                                                          const std::string& config_hash) {
  SweepOutput out;
  for (const auto& system : plan.targets) {
    std::optional<TrajectoryMatrix> test;
    if (system != kStochasticTarget) {
      test = target_trajectory(system, plan.test_rows, plan.sampling, derive_seed(plan.seed, "test:" + system));
    }
    for (std::size_t L : plan.seq_lens) {
      for (double noise : plan.noises) {
        for (double sr : plan.sparsities) {
          std::vector<double> mses, baselines;
          for (std::size_t r = 0; r < plan.realizations; ++r) {
            const auto s = score_target(system, test ? &*test : nullptr, params, L, sr, noise,
                                        realization_seed(plan.seed, system, L, sr, noise, r));
            mses.push_back(s.mse);
            baselines.push_back(s.baseline_mse);
            CsvTable::Row row;
            row << config_hash << system << std::uint64_t{L} << sr << noise << std::uint64_t{r} << s.seed
                << std::uint64_t{s.offset} << s.mse << std::sqrt(s.mse) << s.baseline_mse;
            out.realizations.add(row);
          }
          EvalReport rep = summarize({system, L, sr, noise}, mses);
          CsvTable::Row row;
          row << config_hash << system << std::uint64_t{L} << sr << noise << std::uint64_t{plan.realizations}
              << rep.mse << median(mses) << rep.rmse << rep.recovery_stability.at(kDefaultStabilityThreshold)
              << median(baselines);
          out.summary.add(row);
          out.reports.push_back(std::move(rep));
          out.mses.push_back(std::move(mses));
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Climate pipeline

struct ClimateOutcome {
  std::string system;
  std::string source;  // "transformer" or "truth"
  double rmse = 0.0;              // first rmse_horizon predicted steps
  double persistence_rmse = 0.0;  // last warmup state held constant
  double dv = 0.0;
  double surrogate_dv = 0.0;      // per-dimension shuffle of the true continuation
  bool truncated = false;
  std::size_t divergence_step = 0;
  TrajectoryMatrix prediction;
  TrajectoryMatrix truth;
};

/// Trains a reservoir on `segments` consecutive blocks of one long run of
/// `system` and forecasts the continuation.  With `params` the blocks are
/// first sparsified and reconstructed by the transformer; without, the clean
/// blocks are used directly.
[[nodiscard]] inline ClimateOutcome run_climate(const ExperimentPlan& plan, const std::string& system,
                                                const TransformerParams* params, const ReservoirConfig& rc) {
  const ClimateSettings& c = plan.climate;
  if (c.segments == 0 || c.training_rows < c.segments) throw ValidationError("climate: need segments >= 1");
  if (c.rmse_horizon > c.horizon) throw ValidationError("climate: rmse_horizon exceeds horizon");
  const std::size_t seg_rows = c.training_rows / c.segments;
  const std::size_t total = seg_rows * c.segments + c.horizon;
  const TrajectoryMatrix full =
      target_trajectory(system, total, plan.sampling, derive_seed(plan.seed, "climate:" + system));

  std::vector<TrajectoryMatrix> segments;
  for (std::size_t s = 0; s < c.segments; ++s) {
    TrajectoryMatrix seg = full.segment(s * seg_rows, seg_rows);
    if (params) {
      const SparseSeries obs =
          apply_observation(seg, {c.sparsity, c.noise, 0.0, derive_seed(plan.seed, "climate-observe:" + system, s)});
      seg = reconstruct_windows(obs, *params);
    }
    segments.push_back(std::move(seg));
  }
  ReservoirConfig cfg = rc;
  cfg.seed = derive_seed(plan.seed, "climate-reservoir:" + system);
  const ReservoirModel model = train_on_segments(segments, cfg);

  const TrajectoryMatrix& last = segments.back();
  const std::size_t warm = std::min(std::max(c.warmup, cfg.washout), last.length());
  const TrajectoryMatrix warmup = last.segment(last.length() - warm, warm);
  const ClosedLoopPrediction pred = closed_loop_predict(model, warmup, c.horizon);

  ClimateOutcome out;
  out.system = system;
  out.source = params ? "transformer" : "truth";
  out.truth = full.segment(seg_rows * c.segments, c.horizon);
  out.prediction = pred.trajectory;
  out.truncated = pred.truncated;
  out.divergence_step = pred.divergence_step;
  const auto h = static_cast<Eigen::Index>(c.rmse_horizon);
  if (h > 0) {
    out.rmse = rmse(pred.trajectory.data.topRows(h), out.truth.data.topRows(h));
    out.persistence_rmse =
        rmse(persistence_forecast(warmup.data.bottomRows(1), c.rmse_horizon), out.truth.data.topRows(h));
  }
  out.dv = deviation_value(pred.trajectory.data, out.truth.data, c.cell);
  out.surrogate_dv =
      deviation_value(shuffled_surrogate(out.truth.data, derive_seed(plan.seed, "surrogate:" + system)),
                      out.truth.data, c.cell);
  return out;
}

[[nodiscard]] inline CsvTable climate_table() {
  return CsvTable({"config_hash", "system", "source", "reservoir_size", "training_rows", "horizon", "rmse_horizon",
                   "rmse", "persistence_rmse", "dv", "surrogate_dv", "truncated", "divergence_step"});
}

inline void add_climate_row(CsvTable& t, const std::string& hash, const ExperimentPlan& plan, const ReservoirConfig& rc,
                            const ClimateOutcome& o) {
  CsvTable::Row row;
  row << hash << o.system << o.source << std::uint64_t{rc.size} << std::uint64_t{plan.climate.training_rows}
      << std::uint64_t{plan.climate.horizon} << std::uint64_t{plan.climate.rmse_horizon} << o.rmse
      << o.persistence_rmse << o.dv << o.surrogate_dv << o.truncated << std::uint64_t{o.divergence_step};
  t.add(row);
}

// ---------------------------------------------------------------------------
// Leave-out rotation

/// Consecutive groups of `group_size`; the last group takes the remainder.
[[nodiscard]] inline std::vector<std::vector<std::string>> rotation_groups(const std::vector<std::string>& systems,
                                                                           std::size_t group_size) {
  if (group_size == 0) throw ValidationError("rotation group size must be >= 1");
  std::vector<std::vector<std::string>> groups;
  for (std::size_t i = 0; i < systems.size(); i += group_size) {
    groups.emplace_back(systems.begin() + static_cast<std::ptrdiff_t>(i),
                        systems.begin() + static_cast<std::ptrdiff_t>(std::min(i + group_size, systems.size())));
  }
  return groups;
}

[[nodiscard]] inline std::vector<std::string> all_system_names() {
  std::vector<std::string> out;
  for (const auto& s : catalog()) out.push_back(s.name);
  return out;
}

struct RotationOutput {
  CsvTable table{{"config_hash", "rotation", "system", "seq_len", "sparsity", "noise", "realizations", "mean_mse",
                  "median_mse", "rs_0.01", "median_baseline_mse"}};
  std::vector<SplitRecord> splits;
};

/// Each group in turn is held out; a model is trained on the rest and each
/// held-out system is scored at the plan's first grid point.
[[nodiscard]] inline RotationOutput run_rotation(const ExperimentPlan& plan, const std::string& config_hash,
                                                 const std::function<void(const std::string&)>& log = {}) {
  RotationOutput out;
  const auto systems = all_system_names();
  const auto groups = rotation_groups(systems, plan.rotation_group);
  const std::size_t L = plan.seq_lens.front();
  const double sr = plan.sparsities.front(), noise = plan.noises.front();
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const std::set<std::string> held(groups[k].begin(), groups[k].end());
    std::vector<std::string> pool;
    for (const auto& s : systems) {
      if (!held.count(s)) pool.push_back(s);
    }
    const std::string label = "rotation" + std::to_string(k);
    out.splits.push_back({label, pool, groups[k]});
    if (log) log(label + ": training on " + std::to_string(pool.size()) + " systems");
    ExperimentPlan sub = plan;
    sub.seed = derive_seed(plan.seed, "rotation", k);
    const TrainingRegime regime = build_regime(sub, pool, log);
    const TransformerParams params = train(regime, plan.transformer, derive_seed(sub.seed, "model")).params;
    for (const auto& system : groups[k]) {
      const TrajectoryMatrix test =
          target_trajectory(system, plan.test_rows, plan.sampling, derive_seed(sub.seed, "test:" + system));
      std::vector<double> mses, baselines;
      for (std::size_t r = 0; r < plan.realizations; ++r) {
        const auto s = score_realization(test, params, L, sr, noise, realization_seed(sub.seed, system, L, sr, noise, r));
        mses.push_back(s.mse);
        baselines.push_back(s.baseline_mse);
      }
      const EvalReport rep = summarize({system, L, sr, noise}, mses);
      CsvTable::Row row;
      row << config_hash << label << system << std::uint64_t{L} << sr << noise << std::uint64_t{plan.realizations}
          << rep.mse << median(mses) << rep.recovery_stability.at(kDefaultStabilityThreshold) << median(baselines);
      out.table.add(row);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Search

inline constexpr std::size_t kDefaultTransformerTrials = 60;
inline constexpr std::size_t kDefaultReservoirTrials = 200;

[[nodiscard]] inline SearchSpace default_search_space(std::string_view target) {
  SearchSpace s;
  if (target == "transformer") {
    s.categorical("embed_dim", {"16", "32", "64"});
    s.categorical("heads", {"1", "2", "4"});
    s.integer("blocks", 1, 3);
    s.categorical("ffn_dim", {"32", "64", "128"});
    s.log10("lr", 1e-4, 3e-3);
    s.linear("dropout", 0.0, 0.3);
  } else if (target == "reservoir") {
    s.linear("leak", 0.05, 1.0);
    s.log10("ridge", 1e-8, 1e-1);
    s.linear("input_scale", 0.1, 2.0);
    s.linear("spectral_radius", 0.1, 2.0);
    s.linear("link_prob", 0.01, 1.0);
    s.log10("train_noise", 1e-6, 1e-1);
  } else {
    throw ValidationError("search target must be transformer or reservoir");
  }
  return s;
}

[[nodiscard]] inline SearchSpace search_space_for(const ExperimentPlan& plan, std::string_view target) {
  if (plan.search_space.empty()) return default_search_space(target);
  SearchSpace s;
  for (const auto& [name, text] : plan.search_space) s.add(parse_domain(name, text));
  return s;
}

/// Transformer objective: median reconstruction MSE on the two validation
/// systems (Sprott 0 and 1) at the plan's first grid point.  Validation
/// systems and targets are removed from the training pool.
[[nodiscard]] inline Objective transformer_objective(const ExperimentPlan& plan) {
  return [plan](const ParamSample& sample, std::uint64_t trial_seed) {
    TransformerConfig cfg = plan.transformer;
    for (const auto& [name, value] : sample.values) detail::set_transformer_field(cfg, name, sample.text(name));
    if (sample.values.end() != std::find_if(sample.values.begin(), sample.values.end(),
                                            [](const auto& kv) { return kv.first == "embed_dim"; })) {
      cfg.d_k = cfg.d_v = cfg.embed_dim;
    }
    const std::set<std::string> excluded{"sprott_0", "sprott_1"};
    std::vector<std::string> pool;
    for (const auto& s : plan.pool) {
      if (!excluded.count(s)) pool.push_back(s);
    }
    ExperimentPlan sub = plan;
    sub.transformer = cfg;
    sub.seed = trial_seed;
    const TransformerParams params = train(build_regime(sub, pool), cfg, derive_seed(trial_seed, "model")).params;
    std::vector<double> mses;
    const std::size_t L = std::min(plan.seq_lens.front(), cfg.max_len);
    for (const auto& v : excluded) {
      const TrajectoryMatrix test = target_trajectory(v, plan.test_rows, plan.sampling, derive_seed(trial_seed, "val:" + v));
      for (std::size_t r = 0; r < plan.realizations; ++r) {
        mses.push_back(score_realization(test, params, L, plan.sparsities.front(), plan.noises.front(),
                                         realization_seed(trial_seed, v, L, plan.sparsities.front(), plan.noises.front(), r))
                           .mse);
      }
    }
    return median(mses);
  };
}

/// Reservoir objective: climate DV on clean segments of the first target.
[[nodiscard]] inline Objective reservoir_objective(const ExperimentPlan& plan) {
  return [plan](const ParamSample& sample, std::uint64_t trial_seed) {
    ReservoirConfig cfg = plan.reservoir;
    for (const auto& [name, value] : sample.values) detail::set_reservoir_field(cfg, name, sample.text(name));
    ExperimentPlan sub = plan;
    sub.seed = trial_seed;
    return run_climate(sub, plan.targets.front(), nullptr, cfg).dv;
  };
}

/// Trial ledger; wall time is left out so reruns produce identical files.
[[nodiscard]] inline CsvTable search_table(const SearchResult& result, const SearchSpace& space,
                                           const std::string& target, const std::string& config_hash) {
  std::vector<std::string> header{"config_hash", "target", "trial", "seed"};
  for (const auto& p : space.params) header.push_back(p.name);
  header.insert(header.end(), {"objective", "status", "best_so_far"});
  CsvTable t(header);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& rec : result.history) {
    CsvTable::Row row;
    row << config_hash << target << std::uint64_t{rec.index} << rec.seed;
    for (const auto& p : space.params) row << rec.config.text(p.name);
    if (rec.ok()) best = std::min(best, *rec.objective);
    row << (rec.ok() ? format_double(*rec.objective) : std::string()) << (rec.ok() ? "ok" : "failed")
        << (std::isfinite(best) ? format_double(best) : std::string());
    t.add(row);
  }
  return t;
}

}  // namespace chronoweft::harness
