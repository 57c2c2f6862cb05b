// chronoweft command-line front end.  Each verb writes its CSV outputs and a
// manifest.json (last) into --out; a manifest can be handed back with
// --manifest to replay the run exactly.
//
// Exit status: 0 ok, 2 validation failure, 3 numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chronoweft/chronoweft.hpp"

namespace fs = std::filesystem;
using namespace chronoweft;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

void warn(const std::string& msg) { std::cerr << "chronoweft: warning: " << msg << "\n"; }
void note(const std::string& msg) { std::cerr << "chronoweft: " << msg << "\n"; }

struct Common {
  std::string config_file;
  std::string manifest_file;
  std::string preset;
  std::vector<std::string> overrides;  // key=value
  std::string pool, profile;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "Plan file (key = value lines)");
  cmd->add_option("--manifest", c.manifest_file, "Replay the configuration recorded in a manifest");
  cmd->add_option("--preset", c.preset, "Named plan preset: fig4, fig5, fig9, fig12");
  cmd->add_option("--set", c.overrides, "Override a plan key, key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "Master seed (same as --set seed=S)");
  cmd->add_option("--pool", c.pool, "Training pool (same as --set pool=...)");
  cmd->add_option("--profile", c.profile, "desk or paper (same as --set profile=...)");
  cmd->add_option("--out", c.out, "Output directory, or output file for single-series verbs");
}

/// preset < config file < --set; a manifest replaces all three.  Verb
/// arguments travel in the config under "args." so replays see them too.
KeyValueConfig merged_config(const Common& c, const std::map<std::string, std::string>& args) {
  KeyValueConfig kv;
  if (!c.manifest_file.empty()) {
    if (!c.config_file.empty() || !c.preset.empty() || !c.overrides.empty() || !c.pool.empty() ||
        !c.profile.empty() || c.seed) {
      throw ValidationError("--manifest cannot be combined with plan options");
    }
    return RunManifest::read(c.manifest_file).config;
  }
  if (!c.preset.empty()) kv = harness::preset_config(c.preset);
  if (!c.config_file.empty()) {
    const KeyValueConfig file = KeyValueConfig::load(c.config_file);
    for (const auto& [k, v] : file.entries()) kv.set(k, v);
  }
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + o + "'");
    kv.set(std::string(detail::trim(o.substr(0, eq))), std::string(detail::trim(o.substr(eq + 1))));
  }
  if (!c.pool.empty()) kv.set("pool", c.pool);
  if (!c.profile.empty()) kv.set("profile", c.profile);
  if (c.seed) kv.set("seed", *c.seed);
  for (const auto& [k, v] : args) {
    if (!kv.has("args." + k)) kv.set("args." + k, v);
  }
  return kv;
}

struct Run {
  KeyValueConfig config;  // resolved plan plus args.*
  harness::ExperimentPlan plan;
  std::string hash;
  fs::path dir;
  fs::path manifest_path;
  std::string stem;  // file mode: CSV and manifest are named after the output file
  RunManifest manifest;

  [[nodiscard]] fs::path csv(const std::string& name) const {
    return stem.empty() ? dir / (name + ".csv") : dir / (stem + ".csv");
  }

  [[nodiscard]] std::string arg(const std::string& key) const { return config.get("args." + key, ""); }
  [[nodiscard]] bool has_arg(const std::string& key) const { return !arg(key).empty(); }
  [[nodiscard]] std::string required(const std::string& key) const {
    if (!has_arg(key)) throw ValidationError(manifest.verb + ": --" + key + " is required");
    return arg(key);
  }

  void artifact(const fs::path& file, const std::string& kind) { manifest.add_artifact(dir, file, kind); }

  void finish() {
    manifest.write(manifest_path);
    std::cout << manifest_path.string() << "\n";
  }
};

/// `file_mode`: --out names a single output file rather than a directory.
Run open_run(const std::string& verb, const Common& c, const std::map<std::string, std::string>& args,
             bool file_mode) {
  Run r;
  KeyValueConfig input = merged_config(c, args);
  KeyValueConfig plan_part;
  for (const auto& [k, v] : input.entries()) {
    if (k.rfind("args.", 0) != 0) plan_part.set(k, v);
  }
  r.plan = harness::plan_from_config(plan_part);
  r.config = r.plan.to_config();
  for (const auto& [k, v] : input.section("args.")) r.config.set("args." + k, v);
  r.hash = r.config.hash();
  const fs::path out = harness::resolve_output(c.out);
  if (file_mode) {
    r.dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
    r.stem = out.filename().string();
    r.manifest_path = r.dir / (r.stem + ".manifest.json");
  } else {
    r.dir = out;
    r.manifest_path = r.dir / "manifest.json";
  }
  fs::create_directories(r.dir);
  r.manifest.verb = verb;
  r.manifest.config_hash = r.hash;
  r.manifest.config = r.config;
  r.manifest.seeds.emplace_back("master", r.plan.seed);
  return r;
}

fs::path input_path(const std::string& p) { return fs::absolute(harness::resolve_output(p)); }

/// A checkpoint, or a `train` output directory holding model.cwck.
TransformerParams load_model(const std::string& p) {
  fs::path f = p;
  if (fs::is_directory(f)) f /= "model.cwck";
  return transformer_from_checkpoint(io::read_checkpoint(f));
}

// ---------------------------------------------------------------------------

/// One system, written to the --out file.
void cmd_gen_single(Run& r) {
  const SystemSpec spec = find_system(r.arg("system"));
  const std::size_t steps = std::stoull(r.arg("steps"));
  const std::size_t subsample = std::stoull(r.arg("subsample"));
  const std::size_t transient = std::stoull(r.arg("transient"));
  const double dt = std::stod(r.arg("dt"));
  if (steps == 0 || subsample == 0) throw ValidationError("gen: --steps and --subsample must be >= 1");
  if (!(dt > 0.0)) throw ValidationError("gen: --dt must be positive");
  const std::uint64_t seed = harness::dataset_seed(r.plan, spec.name);
  const TrajectoryMatrix t = preprocess(simulate(spec, transient + steps, dt, seed), transient, subsample);
  const fs::path out = r.dir / r.stem;
  io::write_trajectory(out, t);
  r.artifact(out, "trajectory");
  CsvTable table({"config_hash", "system", "file", "rows", "subsample", "seed", "status"});
  CsvTable::Row row;
  row << r.hash << spec.name << r.stem << std::uint64_t{t.length()} << std::uint64_t{subsample} << seed << "ok";
  table.add(row);
  table.write(r.csv("dataset"));
  r.artifact(r.csv("dataset"), "csv");
  r.manifest.seeds.emplace_back("trajectory", seed);
}

void cmd_gen(Run& r) {
  if (r.has_arg("system")) return cmd_gen_single(r);
  const auto build = harness::build_dataset(r.plan, r.dir, warn);
  CsvTable t({"config_hash", "system", "file", "rows", "subsample", "seed", "status"});
  for (const auto& e : build.entries) {
    CsvTable::Row row;
    row << r.hash << e.system << e.file.filename().string() << std::uint64_t{e.rows} << std::uint64_t{e.subsample}
        << e.seed << "ok";
    t.add(row);
    r.artifact(e.file, "trajectory");
  }
  for (const auto& [system, reason] : build.skipped) {
    CsvTable::Row row;
    row << r.hash << system << "" << std::uint64_t{0} << std::uint64_t{0} << harness::dataset_seed(r.plan, system)
        << "skipped: " + reason;
    t.add(row);
  }
  if (build.entries.empty()) throw InsufficientDataError("gen: every system failed to integrate");
  t.write(r.csv("dataset"));
  r.artifact(r.csv("dataset"), "csv");
  r.manifest.splits.push_back({"dataset", r.plan.pool, r.plan.targets});
}

void cmd_mask(Run& r) {
  const TrajectoryMatrix x = io::read_trajectory(input_path(r.required("input")));
  ObservationSpec spec;
  spec.sparsity = r.config.number("args.sparsity");
  spec.mult_noise_sigma = r.config.number("args.mult_noise");
  spec.add_noise_sigma = r.config.number("args.add_noise");
  spec.seed = derive_seed(r.plan.seed, "mask-verb");
  spec.validate();
  const SparseSeries s = apply_observation(x, spec);
  const fs::path out = r.dir / r.stem;
  io::write_sparse(out, s);
  r.artifact(out, "sparse");
  CsvTable t({"config_hash", "rows", "dims", "sparsity", "noise", "add_noise", "observed", "observed_fraction"});
  CsvTable::Row row;
  row << r.hash << std::uint64_t{s.length()} << std::uint64_t{s.dims()} << spec.sparsity << spec.mult_noise_sigma
      << spec.add_noise_sigma << std::uint64_t{s.observed_count()}
      << static_cast<double>(s.observed_count()) / static_cast<double>(s.values.size());
  t.add(row);
  t.write(r.csv("mask"));
  r.artifact(r.csv("mask"), "csv");
  r.manifest.seeds.emplace_back("mask", spec.seed);
}

void cmd_train(Run& r) {
  const TrainingRegime regime = harness::build_regime(r.plan, r.plan.pool, warn);
  const std::uint64_t seed = derive_seed(r.plan.seed, "model");
  const fs::path ckpt = r.dir / "model.cwck";
  CsvTable log({"config_hash", "epoch", "mean_loss"});
  std::vector<std::string> trained;
  for (const auto& s : regime.pool) trained.push_back(s.name);
  const auto result = train(regime, r.plan.transformer, seed, [&](std::size_t epoch, double loss, const TransformerParams& p) {
    io::write_checkpoint(ckpt, to_checkpoint(p));
    CsvTable::Row row;
    row << r.hash << std::uint64_t{epoch} << loss;
    log.add(row);
    note("epoch " + std::to_string(epoch) + " loss " + format_double(loss));
  });
  if (r.plan.transformer.epochs == 0) io::write_checkpoint(ckpt, to_checkpoint(result.params));
  log.write(r.dir / "training.csv");
  r.artifact(ckpt, "checkpoint");
  r.artifact(r.dir / "training.csv", "csv");
  r.manifest.seeds.emplace_back("model", seed);
  r.manifest.splits.push_back({"train", trained, r.plan.targets});
}

void cmd_reconstruct(Run& r) {
  const TransformerParams params = load_model(r.required("model"));
  const SparseSeries s = io::read_sparse(input_path(r.required("input")));
  const TrajectoryMatrix y = harness::reconstruct_windows(s, params);
  const fs::path out = r.dir / r.stem;
  io::write_trajectory(out, y);
  r.artifact(out, "trajectory");
  CsvTable t({"config_hash", "rows", "dims", "observed", "observed_mse", "truth_mse", "baseline_truth_mse"});
  // Fit at the observed entries, and full error when a reference is given.
  double obs_err = 0.0;
  for (Eigen::Index i = 0; i < s.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.values.cols(); ++j) {
      if (s.mask(i, j)) obs_err += (y.data(i, j) - s.values(i, j)) * (y.data(i, j) - s.values(i, j));
    }
  }
  CsvTable::Row row;
  row << r.hash << std::uint64_t{y.length()} << std::uint64_t{y.dims()} << std::uint64_t{s.observed_count()}
      << (s.observed_count() ? obs_err / static_cast<double>(s.observed_count()) : 0.0);
  if (r.has_arg("truth")) {
    const TrajectoryMatrix truth = io::read_trajectory(input_path(r.arg("truth")));
    row << mse(y.data, truth.data) << mse(linear_interpolation(s), truth.data);
  } else {
    row << "" << "";
  }
  t.add(row);
  t.write(r.csv("reconstruction"));
  r.artifact(r.csv("reconstruction"), "csv");
}

void cmd_evaluate(Run& r) {
  const TransformerParams params = load_model(r.required("model"));
  const auto out = harness::run_reconstruction_sweep(r.plan, params, r.hash);
  out.realizations.write(r.dir / "realizations.csv");
  out.summary.write(r.dir / "summary.csv");
  r.artifact(r.dir / "realizations.csv", "csv");
  r.artifact(r.dir / "summary.csv", "csv");
  r.manifest.splits.push_back({"evaluate", r.plan.pool, r.plan.targets});
}

/// Reservoir trained directly on stored segments; the forecast goes to the
/// --out file.
void cmd_climate_segments(Run& r) {
  std::vector<TrajectoryMatrix> segments;
  for (const auto& f : r.config.list("args.segments")) segments.push_back(io::read_trajectory(f));
  if (segments.empty()) throw ValidationError("climate: --segments lists no files");
  ReservoirConfig rc = r.plan.reservoir;
  rc.seed = derive_seed(r.plan.seed, "climate-reservoir");
  const ReservoirModel model = train_on_segments(segments, rc);
  const TrajectoryMatrix& last = segments.back();
  const std::size_t warm = std::min(std::max(r.plan.climate.warmup, rc.washout), last.length());
  const ClosedLoopPrediction pred =
      closed_loop_predict(model, last.segment(last.length() - warm, warm), r.plan.climate.horizon);
  const fs::path out = r.dir / r.stem;
  io::write_trajectory(out, pred.trajectory);
  r.artifact(out, "trajectory");
  const fs::path ckpt = r.dir / (r.stem + ".reservoir.cwck");
  io::write_checkpoint(ckpt, to_checkpoint(model));
  r.artifact(ckpt, "checkpoint");
  std::size_t rows = 0;
  for (const auto& s : segments) rows += s.length();
  CsvTable t({"config_hash", "segments", "training_rows", "reservoir_size", "horizon", "truncated", "divergence_step"});
  CsvTable::Row row;
  row << r.hash << std::uint64_t{segments.size()} << std::uint64_t{rows} << std::uint64_t{rc.size}
      << std::uint64_t{r.plan.climate.horizon} << pred.truncated << std::uint64_t{pred.divergence_step};
  t.add(row);
  t.write(r.csv("climate"));
  r.artifact(r.csv("climate"), "csv");
  r.manifest.seeds.emplace_back("reservoir", rc.seed);
}

void cmd_climate(Run& r) {
  if (r.has_arg("segments")) return cmd_climate_segments(r);
  std::optional<TransformerParams> params;
  if (r.has_arg("model")) {
    params = load_model(r.required("model"));
  }
  CsvTable t = harness::climate_table();
  const std::vector<std::size_t> sizes = [&] {
    std::vector<std::size_t> out;
    for (const auto& s : r.config.list("args.sizes")) out.push_back(std::stoull(s));
    if (out.empty()) out.push_back(r.plan.reservoir.size);
    return out;
  }();
  auto one = [&](const std::string& system, const ReservoirConfig& rc, const TransformerParams* p) {
    const auto o = harness::run_climate(r.plan, system, p, rc);
    harness::add_climate_row(t, r.hash, r.plan, rc, o);
    const fs::path f = r.dir / (system + "_" + o.source + "_N" + std::to_string(rc.size) + ".cwtj");
    io::write_trajectory(f, o.prediction);
    r.artifact(f, "trajectory");
  };
  for (const auto& system : r.plan.targets) {
    for (std::size_t n : sizes) {
      ReservoirConfig rc = r.plan.reservoir;
      rc.size = n;
      if (params) one(system, rc, &*params);
      if (!params || r.arg("truth_baseline") == "1") one(system, rc, nullptr);
    }
  }
  t.write(r.dir / "climate.csv");
  r.artifact(r.dir / "climate.csv", "csv");
}

void cmd_search(Run& r) {
  const std::string target = r.arg("target");
  const SearchSpace space = harness::search_space_for(r.plan, target);
  std::size_t trials = r.plan.search_trials;
  if (trials == 0) trials = target == "transformer" ? harness::kDefaultTransformerTrials : harness::kDefaultReservoirTrials;
  const Objective objective =
      target == "transformer" ? harness::transformer_objective(r.plan) : harness::reservoir_objective(r.plan);
  const std::uint64_t seed = derive_seed(r.plan.seed, "search");
  const SearchResult result = random_search(space, trials, objective, seed);
  for (const auto& rec : result.history) {
    if (!rec.ok()) warn("trial " + std::to_string(rec.index) + " failed: " + rec.failure);
  }
  const CsvTable t = harness::search_table(result, space, target, r.hash);
  t.write(r.dir / "search.csv");
  r.artifact(r.dir / "search.csv", "csv");
  KeyValueConfig best;
  for (const auto& p : space.params) best.set((target == "transformer" ? "transformer." : "reservoir.") + p.name,
                                              result.best.config.text(p.name));
  io::write_file_atomic(r.dir / "best.cfg", best.canonical());
  r.artifact(r.dir / "best.cfg", "config");
  r.manifest.seeds.emplace_back("search", seed);
  if (target == "transformer") r.manifest.splits.push_back({"search", r.plan.pool, {"sprott_0", "sprott_1"}});
}

void cmd_rotate(Run& r) {
  auto out = harness::run_rotation(r.plan, r.hash, note);
  out.table.write(r.dir / "rotation.csv");
  r.artifact(r.dir / "rotation.csv", "csv");
  r.manifest.splits = std::move(out.splits);
  audit_manifest(r.manifest);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chronoweft: sparse-data dynamics reconstruction and climate prediction"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen", "Simulate the plan's pool, or one --system into the --out file");
  add_common(gen, common);
  std::string system;
  std::size_t steps = 500'000, subsample = kDefaultSubsample, transient = kDefaultTransientSteps;
  double dt = kDefaultDt;
  gen->add_option("--system", system, "Single system to simulate");
  gen->add_option("--steps", steps, "Integration steps kept after the transient");
  gen->add_option("--dt", dt, "Integration step");
  gen->add_option("--subsample", subsample, "Keep every n-th integration step");
  gen->add_option("--transient", transient, "Integration steps discarded first");

  std::string input, model, truth, target = "transformer", sizes, segments, rc_config;
  std::optional<std::size_t> trials, horizon;
  double sparsity = 0.5, noise = 0.0, add_noise = 0.0;
  bool truth_baseline = false;

  auto* mask = app.add_subcommand("mask", "Sparsify a stored trajectory");
  add_common(mask, common);
  mask->add_option("--in,--input", input, "Trajectory file");
  mask->add_option("--sparsity", sparsity, "Fraction of elements removed")->check(CLI::Range(0.0, 1.0));
  mask->add_option("--mult-noise,--noise", noise, "Multiplicative noise sigma");
  mask->add_option("--add-noise", add_noise, "Additive noise sigma");

  auto* trn = app.add_subcommand("train", "Train the transformer on the plan's pool");
  add_common(trn, common);

  auto* rec = app.add_subcommand("reconstruct", "Reconstruct a sparse series with a trained model");
  add_common(rec, common);
  rec->add_option("--model,--ckpt", model, "Transformer checkpoint or train output directory");
  rec->add_option("--in,--input", input, "Sparse series file");
  rec->add_option("--truth", truth, "Reference trajectory for scoring");

  auto* clim = app.add_subcommand("climate", "Reservoir climate prediction on the plan's targets");
  add_common(clim, common);
  clim->add_option("--model,--ckpt", model, "Transformer checkpoint; without it the reservoir trains on clean data");
  clim->add_option("--segments", segments, "Comma-separated trajectory files to train on; forecast goes to --out");
  clim->add_option("--rc-config", rc_config, "Reservoir settings file (size, leak, ridge, ...)");
  clim->add_option("--horizon", horizon, "Forecast length (same as --set climate.horizon=N)");
  clim->add_option("--sizes", sizes, "Comma-separated reservoir sizes (default: plan reservoir.size)");
  clim->add_flag("--truth-baseline", truth_baseline, "With --model, also run on clean data");

  auto* eval = app.add_subcommand("evaluate", "Reconstruction sweep over the plan's grid");
  add_common(eval, common);
  eval->add_option("--model,--ckpt", model, "Transformer checkpoint or train output directory");

  auto* search = app.add_subcommand("search", "Random hyperparameter search");
  add_common(search, common);
  search->add_option("--target", target, "transformer or reservoir")
      ->check(CLI::IsMember({"transformer", "reservoir"}));
  search->add_option("--trials", trials, "Number of trials (same as --set search.trials=N)");

  auto* rotate = app.add_subcommand("rotate", "Leave-one-group-out rotation over the catalog");
  add_common(rotate, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    std::map<std::string, std::string> args;
    auto replaying = !common.manifest_file.empty();
    if (!replaying) {
      if (!input.empty()) args["input"] = input_path(input).string();
      if (!model.empty()) args["model"] = input_path(model).string();
      if (!truth.empty()) args["truth"] = input_path(truth).string();
    }
    if (mask->parsed() && !replaying) {
      args["sparsity"] = format_double(sparsity);
      args["mult_noise"] = format_double(noise);
      args["add_noise"] = format_double(add_noise);
    }
    if (search->parsed() && !replaying) args["target"] = target;
    if (gen->parsed() && !replaying && !system.empty()) {
      args["system"] = find_system(system).name;
      args["steps"] = std::to_string(steps);
      args["dt"] = format_double(dt);
      args["subsample"] = std::to_string(subsample);
      args["transient"] = std::to_string(transient);
    }
    if (clim->parsed() && !replaying) {
      if (!sizes.empty()) args["sizes"] = sizes;
      if (truth_baseline) args["truth_baseline"] = "1";
      if (!segments.empty()) {
        std::string files;
        for (const auto& f : KeyValueConfig::parse("s = " + segments).list("s")) {
          files += (files.empty() ? "" : ",") + input_path(f).string();
        }
        args["segments"] = files;
      }
      if (!rc_config.empty()) {
        const KeyValueConfig rc = KeyValueConfig::load(input_path(rc_config));
        for (const auto& [k, v] : rc.entries()) {
          common.overrides.push_back((k.rfind("reservoir.", 0) == 0 ? k : "reservoir." + k) + "=" + v);
        }
      }
      if (horizon) common.overrides.push_back("climate.horizon=" + std::to_string(*horizon));
    }
    if (search->parsed() && !replaying && trials) common.overrides.push_back("search.trials=" + std::to_string(*trials));

    CLI::App* sub = app.get_subcommands().front();
    auto replay_has = [&](const std::string& key) {
      return replaying && RunManifest::read(common.manifest_file).config.has(key);
    };
    const bool file_mode = sub == mask || sub == rec || (sub == gen && (!system.empty() || replay_has("args.system"))) ||
                           (sub == clim && (!segments.empty() || replay_has("args.segments")));
    Run run = open_run(sub->get_name(), common, args, file_mode);
    if (replaying) {
      const RunManifest prior = RunManifest::read(common.manifest_file);
      if (prior.verb != sub->get_name()) {
        throw ValidationError("manifest records verb '" + prior.verb + "', not '" + sub->get_name() + "'");
      }
    }
    const std::string& verb = sub->get_name();
    if (verb == "gen") cmd_gen(run);
    else if (verb == "mask") cmd_mask(run);
    else if (verb == "train") cmd_train(run);
    else if (verb == "reconstruct") cmd_reconstruct(run);
    else if (verb == "climate") cmd_climate(run);
    else if (verb == "evaluate") cmd_evaluate(run);
    else if (verb == "search") cmd_search(run);
    else if (verb == "rotate") cmd_rotate(run);
    run.finish();
  } catch (const Error& e) {
    std::cerr << "chronoweft: " << e.what() << "\n";
    return e.category() == Error::Category::numerical ? kExitNumerical : kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "chronoweft: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
