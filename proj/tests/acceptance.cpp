// Acceptance run: one PASS/FAIL line per criterion, diagnostics on stderr.
//
//   chronoweft_acceptance --cli path/to/chronoweft --cache dir [--only 3,4]
//
// Criteria 3 and 4 share one desk-profile model; it is trained once and kept
// in the cache directory under the plan hash.

#include <CLI11.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chronoweft/chronoweft.hpp"

namespace fs = std::filesystem;
using namespace chronoweft;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. numerical core

double decay_error(double dt) {
  auto f = [](std::span<const double> x, double, std::span<double> dx) { dx[0] = -x[0]; };
  std::vector<double> x{1.0};
  Rk4Workspace ws;
  const int n = static_cast<int>(std::lround(1.0 / dt));
  for (int i = 0; i < n; ++i) rk4_step(f, std::span<double>(x), i * dt, dt, ws);
  return std::abs(x[0] - std::exp(-1.0));
}

Outcome numerical_core() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> fails;

  const double e1 = decay_error(0.04), e2 = decay_error(0.02), e3 = decay_error(0.01);
  const double ratio = std::min(e1 / e2, e2 / e3);
  if (ratio < 12.0) fails.push_back("rk4 ratio " + fmt(ratio));

  // Ridge readout against an explicit inverse.
  Rng rng = make_rng(21);
  Eigen::MatrixXd R(20, 200), U(3, 200);
  for (Eigen::Index i = 0; i < R.size(); ++i) R(i) = uniform01(rng) * 2 - 1;
  for (Eigen::Index i = 0; i < U.size(); ++i) U(i) = uniform01(rng);
  const double beta = 1e-6;
  const Eigen::MatrixXd oracle =
      U * R.transpose() * (R * R.transpose() + beta * Eigen::MatrixXd::Identity(20, 20)).inverse();
  const double ridge_err = (ridge_readout(R, U, beta) - oracle).cwiseAbs().maxCoeff();
  if (ridge_err > 1e-8) fails.push_back("ridge " + fmt(ridge_err));

  // Full desk-model gradient against central differences.
  TransformerConfig cfg = TransformerConfig::desk();
  cfg.max_len = 24;
  cfg.batch_size = 4;
  TrainingRegime regime;
  regime.seed = 5;
  for (const char* s : {"sprott_0", "sprott_1"}) {
    regime.pool.push_back({s, harness::generate_trajectory(find_system(s), 500, 10, 3, 5000)});
  }
  const Batch batch = draw_batch(regime, cfg, 17);
  TransformerParams params = init_params(cfg, 18);
  const StepResult base = loss_and_gradients(params, batch, nullptr);
  auto named = params.named();
  Rng pick = make_rng(19);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t which = std::uniform_int_distribution<std::size_t>(0, named.size() - 1)(pick);
    Tensor& t = *named[which].second;
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, t.size() - 1)(pick);
    const double x0 = t[k], h = 1e-6;
    t[k] = x0 + h;
    const double up = loss_and_gradients(params, batch, nullptr).loss;
    t[k] = x0 - h;
    const double down = loss_and_gradients(params, batch, nullptr).loss;
    t[k] = x0;
    const double num = (up - down) / (2 * h), an = base.grads[which][k];
    worst = std::max(worst, std::abs(num - an) / std::max({std::abs(num), std::abs(an), 1e-8}));
  }
  if (worst >= 1e-4) fails.push_back("gradient rel err " + fmt(worst));

  // Normalization invariants.
  double softmax_dev = 0.0, ln_mean = 0.0, ln_var = 0.0, attn_dev = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng r = make_rng(seed);
    Matrix x(8, 32);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = 40 * uniform01(r) - 20;
    Tape tape;
    const Matrix s = ops::softmax_rows(tape.constant(Tensor::from_matrix(x))).value().matrix();
    softmax_dev = std::max(softmax_dev, (s.rowwise().sum().array() - 1.0).abs().maxCoeff());
    const Matrix y = ops::layer_norm(tape.constant(Tensor::from_matrix(x)), tape.constant(Tensor({1, 32}, 1.0)),
                                     tape.constant(Tensor({1, 32}, 0.0)))
                         .value()
                         .matrix();
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double mu = y.row(i).mean();
      ln_mean = std::max(ln_mean, std::abs(mu));
      ln_var = std::max(ln_var, std::abs((y.row(i).array() - mu).square().mean() - 1.0));
    }
    const TransformerParams p = init_params(TransformerConfig::desk(), seed);
    const Matrix xp = embed(x.leftCols(3).array() / 40.0 + 0.5, p);
    const Matrix a = attention_weights(xp, p.blocks[0].heads[0].w_q, p.blocks[0].heads[0].w_k);
    attn_dev = std::max(attn_dev, (a.rowwise().sum().array() - 1.0).abs().maxCoeff());
  }
  if (softmax_dev > 1e-12) fails.push_back("softmax row sum " + fmt(softmax_dev));
  if (ln_mean > 1e-12) fails.push_back("layernorm mean " + fmt(ln_mean));
  if (ln_var > 1e-6) fails.push_back("layernorm var " + fmt(ln_var));
  if (attn_dev > 1e-12) fails.push_back("attention row sum " + fmt(attn_dev));

  const double secs = seconds_since(t0);
  if (secs >= 120) fails.push_back("runtime " + fmt(secs) + " s");
  std::string d = "rk4 ratio " + fmt(ratio) + ", ridge " + fmt(ridge_err) + ", grad " + fmt(worst) + ", " +
                  fmt(secs) + " s";
  for (const auto& f : fails) d += "; " + f;
  return {fails.empty(), d};
}

// ---------------------------------------------------------------------------
// 2. metric axioms

Outcome metric_axioms() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t violations = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng r = make_rng(seed);
    Matrix a(500, 3), b(500, 3);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = 1.4 * uniform01(r) - 0.2, b(i) = 0.7 * uniform01(r);
    const double dv = deviation_value(a, b);
    if (!(dv >= 0.0 && dv <= 2.0 + 1e-12)) ++violations;
    if (deviation_value(a, a) != 0.0) ++violations;
    if (std::abs(occupancy(a).total() - 1.0) > 1e-12) ++violations;
    std::vector<double> errs(100);
    for (auto& e : errs) e = 0.05 * uniform01(r);
    double last = 0.0;
    for (double t = 0.001; t <= 0.06; t += 0.001) {
      const double rs = recovery_stability(errs, t);
      if (rs < last) ++violations;
      last = rs;
    }
  }
  const double disjoint = deviation_value(Matrix::Constant(50, 3, 0.02), Matrix::Constant(50, 3, 0.97));
  if (disjoint != 2.0) ++violations;
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < 30,
          std::to_string(violations) + " violations, DV(disjoint) " + fmt(disjoint) + ", " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------------------
// 3 and 4. desk model

harness::ExperimentPlan desk_plan() {
  harness::ExperimentPlan p;
  p.pool_selector = "sprott_0,sprott_1,sprott_2,sprott_3,sprott_4,sprott_5";
  p.pool = harness::resolve_pool(p.pool_selector);
  p.targets = {"lorenz", std::string(harness::kStochasticTarget)};
  p.seq_lens = {200};
  p.sparsities = {0.5, 0.9};
  p.noises = {0.05};
  p.realizations = 50;
  p.validate();
  return p;
}

TransformerParams desk_model(const harness::ExperimentPlan& plan, const fs::path& cache) {
  // The strides come from the catalog, not the plan, so they join the key.
  KeyValueConfig key = plan.to_config();
  for (const auto& name : plan.pool) key.set("stride." + name, std::uint64_t{plan.sampling.stride(find_system(name))});
  const fs::path ckpt = cache / ("desk_" + key.hash() + ".cwck");
  if (fs::exists(ckpt)) {
    std::cerr << "acceptance: using cached model " << ckpt << "\n";
    return transformer_from_checkpoint(io::read_checkpoint(ckpt));
  }
  const auto t0 = std::chrono::steady_clock::now();
  const TrainingRegime regime = harness::build_regime(plan, plan.pool, [](const std::string& m) {
    std::cerr << "acceptance: " << m << "\n";
  });
  const auto result = train(regime, plan.transformer, derive_seed(plan.seed, "model"),
                            [&](std::size_t epoch, double loss, const TransformerParams&) {
                              std::cerr << "acceptance: epoch " << epoch << " loss " << fmt(loss) << " ("
                                        << fmt(seconds_since(t0)) << " s)\n";
                            });
  std::cerr << "acceptance: desk training took " << fmt(seconds_since(t0)) << " s\n";
  io::write_checkpoint(ckpt, to_checkpoint(result.params));
  return result.params;
}

struct DeskScores {
  double lorenz_05 = 0, lorenz_09 = 0, baseline_05 = 0, stochastic_05 = 0;
};

DeskScores desk_scores(const fs::path& cache) {
  const auto plan = desk_plan();
  const TransformerParams params = desk_model(plan, cache);
  const auto sweep = harness::run_reconstruction_sweep(plan, params, plan.hash());
  DeskScores s;
  const auto& header = sweep.summary.header();
  const auto col = [&](const char* name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  for (const auto& row : sweep.summary.rows()) {
    std::cerr << "acceptance: " << row[col("system")] << " S_r=" << row[col("sparsity")]
              << " median " << row[col("median_mse")] << " baseline " << row[col("median_baseline_mse")] << "\n";
    const double med = std::stod(row[col("median_mse")]), base = std::stod(row[col("median_baseline_mse")]);
    const double sr = std::stod(row[col("sparsity")]);
    if (row[col("system")] == "lorenz") {
      (sr == 0.5 ? s.lorenz_05 : s.lorenz_09) = med;
      if (sr == 0.5) s.baseline_05 = base;
    } else if (sr == 0.5) {
      s.stochastic_05 = med;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// 5. reservoir climate

Outcome reservoir_climate() {
  const auto t0 = std::chrono::steady_clock::now();
  harness::ExperimentPlan plan;
  plan.pool_selector = "sprott_0";
  plan.pool = harness::resolve_pool(plan.pool_selector);
  ReservoirConfig rc = ReservoirConfig::preset("lorenz");
  rc.size = 300;
  const auto big = harness::run_climate(plan, "lorenz", nullptr, rc);
  rc.size = 100;
  const auto small = harness::run_climate(plan, "lorenz", nullptr, rc);
  const bool ok = big.rmse < big.persistence_rmse && big.dv < big.surrogate_dv && big.dv < small.dv;
  return {ok, "RMSE@150 " + fmt(big.rmse) + " vs persistence " + fmt(big.persistence_rmse) + ", DV " + fmt(big.dv) +
                  " vs surrogate " + fmt(big.surrogate_dv) + ", DV(N_s=100) " + fmt(small.dv) +
                  (big.truncated ? ", truncated" : "") + ", " + fmt(seconds_since(t0)) + " s"};
}

// ---------------------------------------------------------------------------
// 6. echo-state property

Outcome echo_state() {
  double worst = 0.0;
  for (std::uint64_t m = 0; m < 10; ++m) {
    ReservoirConfig cfg;
    cfg.size = 300;
    cfg.spectral_radius = 0.9;
    cfg.seed = derive_seed(600, "esp", m);
    const ReservoirModel model = init_reservoir(cfg, 3);
    Rng rng = make_rng(derive_seed(601, "esp", m));
    Eigen::VectorXd r1(300), r2(300);
    for (Eigen::Index i = 0; i < 300; ++i) r1(i) = 2 * uniform01(rng) - 1, r2(i) = 2 * uniform01(rng) - 1;
    for (int step = 0; step < 1000; ++step) {
      Eigen::VectorXd u(3);
      for (Eigen::Index i = 0; i < 3; ++i) u(i) = uniform01(rng);
      r1 = advance(model, r1, u);
      r2 = advance(model, r2, u);
    }
    worst = std::max(worst, (r1 - r2).norm());
  }
  return {worst < 1e-6, "max |r1 - r2| after 1000 steps " + fmt(worst) + " over 10 models"};
}

// ---------------------------------------------------------------------------
// 7. CLI determinism

int run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + cli + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_determinism(const std::string& cli, const fs::path& cache) {
  const fs::path root = fs::absolute(cache / "determinism");
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path log = root / "cli.log";
  // Relative --out values land under the output root.
  ::setenv(harness::kOutputRootEnv, root.c_str(), 1);

  const std::string plan =
      " --set pool=sprott_0,sprott_1,sprott_2 --set targets=lorenz --set transient=2000"
      " --set transformer.data_length=400 --set transformer.epochs=1 --set transformer.steps_per_epoch=3"
      " --set transformer.batch_size=2 --set transformer.max_len=64 --set sweep.seq_len=32"
      " --set realizations=2 --set test.rows=300 --set climate.training_rows=900 --set climate.horizon=200"
      " --set climate.rmse_horizon=50 --set climate.warmup=100 --set reservoir.size=50"
      " --set rotation.group_size=16 --set search.trials=2";
  // The same plan once more through a config file.
  std::string plan_file_text;
  for (std::size_t pos = plan.find("--set "); pos != std::string::npos; pos = plan.find("--set ", pos + 1)) {
    const std::size_t start = pos + 6, end = plan.find(' ', start);
    std::string kv = plan.substr(start, end == std::string::npos ? std::string::npos : end - start);
    kv.replace(kv.find('='), 1, " = ");
    plan_file_text += kv + "\n";
  }
  io::write_file_atomic(root / "plan.cfg", plan_file_text);
  struct Step {
    std::string verb, args, out;
    bool file;
  };
  const std::vector<Step> steps = {
      {"gen", plan, "gen", false},
      {"gen", "--system lorenz --steps 2000 --transient 1000", "lorenz.cwtj", true},
      {"mask", "--input lorenz.cwtj --sparsity 0.5 --noise 0.05", "lorenz.cwsp", true},
      {"train", plan, "train", false},
      {"train", "--config \"" + (root / "plan.cfg").string() + "\"", "train_cfg", false},
      {"reconstruct", "--model a/train/model.cwck --input lorenz.cwsp --truth lorenz.cwtj", "rec.cwtj", true},
      {"evaluate", plan + " --model a/train/model.cwck", "evaluate", false},
      {"climate", plan + " --model a/train/model.cwck --sizes 30,50 --truth-baseline", "climate", false},
      {"climate", "--segments lorenz.cwtj,a/rec.cwtj --horizon 150 --set reservoir.size=40 --set reservoir.washout=20"
                  " --set climate.warmup=20",
       "forecast.cwtj", true},
      {"search", plan + " --target reservoir", "search_reservoir", false},
      {"search", plan + " --target transformer", "search_transformer", false},
      {"rotate", plan, "rotate", false},
  };
  std::size_t compared = 0, csvs = 0;
  std::vector<std::string> fails;
  for (const auto& s : steps) {
    // The two single-series inputs live at the root so later steps find them.
    const bool input_file = s.out == "lorenz.cwtj" || s.out == "lorenz.cwsp";
    const std::string out_a = input_file ? s.out : "a/" + s.out;
    const std::string out_b = "b/" + s.out;
    if (run_cli(cli, s.verb + " " + s.args + " --out " + out_a, log) != 0) {
      fails.push_back(s.verb + " " + s.out + " failed");
      continue;
    }
    const fs::path manifest_a = root / (s.file ? out_a + ".manifest.json" : out_a + "/manifest.json");
    if (run_cli(cli, s.verb + " --manifest \"" + manifest_a.string() + "\" --out " + out_b, log) != 0) {
      fails.push_back(s.verb + " " + s.out + " replay failed");
      continue;
    }
    const fs::path manifest_b = root / (s.file ? out_b + ".manifest.json" : out_b + "/manifest.json");
    const RunManifest a = RunManifest::read(manifest_a), b = RunManifest::read(manifest_b);
    verify_manifest(a, manifest_a.parent_path());
    verify_manifest(b, manifest_b.parent_path());
    if (a.config_hash != b.config_hash) fails.push_back(s.verb + " config hash differs");
    if (a.artifacts.size() != b.artifacts.size()) {
      fails.push_back(s.verb + " artifact count differs");
      continue;
    }
    for (std::size_t i = 0; i < a.artifacts.size(); ++i) {
      const std::string x = io::read_file(manifest_a.parent_path() / a.artifacts[i].path);
      const std::string y = io::read_file(manifest_b.parent_path() / b.artifacts[i].path);
      ++compared;
      if (a.artifacts[i].kind == "csv") ++csvs;
      if (x != y) fails.push_back(s.verb + ": " + a.artifacts[i].path + " differs");
    }
  }
  // --set and --config describe the same plan, so the runs match.
  if (fs::exists(root / "a/train_cfg/model.cwck") &&
      io::read_file(root / "a/train/model.cwck") != io::read_file(root / "a/train_cfg/model.cwck")) {
    fails.push_back("--config and --set runs differ");
  }
  // Exit status contract.
  const int bad = run_cli(cli, "evaluate --set sweep.sparsity=1.5 --model a/train/model.cwck --out bad", log);
  if (bad != 2) fails.push_back("validation failure exited " + std::to_string(bad));
  ::unsetenv(harness::kOutputRootEnv);

  std::string d = std::to_string(steps.size()) + " runs replayed, " + std::to_string(compared) + " artifacts (" +
                  std::to_string(csvs) + " CSV) compared";
  for (const auto& f : fails) d += "; " + f;
  if (!fails.empty()) d += " (see " + log.string() + ")";
  return {fails.empty(), d};
}

// ---------------------------------------------------------------------------
// 8. hyperopt sanity

Outcome hyperopt_sanity() {
  SearchSpace space;
  space.linear("x", -2, 2);
  const auto bowl = [](const ParamSample& s, std::uint64_t) { return 1.0 + std::pow(s.number("x") - 0.3, 2); };
  std::size_t hits = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double best = *random_search(space, 200, bowl, seed).best.objective;
    worst = std::max(worst, best);
    if (best <= 1.05) ++hits;
  }
  return {hits == 10, std::to_string(hits) + "/10 seeds within 5% of the optimum 1 (worst " + fmt(worst) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chronoweft acceptance criteria"};
  std::string cli, cache = "acceptance_cache";
  std::vector<int> only;
  app.add_option("--cli", cli, "chronoweft executable")->required();
  app.add_option("--cache", cache, "Directory for the cached desk model and CLI runs");
  app.add_option("--only", only, "Comma-separated criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(cache);

  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int c) { return selected.empty() || selected.count(c) > 0; };

  int failed = 0;
  auto report = [&](int c, const char* name, const std::function<Outcome()>& fn) {
    if (!wanted(c)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << c << " " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail
              << std::endl;
    if (!o.pass) ++failed;
  };

  report(1, "numerical core", numerical_core);
  report(2, "metric axioms", metric_axioms);
  if (wanted(3) || wanted(4)) {
    std::optional<DeskScores> desk;
    auto scores = [&] {
      if (!desk) desk = desk_scores(cache);
      return *desk;
    };
    report(3, "desk zero-shot reconstruction", [&] {
      const auto s = scores();
      return Outcome{s.lorenz_05 < s.baseline_05 && s.lorenz_05 < s.lorenz_09,
                     "Lorenz median MSE " + fmt(s.lorenz_05) + " vs interpolation " + fmt(s.baseline_05) +
                         ", MSE(S_r=0.9) " + fmt(s.lorenz_09)};
    });
    report(4, "stochastic signal ordering", [&] {
      const auto s = scores();
      return Outcome{s.stochastic_05 >= 2 * s.lorenz_05, "stochastic median MSE " + fmt(s.stochastic_05) + " vs Lorenz " +
                                                              fmt(s.lorenz_05) + " (ratio " +
                                                              fmt(s.stochastic_05 / s.lorenz_05) + ")"};
    });
  }
  report(5, "reservoir climate", reservoir_climate);
  report(6, "echo-state property", echo_state);
  report(7, "CLI determinism", [&] { return cli_determinism(cli, cache); });
  report(8, "hyperopt sanity", hyperopt_sanity);
  return failed == 0 ? 0 : 1;
}
