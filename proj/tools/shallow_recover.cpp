// Command-line driver: curvature curves, single recoveries, the two sweep
// experiments, Hessian probes and initialization checks. Every run writes a
// key: value manifest that `replay` can re-execute.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "shallow/csv.hpp"
#include "shallow/data_gen.hpp"
#include "shallow/error.hpp"
#include "shallow/experiments.hpp"
#include "shallow/geometry.hpp"
#include "shallow/optimizer.hpp"
#include "shallow/tensor_init.hpp"

namespace {

using namespace shallow;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Options {
  std::string model = "fcn";
  std::string d = "10";
  std::optional<int> k;
  int n = 20000;
  std::string n_grid;
  std::optional<int> trials;
  std::optional<int> inits;
  std::optional<double> sd_threshold;
  std::optional<double> eta;
  long max_iters = 3500;
  double tol = 1e-9;
  std::string init = "near-truth";
  std::optional<double> radius;
  double scale = kDefaultWeightScale;
  std::uint64_t seed = 0;
  std::string out;
  std::string manifest;
  std::string preset = "paper";
  double sigma_min = 0.05;
  double sigma_max = 2.0;
  int steps = 40;
  std::string convention = "standard";
  int points = 20;
  double radius_constant = 1.0;
  std::string data_file;
  long trace_stride = 1;
  bool detect_orders = false;
};

std::vector<int> parse_int_list(const std::string& s, const char* flag) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string(flag) + ": not an integer list: " + s);
    }
  }
  if (out.empty()) throw ConfigError(std::string(flag) + ": empty list");
  return out;
}

// "a:b:xF" for a geometric grid from a to b, or a comma list.
std::vector<int> parse_n_grid(const std::string& s) {
  if (s.find(':') == std::string::npos) return parse_int_list(s, "--n-grid");
  long lo = 0, hi = 0, factor = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%ld:%ld:x%ld%c", &lo, &hi, &factor, &tail) != 3 ||
      lo < 1 || hi < lo || factor < 2) {
    throw ConfigError("--n-grid: expected start:stop:xFACTOR, got " + s);
  }
  std::vector<int> out;
  for (long n = lo; n <= hi; n *= factor) out.push_back(static_cast<int>(n));
  return out;
}

int require_k(const Options& o) {
  if (!o.k) throw ConfigError("missing required flag --k");
  return *o.k;
}

void require_out(const Options& o) {
  if (o.out.empty()) throw ConfigError("missing required flag --out");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open output file " + path);
  return os;
}

GDConfig gd_config(const Options& o) {
  GDConfig gd;
  gd.eta = o.eta;
  gd.max_iters = o.max_iters;
  gd.grad_tol = o.tol;
  gd.trace_stride = o.trace_stride;
  return gd;
}

RunManifest base_manifest(const std::string& command,
                          const std::vector<std::string>& args) {
  RunManifest m;
  m.set("command", command);
  m.set("version", kCodeVersion);
  m.set("arg_count", static_cast<long>(args.size()));
  for (size_t i = 0; i < args.size(); ++i) {
    m.set("arg." + std::to_string(i), args[i]);
  }
  return m;
}

void finish_manifest(RunManifest& m, const Options& o,
                     std::chrono::steady_clock::time_point start) {
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  m.set("wall_clock_seconds", secs);
  const std::string path = o.manifest.empty() ? o.out + ".manifest" : o.manifest;
  std::ofstream os = open_out(path);
  m.write(os);
}

ExperimentConfig experiment_config(const Options& o, bool error_scaling) {
  ExperimentConfig cfg;
  cfg.model = parse_model_kind(o.model);
  cfg.d_list = parse_int_list(o.d, "--d");
  cfg.k = require_k(o);
  if (!o.n_grid.empty()) cfg.n_grid = parse_n_grid(o.n_grid);
  if (o.preset == "quick") {
    cfg.trials = 10;
    cfg.inits = error_scaling ? 20 : 5;
  } else if (o.preset == "paper") {
    cfg.trials = 50;
    cfg.inits = error_scaling ? 100 : 20;
  } else {
    throw ConfigError("--preset: expected quick or paper, got " + o.preset);
  }
  if (o.trials) cfg.trials = *o.trials;
  if (o.inits) cfg.inits = *o.inits;
  cfg.sd_threshold = o.sd_threshold;
  cfg.gd = gd_config(o);
  cfg.init = parse_init_mode(o.init);
  cfg.radius = o.radius;
  cfg.weight_scale = o.scale;
  cfg.seed = o.seed;
  cfg.validate();
  return cfg;
}

void echo_config(RunManifest& m, const ExperimentConfig& cfg) {
  m.set("model", to_string(cfg.model));
  std::string ds, ns;
  for (int d : cfg.d_list) ds += (ds.empty() ? "" : ",") + std::to_string(d);
  for (int n : cfg.n_grid) ns += (ns.empty() ? "" : ",") + std::to_string(n);
  m.set("d", ds);
  m.set("k", static_cast<long>(cfg.k));
  m.set("n_grid", ns);
  m.set("trials", static_cast<long>(cfg.trials));
  m.set("inits", static_cast<long>(cfg.inits));
  m.set("sd_threshold", cfg.threshold());
  m.set("eta", cfg.gd.eta ? fmt17(*cfg.gd.eta) : std::string("default"));
  m.set("max_iters", cfg.gd.max_iters);
  m.set("tol", cfg.gd.grad_tol);
  m.set("init", to_string(cfg.init));
  m.set("radius", cfg.radius ? fmt17(*cfg.radius) : std::string("default"));
  m.set("weight_scale", cfg.weight_scale);
  m.set("seed", std::to_string(cfg.seed));
}

int cmd_rho_curve(const Options& o, RunManifest& m) {
  require_out(o);
  MomentConvention conv;
  if (o.convention == "standard") {
    conv = MomentConvention::kStandard;
  } else if (o.convention == "literal") {
    conv = MomentConvention::kLiteral;
  } else {
    throw ConfigError("--convention: expected standard or literal");
  }
  const auto curve = rho_curve(o.sigma_min, o.sigma_max, o.steps, conv);
  std::ofstream os = open_out(o.out);
  write_rho_csv(os, curve);
  m.set("sigma_min", o.sigma_min);
  m.set("sigma_max", o.sigma_max);
  m.set("steps", static_cast<long>(o.steps));
  m.set("convention", o.convention);
  return 0;
}

struct Problem {
  NetworkWeights truth;
  Dataset data;
};

Problem make_problem(const Options& o, ModelKind kind, int k) {
  const std::vector<int> ds = parse_int_list(o.d, "--d");
  if (ds.size() != 1) throw ConfigError("--d: expected a single dimension");
  GroundTruthSpec spec{kind, ds.front(), k, o.scale, o.seed};
  const NetworkWeights truth = make_ground_truth(spec);
  if (!o.data_file.empty()) {
    std::ifstream is(o.data_file);
    if (!is) throw ConfigError("cannot open --data file " + o.data_file);
    return {truth, read_dataset(is)};
  }
  if (o.n < 1) throw ConfigError("--n must be positive");
  return {truth, sample_dataset(truth, o.n,
                                RngStream(o.seed, stream_id("cli-data")))};
}

void set_weights(RunManifest& m, const std::string& key,
                 const NetworkWeights& w) {
  const Vector v = vectorize(w);
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    s += (i ? " " : "") + fmt17(v[i]);
  }
  m.set(key, s);
}

int cmd_recover(const Options& o, RunManifest& m) {
  require_out(o);
  const ModelKind kind = parse_model_kind(o.model);
  const int k = require_k(o);
  const Problem p = make_problem(o, kind, k);
  RngStream init_rng(o.seed, stream_id("cli-init"));
  NetworkWeights w0 = p.truth;
  switch (parse_init_mode(o.init)) {
    case InitMode::kNearTruth:
      w0 = near_truth_init(p.truth,
                           o.radius ? *o.radius : default_init_radius(p.truth),
                           init_rng);
      break;
    case InitMode::kRandom:
      w0 = random_init(kind, p.data.d(), k, vectorize(p.truth).norm(), init_rng);
      break;
    case InitMode::kTensor:
      if (kind != ModelKind::kFcn) {
        throw ConfigError("--init tensor is available for fcn only");
      }
      w0 = init_full(p.data, k, init_rng).weights();
      break;
  }
  const GDTrace trace = gd_run(p.data, w0, gd_config(o), p.truth);
  std::ofstream os = open_out(o.out);
  write_trace_csv(os, trace);

  const TraceRecord& last = trace.records.back();
  m.set("model", o.model);
  m.set("d", static_cast<long>(p.data.d()));
  m.set("k", static_cast<long>(k));
  m.set("n", static_cast<long>(p.data.n()));
  m.set("seed", std::to_string(o.seed));
  m.set("init", o.init);
  m.set("iterations", trace.iterations);
  m.set("stop_reason", trace.reason_string());
  m.set("final_loss", last.loss);
  m.set("final_grad_norm", last.grad_norm);
  m.set("aligned_error", last.aligned_err);
  m.set("relative_error", last.aligned_err / vectorize(p.truth).norm());
  m.set("ascent_steps", trace.ascent_steps);
  try {
    const LinearRateFit fit = fit_linear_rate(trace);
    m.set("rate_ratio", fit.ratio);
    m.set("rate_r_squared", fit.r_squared);
  } catch (const NumericalError&) {
    m.set("rate_ratio", "unavailable");
  }
  set_weights(m, "final_weights", trace.final_weights);
  std::cout << "iterations " << trace.iterations << " (" << trace.reason_string()
            << ")\nloss " << fmt17(last.loss) << "\ngrad_norm "
            << fmt17(last.grad_norm) << "\naligned_error "
            << fmt17(last.aligned_err) << '\n';
  return 0;
}

int cmd_success_rate(const Options& o, RunManifest& m) {
  require_out(o);
  const ExperimentConfig cfg = experiment_config(o, false);
  echo_config(m, cfg);
  const auto rows = success_rate_experiment(cfg);
  std::ofstream os = open_out(o.out);
  write_success_csv(os, rows);
  for (size_t i = 0; i < rows.size(); ++i) {
    m.set("cell." + std::to_string(i),
          "d=" + std::to_string(rows[i].d) + " n=" + std::to_string(rows[i].n) +
              " success_rate=" + fmt17(rows[i].success_rate));
  }
  return 0;
}

int cmd_error_scaling(const Options& o, RunManifest& m) {
  require_out(o);
  const ExperimentConfig cfg = experiment_config(o, true);
  echo_config(m, cfg);
  const auto rows = error_scaling_experiment(cfg);
  std::ofstream os = open_out(o.out);
  write_error_csv(os, rows);
  for (size_t i = 0; i < rows.size(); ++i) {
    m.set("cell." + std::to_string(i),
          "d=" + std::to_string(rows[i].d) + " n=" + std::to_string(rows[i].n) +
              " mean_rel_sq_err=" + fmt17(rows[i].mean_rel_sq_err) +
              " median_aligned_err=" + fmt17(rows[i].median_aligned_err));
  }
  return 0;
}

int cmd_hessian_probe(const Options& o, RunManifest& m) {
  require_out(o);
  const ModelKind kind = parse_model_kind(o.model);
  const int k = require_k(o);
  const Problem p = make_problem(o, kind, k);
  const Radius theory = theoretical_radius(p.truth, o.radius_constant);
  const double r = o.radius ? *o.radius : theory.value;
  const GeometryReport rep = hessian_spectrum_probe(
      p.data, p.truth, r, o.points, RngStream(o.seed, stream_id("cli-probe")));
  std::ofstream os = open_out(o.out);
  write_probe_csv(os, rep);
  m.set("model", o.model);
  m.set("d", static_cast<long>(p.data.d()));
  m.set("k", static_cast<long>(k));
  m.set("n", static_cast<long>(p.data.n()));
  m.set("seed", std::to_string(o.seed));
  m.set("rho", rep.rho);
  m.set("kappa", rep.cond.kappa);
  m.set("lambda", rep.cond.lambda);
  m.set("theory_radius", theory.value);
  m.set("theory_radius_formula", theory.formula);
  m.set("probe_radius", rep.probe_radius);
  m.set("min_lambda_min", rep.min_lambda_min());
  m.set("max_lambda_max", rep.max_lambda_max());
  std::cout << "radius " << fmt17(rep.probe_radius) << "\nmin_lambda_min "
            << fmt17(rep.min_lambda_min()) << "\nmax_lambda_max "
            << fmt17(rep.max_lambda_max()) << '\n';
  return 0;
}

int cmd_init_eval(const Options& o, RunManifest& m) {
  require_out(o);
  const int k = require_k(o);
  if (parse_model_kind(o.model) != ModelKind::kFcn) {
    throw ConfigError("init-eval supports --model fcn only");
  }
  const Problem p = make_problem(o, ModelKind::kFcn, k);
  InitConfig icfg;
  icfg.detect_orders = o.detect_orders;
  const TensorInit ti =
      init_full(p.data, k, RngStream(o.seed, stream_id("cli-init")), icfg);
  const auto& truth = std::get<FcnWeights>(p.truth);
  const AlignedError ae = aligned_error(ti.weights(), truth);

  // The init-eval output is itself a key: value manifest.
  RunManifest r;
  r.set("model", o.model);
  r.set("d", static_cast<long>(p.data.d()));
  r.set("k", static_cast<long>(k));
  r.set("n", static_cast<long>(p.data.n()));
  r.set("seed", std::to_string(o.seed));
  r.set("j2", static_cast<long>(ti.moments.j2));
  r.set("j3", static_cast<long>(ti.moments.j3));
  r.set("l1", static_cast<long>(ti.moments.l1));
  r.set("m1_norm", ti.moments.m1_norm);
  r.set("m1_std_error", ti.moments.m1_se);
  r.set("m2_norm", ti.moments.m2_norm);
  r.set("m2_std_error", ti.moments.m2_se);
  r.set("p2_norm", ti.moments.p2_norm);
  r.set("p2_std_error", ti.moments.p2_se);
  r.set("subspace_ill_separated", ti.moments.ill_separated ? "true" : "false");
  r.set("decomposition_residual", ti.output.decomposition_residual);
  r.set("decomposition_probe_draws",
        static_cast<long>(ti.decomposition.probe_draws));
  r.set("lstsq_residual", ti.output.lstsq_residual);
  for (int i = 0; i < k; ++i) {
    r.set("a." + std::to_string(i), ti.output.magnitudes[i]);
    r.set("s." + std::to_string(i), static_cast<long>(ti.output.signs[i]));
  }
  r.set("aligned_error", ae.error);
  r.set("relative_error", ae.error / truth.matrix().norm());
  std::ofstream os = open_out(o.out);
  r.write(os);
  for (const auto& [key, value] : r.entries()) m.set(key, value);
  std::cout << "aligned_error " << fmt17(ae.error) << '\n';
  return 0;
}

int run(const std::vector<std::string>& args);

int cmd_replay(const std::string& manifest_path, const std::string& out,
               const std::string& manifest_out) {
  std::ifstream is(manifest_path);
  if (!is) throw ConfigError("cannot open manifest " + manifest_path);
  const RunManifest m = RunManifest::read(is);
  const long count = std::stol(m.get("arg_count"));
  std::vector<std::string> args;
  for (long i = 0; i < count; ++i) args.push_back(m.get("arg." + std::to_string(i)));
  if (args.empty() || args.front() == "replay") {
    throw ConfigError("manifest does not record a replayable command");
  }
  auto override_flag = [&](const std::string& flag, const std::string& value) {
    if (value.empty()) return;
    for (size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == flag) {
        args[i + 1] = value;
        return;
      }
      if (args[i].rfind(flag + "=", 0) == 0) {
        args[i] = flag + "=" + value;
        return;
      }
    }
    args.push_back(flag);
    args.push_back(value);
  };
  override_flag("--out", out);
  override_flag("--manifest", manifest_out);
  return run(args);
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--model", o.model, "fcn or cnn");
  sub->add_option("--d", o.d, "input dimension (comma list for sweeps)");
  sub->add_option("--k", o.k, "number of hidden neurons");
  sub->add_option("--n", o.n, "number of samples");
  sub->add_option("--scale", o.scale, "norm of each ground-truth neuron");
  sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("--out", o.out, "output file");
  sub->add_option("--manifest", o.manifest,
                  "manifest path (default: <out>.manifest)");
}

void add_gd(CLI::App* sub, Options& o) {
  sub->add_option("--eta", o.eta, "step size (default 4K)");
  sub->add_option("--max-iters", o.max_iters, "iteration cap");
  sub->add_option("--tol", o.tol, "gradient-norm tolerance");
  sub->add_option("--init", o.init, "tensor, near-truth or random");
  sub->add_option("--radius", o.radius, "initialization or probe radius");
}

int run(const std::vector<std::string>& args) {
  const auto start = std::chrono::steady_clock::now();
  Options o;
  CLI::App app{"Recover one-hidden-layer sigmoid networks from binary labels",
               "shallow_recover"};
  app.require_subcommand(1);

  auto* rho = app.add_subcommand("rho-curve", "curvature quantities on a grid");
  rho->add_option("--sigma-min", o.sigma_min);
  rho->add_option("--sigma-max", o.sigma_max);
  rho->add_option("--steps", o.steps);
  rho->add_option("--convention", o.convention, "standard or literal");
  rho->add_option("--out", o.out, "output CSV");
  rho->add_option("--manifest", o.manifest);

  auto* recover = app.add_subcommand("recover", "one gradient-descent recovery");
  add_common(recover, o);
  add_gd(recover, o);
  recover->add_option("--data", o.data_file, "dataset dump to fit instead of sampling");
  recover->add_option("--trace-stride", o.trace_stride);

  auto* success = app.add_subcommand("success-rate", "SD_n success-rate sweep");
  add_common(success, o);
  add_gd(success, o);
  for (auto* sub : {success}) {
    sub->add_option("--n-grid", o.n_grid, "start:stop:xFACTOR or comma list");
    sub->add_option("--trials", o.trials);
    sub->add_option("--inits", o.inits);
    sub->add_option("--sd-threshold", o.sd_threshold);
    sub->add_option("--preset", o.preset, "quick or paper");
  }

  auto* error = app.add_subcommand("error-scaling", "estimation error vs n");
  add_common(error, o);
  add_gd(error, o);
  error->add_option("--n-grid", o.n_grid, "start:stop:xFACTOR or comma list");
  error->add_option("--inits", o.inits, "Monte-Carlo runs per cell");
  error->add_option("--trials", o.trials);
  error->add_option("--preset", o.preset, "quick or paper");

  auto* probe = app.add_subcommand("hessian-probe",
                                   "Hessian spectrum in the local ball");
  add_common(probe, o);
  probe->add_option("--radius", o.radius, "probe radius (default: theory)");
  probe->add_option("--radius-constant", o.radius_constant);
  probe->add_option("--points", o.points);
  probe->add_option("--data", o.data_file);

  auto* init = app.add_subcommand("init-eval", "tensor initialization report");
  add_common(init, o);
  init->add_option("--data", o.data_file);
  init->add_flag("--detect-orders", o.detect_orders,
                 "select j2 and l1 from the data");

  std::string replay_manifest, replay_out, replay_manifest_out;
  auto* replay = app.add_subcommand("replay", "re-run a recorded manifest");
  replay->add_option("path", replay_manifest, "manifest to replay")->required();
  replay->add_option("--out", replay_out, "write output here instead");
  replay->add_option("--manifest", replay_manifest_out);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (replay->parsed()) {
    return cmd_replay(replay_manifest, replay_out, replay_manifest_out);
  }
  CLI::App* chosen = app.get_subcommands().front();
  RunManifest m = base_manifest(chosen->get_name(), args);
  int rc = 0;
  if (chosen == rho) rc = cmd_rho_curve(o, m);
  if (chosen == recover) rc = cmd_recover(o, m);
  if (chosen == success) rc = cmd_success_rate(o, m);
  if (chosen == error) rc = cmd_error_scaling(o, m);
  if (chosen == probe) rc = cmd_hessian_probe(o, m);
  if (chosen == init) rc = cmd_init_eval(o, m);
  finish_manifest(m, o, start);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const shallow::Error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
