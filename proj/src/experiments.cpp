#include "shallow/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "shallow/csv.hpp"
#include "shallow/data_gen.hpp"
#include "shallow/error.hpp"
#include "shallow/parallel.hpp"
#include "shallow/tensor_init.hpp"

namespace shallow {

const char* to_string(InitMode mode) {
  switch (mode) {
    case InitMode::kTensor: return "tensor";
    case InitMode::kNearTruth: return "near-truth";
    case InitMode::kRandom: return "random";
  }
  return "?";
}

InitMode parse_init_mode(const std::string& s) {
  if (s == "tensor") return InitMode::kTensor;
  if (s == "near-truth") return InitMode::kNearTruth;
  if (s == "random") return InitMode::kRandom;
  throw ConfigError("unknown init mode '" + s +
                    "' (expected tensor, near-truth or random)");
}

double ExperimentConfig::threshold() const {
  if (sd_threshold) return *sd_threshold;
  return model == ModelKind::kFcn ? 1e-4 : 1e-15;
}

void ExperimentConfig::validate() const {
  if (d_list.empty() || n_grid.empty()) {
    throw ConfigError("experiment needs at least one d and one n");
  }
  if (k < 1 || trials < 1 || inits < 1) {
    throw ConfigError("k, trials and inits must be at least 1");
  }
  if (!(threshold() > 0.0)) throw ConfigError("SD threshold must be positive");
  for (size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 1 || (i > 0 && n_grid[i] <= n_grid[i - 1])) {
      throw ConfigError("n grid must be positive and strictly increasing");
    }
  }
  for (int d : d_list) {
    if (d < k) throw ConfigError("every d must be at least k");
    if (model == ModelKind::kCnn && d % k != 0) {
      throw ConfigError("cnn needs k to divide every d");
    }
  }
  if (radius && !(*radius >= 0.0)) throw ConfigError("radius must be >= 0");
  if (!(weight_scale > 0.0 && weight_scale <= 1.0)) {
    throw ConfigError("weight scale must lie in (0, 1]");
  }
}

double sd_metric(const std::vector<Vector>& outputs) {
  if (outputs.size() < 2) throw ConfigError("sd_metric: need at least two outputs");
  const Eigen::Index len = outputs.front().size();
  Vector mean = Vector::Zero(len);
  for (const auto& v : outputs) {
    if (v.size() != len) throw DimensionError("sd_metric: unequal lengths");
    mean += v;
  }
  mean /= static_cast<double>(outputs.size());
  double s = 0.0;
  for (const auto& v : outputs) s += (v - mean).squaredNorm();
  return std::sqrt(s / static_cast<double>(outputs.size()));
}

namespace {

RngStream cell_stream(const ExperimentConfig& cfg, const char* experiment,
                      int d, int n) {
  return RngStream(cfg.seed, stream_id(experiment))
      .derive("d", static_cast<std::uint64_t>(d))
      .derive("n", static_cast<std::uint64_t>(n));
}

GroundTruthSpec truth_spec(const ExperimentConfig& cfg, int d) {
  return {cfg.model, d, cfg.k, cfg.weight_scale, cfg.seed};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

struct Cell {
  int d;
  int n;
};

std::vector<Cell> cells(const ExperimentConfig& cfg) {
  std::vector<Cell> out;
  for (int d : cfg.d_list) {
    for (int n : cfg.n_grid) out.push_back({d, n});
  }
  return out;
}

}  // namespace

std::vector<SuccessRow> success_rate_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.init != InitMode::kNearTruth) {
    throw ConfigError("success-rate draws its starts in the ball around the "
                      "truth; use --init near-truth");
  }
  if (cfg.inits < 2) throw ConfigError("success-rate needs at least 2 inits");
  const std::vector<Cell> grid = cells(cfg);
  const size_t jobs = grid.size() * cfg.trials;
  std::vector<char> success(jobs, 0);
  parallel_for(jobs, [&](size_t job) {
    const Cell& cell = grid[job / cfg.trials];
    const int trial = static_cast<int>(job % cfg.trials);
    const RngStream rng = cell_stream(cfg, "success-rate", cell.d, cell.n)
                              .derive("trial", trial);
    const NetworkWeights truth =
        make_ground_truth(truth_spec(cfg, cell.d), rng.derive("truth"));
    const Dataset data = sample_dataset(truth, cell.n, rng.derive("data"));
    const double r = cfg.radius ? *cfg.radius : default_init_radius(truth);
    GDConfig gd = cfg.gd;
    gd.track_distance_to_final = false;
    gd.trace_stride = gd.max_iters + 1;
    std::vector<Vector> outputs;
    outputs.reserve(cfg.inits);
    for (int l = 0; l < cfg.inits; ++l) {
      RngStream init_rng = rng.derive("init", l);
      const NetworkWeights w0 = ball_init(truth, r, init_rng);
      outputs.push_back(vectorize(gd_run(data, w0, gd).final_weights));
    }
    success[job] = sd_metric(outputs) <= cfg.threshold();
  });

  std::vector<SuccessRow> rows;
  for (size_t c = 0; c < grid.size(); ++c) {
    int hits = 0;
    for (int t = 0; t < cfg.trials; ++t) hits += success[c * cfg.trials + t];
    const double d = grid[c].d;
    const double log_d = std::log(d);
    rows.push_back({cfg.model, grid[c].d, cfg.k, grid[c].n,
                    grid[c].n / (d * log_d * log_d), cfg.trials,
                    static_cast<double>(hits) / cfg.trials});
  }
  return rows;
}

void write_success_csv(std::ostream& os, const std::vector<SuccessRow>& rows) {
  os << "model,d,k,n,n_over_dlog2d,trials,success_rate\n";
  for (const auto& r : rows) {
    os << to_string(r.model) << ',' << r.d << ',' << r.k << ',' << r.n << ','
       << fmt17(r.n_over_dlog2d) << ',' << r.trials << ','
       << fmt17(r.success_rate) << '\n';
  }
}

std::vector<ErrorRow> error_scaling_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.init == InitMode::kTensor && cfg.model != ModelKind::kFcn) {
    throw ConfigError("tensor initialization is available for fcn only");
  }
  const std::vector<Cell> grid = cells(cfg);
  std::vector<NetworkWeights> truths;
  for (int d : cfg.d_list) {
    truths.push_back(make_ground_truth(
        truth_spec(cfg, d),
        RngStream(cfg.seed, stream_id("error-scaling")).derive("truth", d)));
  }
  auto truth_for = [&](int d) -> const NetworkWeights& {
    const auto it = std::find(cfg.d_list.begin(), cfg.d_list.end(), d);
    return truths[it - cfg.d_list.begin()];
  };

  const size_t jobs = grid.size() * cfg.inits;
  std::vector<double> err(jobs, 0.0);
  parallel_for(jobs, [&](size_t job) {
    const Cell& cell = grid[job / cfg.inits];
    const int run = static_cast<int>(job % cfg.inits);
    const RngStream rng = cell_stream(cfg, "error-scaling", cell.d, cell.n)
                              .derive("run", run);
    const NetworkWeights& truth = truth_for(cell.d);
    const Dataset data = sample_dataset(truth, cell.n, rng.derive("data"));
    RngStream init_rng = rng.derive("init");
    const double norm = vectorize(truth).norm();
    NetworkWeights w0 = truth;
    switch (cfg.init) {
      case InitMode::kNearTruth:
        w0 = near_truth_init(
            truth, cfg.radius ? *cfg.radius : default_init_radius(truth),
            init_rng);
        break;
      case InitMode::kRandom:
        w0 = random_init(cfg.model, cell.d, cfg.k, norm, init_rng);
        break;
      case InitMode::kTensor:
        w0 = init_full(data, cfg.k, init_rng).weights();
        break;
    }
    GDConfig gd = cfg.gd;
    gd.track_distance_to_final = false;
    gd.trace_stride = gd.max_iters + 1;
    err[job] = aligned_distance(gd_run(data, w0, gd).final_weights, truth);
  });

  std::vector<ErrorRow> rows;
  for (size_t c = 0; c < grid.size(); ++c) {
    const auto first = err.begin() + static_cast<long>(c * cfg.inits);
    const std::vector<double> cell_err(first, first + cfg.inits);
    const double norm2 = vectorize(truth_for(grid[c].d)).squaredNorm();
    double sq = 0.0, lin = 0.0;
    for (double e : cell_err) {
      sq += e * e;
      lin += e;
    }
    const double d = grid[c].d, n = grid[c].n;
    rows.push_back({cfg.model, grid[c].d, cfg.k, grid[c].n,
                    sq / (cfg.inits * norm2), std::sqrt(d * std::log(n) / n),
                    lin / cfg.inits, median(cell_err)});
  }
  return rows;
}

void write_error_csv(std::ostream& os, const std::vector<ErrorRow>& rows) {
  os << "model,d,k,n,mean_rel_sq_err,sqrt_dlogn_over_n,mean_aligned_err,"
        "median_aligned_err\n";
  for (const auto& r : rows) {
    os << to_string(r.model) << ',' << r.d << ',' << r.k << ',' << r.n << ','
       << fmt17(r.mean_rel_sq_err) << ',' << fmt17(r.sqrt_dlogn_over_n) << ','
       << fmt17(r.mean_aligned_err) << ',' << fmt17(r.median_aligned_err)
       << '\n';
  }
}

void RunManifest::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find(':') != std::string::npos ||
      key.find('\n') != std::string::npos ||
      value.find('\n') != std::string::npos) {
    throw ConfigError("manifest keys need no ':' and no newlines: " + key);
  }
  for (auto& e : entries_) {
    if (e.first == key) {
      e.second = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void RunManifest::set(const std::string& key, double value) {
  set(key, fmt17(value));
}

void RunManifest::set(const std::string& key, long value) {
  set(key, std::to_string(value));
}

bool RunManifest::has(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == key; });
}

const std::string& RunManifest::get(const std::string& key) const {
  for (const auto& e : entries_) {
    if (e.first == key) return e.second;
  }
  throw ConfigError("manifest has no key '" + key + "'");
}

void RunManifest::write(std::ostream& os) const {
  for (const auto& [k, v] : entries_) os << k << ": " << v << '\n';
}

RunManifest RunManifest::read(std::istream& is) {
  RunManifest m;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("malformed manifest line: " + line);
    }
    std::string value = line.substr(colon + 1);
    if (!value.empty() && value.front() == ' ') value.erase(0, 1);
    m.set(line.substr(0, colon), value);
  }
  return m;
}

}  // namespace shallow
