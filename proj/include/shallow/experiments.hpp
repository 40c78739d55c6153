#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "shallow/model.hpp"
#include "shallow/optimizer.hpp"

namespace shallow {

enum class InitMode { kTensor, kNearTruth, kRandom };

const char* to_string(InitMode mode);
InitMode parse_init_mode(const std::string& s);

struct ExperimentConfig {
  ModelKind model = ModelKind::kFcn;
  std::vector<int> d_list{15};
  int k = 3;
  std::vector<int> n_grid{1024, 2048, 4096, 8192, 16384, 32768, 65536};
  int trials = 50;
  int inits = 20;
  /// Unset means 1e-4 for FCN and 1e-15 for CNN.
  std::optional<double> sd_threshold;
  GDConfig gd;
  InitMode init = InitMode::kNearTruth;
  /// Unset means default_init_radius of the ground truth.
  std::optional<double> radius;
  double weight_scale = 0.9;
  std::uint64_t seed = 0;

  double threshold() const;
  /// Throws ConfigError on counts < 1, a non-positive threshold or a grid
  /// that is not strictly increasing.
  void validate() const;
};

/// Root-mean-square deviation of the vectors about their mean.
double sd_metric(const std::vector<Vector>& outputs);

struct SuccessRow {
  ModelKind model;
  int d, k, n;
  double n_over_dlog2d;
  int trials;
  double success_rate;
};

/// Per (d, n) cell: `trials` datasets, each from a fresh ground truth; GD
/// from `inits` draws in the ball around the truth; a trial succeeds when
/// the spread of the GD outputs is at most the SD threshold.
std::vector<SuccessRow> success_rate_experiment(const ExperimentConfig& cfg);
void write_success_csv(std::ostream& os, const std::vector<SuccessRow>& rows);

struct ErrorRow {
  ModelKind model;
  int d, k, n;
  double mean_rel_sq_err;
  double sqrt_dlogn_over_n;
  double mean_aligned_err;
  double median_aligned_err;
};

/// Per (d, n) cell: `inits` Monte-Carlo runs, each on a fresh dataset from
/// the same ground truth (one per d), GD from a near-truth start.
std::vector<ErrorRow> error_scaling_experiment(const ExperimentConfig& cfg);
void write_error_csv(std::ostream& os, const std::vector<ErrorRow>& rows);

/// Ordered key: value lines.
class RunManifest {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, long value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

  void write(std::ostream& os) const;
  static RunManifest read(std::istream& is);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

inline constexpr const char* kCodeVersion = "shallow-recover 1.0.0";

}  // namespace shallow
