#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "shallow/model.hpp"
#include "shallow/rng.hpp"

namespace shallow {

struct GDConfig {
  /// Step size; unset means default_step_size for the model being fit.
  std::optional<double> eta;
  long max_iters = 3500;
  double grad_tol = 1e-9;
  /// Record every k-th iterate (the final iterate is always recorded).
  long trace_stride = 1;
  /// Keep recorded iterates so distance-to-final can be filled in.
  bool track_distance_to_final = true;
};

/// Default step: 4K for both models. The curvature of the empirical risk
/// near small-norm weights is at most about 1/(4K) in every direction, so
/// this is the 1/L step for that bound.
inline constexpr double kStepPerNeuron = 4.0;
double default_step_size(ModelKind kind, int k);

struct TraceRecord {
  long iter;
  double loss;
  double grad_norm;
  double aligned_err;    // NaN when no truth was supplied
  double dist_to_final;  // NaN when not tracked
};

enum class StopReason { kGradientTolerance, kMaxIterations };

struct GDTrace {
  std::vector<TraceRecord> records;
  NetworkWeights final_weights = FcnWeights::zeros(1, 1);
  bool converged = false;
  StopReason reason = StopReason::kMaxIterations;
  long iterations = 0;
  /// Steps where f_n went up. Monitored, never fatal.
  long ascent_steps = 0;

  const char* reason_string() const;
};

/// Constant-step gradient descent W_{t+1} = W_t - eta grad f_n(W_t) on a fixed
/// dataset until ||grad||_F <= grad_tol or max_iters steps have been taken.
/// Throws DivergenceError when the loss or gradient stops being finite.
GDTrace gd_run(const Dataset& data, const NetworkWeights& w0,
               const GDConfig& cfg,
               const std::optional<NetworkWeights>& truth = std::nullopt);

struct AlignedError {
  double error;
  /// perm[j] is the column of W matched with column j of W*.
  std::vector<int> perm;
};

/// min over column permutations of ||W Pi - W*||_F. Exhaustive for K <= 8,
/// Hungarian assignment on squared column distances above that.
AlignedError aligned_error(const FcnWeights& w, const FcnWeights& truth);
/// Plain ||w - w*||_2 for CNN.
double aligned_error(const CnnWeights& w, const CnnWeights& truth);
double aligned_distance(const NetworkWeights& w, const NetworkWeights& truth);

struct LinearRateFit {
  double ratio;
  double r_squared;
  int points;
};

/// Least-squares slope of log(dist_to_final) against iteration over the
/// tail window: the last half of the pre-convergence records, minus the
/// final five. Needs at least ten pre-convergence records.
LinearRateFit fit_linear_rate(const GDTrace& trace);

/// W* + radius * U / ||U||_F with U standard Gaussian.
NetworkWeights near_truth_init(const NetworkWeights& truth, double radius,
                               RngStream& rng);

/// Uniform draw from the Frobenius ball of the given radius around W*.
NetworkWeights ball_init(const NetworkWeights& truth, double radius,
                         RngStream& rng);

/// Gaussian weights rescaled to the given Frobenius norm.
NetworkWeights random_init(ModelKind kind, int d, int k, double norm,
                           RngStream& rng);

/// 0.1 ||W*||_F for FCN, 0.9 ||w*||_2 for CNN.
double default_init_radius(const NetworkWeights& truth);

void write_trace_csv(std::ostream& os, const GDTrace& trace);

}  // namespace shallow
