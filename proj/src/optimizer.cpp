#include "shallow/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <type_traits>

#include "shallow/csv.hpp"
#include "shallow/error.hpp"

namespace shallow {

double default_step_size(ModelKind, int k) {
  if (k < 1) throw ConfigError("default_step_size: need K >= 1");
  return kStepPerNeuron * k;
}

const char* GDTrace::reason_string() const {
  return reason == StopReason::kGradientTolerance ? "gradient_tolerance"
                                                  : "max_iterations";
}

namespace {

Matrix params(const FcnWeights& w) { return w.matrix(); }
Matrix params(const CnnWeights& w) { return w.filter(); }

FcnWeights rebuild(const FcnWeights&, Matrix p) {
  return FcnWeights(std::move(p));
}
CnnWeights rebuild(const CnnWeights& like, Matrix p) {
  return CnnWeights(p.col(0), like.k());
}

double align(const FcnWeights& w, const FcnWeights* truth) {
  return truth ? aligned_error(w, *truth).error
               : std::numeric_limits<double>::quiet_NaN();
}
double align(const CnnWeights& w, const CnnWeights* truth) {
  return truth ? aligned_error(w, *truth)
               : std::numeric_limits<double>::quiet_NaN();
}

template <class W>
GDTrace run_gd(const Dataset& data, const W& w0, const GDConfig& cfg,
               const W* truth) {
  const double eta =
      cfg.eta ? *cfg.eta
              : default_step_size(std::is_same_v<W, FcnWeights> ? ModelKind::kFcn
                                                               : ModelKind::kCnn,
                                  w0.k());
  if (!(eta > 0.0) || cfg.max_iters < 1 || !(cfg.grad_tol >= 0.0) ||
      cfg.trace_stride < 1) {
    throw ConfigError("GDConfig: need eta > 0, max_iters >= 1, tol >= 0, "
                      "stride >= 1");
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  GDTrace trace;
  std::vector<Matrix> kept;
  Matrix p = params(w0);
  double prev_loss = std::numeric_limits<double>::infinity();
  for (long t = 0;; ++t) {
    if (!p.allFinite()) {
      throw DivergenceError(
          "gradient descent diverged at iteration " + std::to_string(t), t);
    }
    const W w = rebuild(w0, p);
    LossGradient lg = empirical_loss_gradient(w, data);
    const double gn = lg.gradient.norm();
    if (!std::isfinite(lg.loss) || !std::isfinite(gn)) {
      throw DivergenceError(
          "gradient descent diverged at iteration " + std::to_string(t), t);
    }
    if (lg.loss > prev_loss) ++trace.ascent_steps;
    prev_loss = lg.loss;

    const bool done_tol = gn <= cfg.grad_tol;
    const bool done_iter = t >= cfg.max_iters;
    const bool done = done_tol || done_iter;
    if (done || t % cfg.trace_stride == 0) {
      trace.records.push_back({t, lg.loss, gn, align(w, truth), nan});
      if (cfg.track_distance_to_final) kept.push_back(p);
    }
    if (done) {
      trace.converged = done_tol;
      trace.reason = done_tol ? StopReason::kGradientTolerance
                              : StopReason::kMaxIterations;
      trace.iterations = t;
      trace.final_weights = w;
      break;
    }
    p -= eta * lg.gradient;
  }
  if (cfg.track_distance_to_final) {
    for (std::size_t i = 0; i < kept.size(); ++i) {
      trace.records[i].dist_to_final = (kept[i] - p).norm();
    }
  }
  return trace;
}

}  // namespace

GDTrace gd_run(const Dataset& data, const NetworkWeights& w0,
               const GDConfig& cfg, const std::optional<NetworkWeights>& truth) {
  if (truth && kind_of(*truth) != kind_of(w0)) {
    throw DimensionError("gd_run: truth and initial point differ in model");
  }
  if (input_dim(w0) != data.d()) {
    throw DimensionError("gd_run: initial point does not match data dimension");
  }
  if (const auto* f = std::get_if<FcnWeights>(&w0)) {
    return run_gd(data, *f, cfg,
                  truth ? &std::get<FcnWeights>(*truth) : nullptr);
  }
  return run_gd(data, std::get<CnnWeights>(w0), cfg,
                truth ? &std::get<CnnWeights>(*truth) : nullptr);
}

namespace {

// Minimum-cost perfect assignment (Kuhn-Munkres with potentials).
// cost is K x K; returns assign[row] = col.
std::vector<int> hungarian(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(n);
  for (int j = 1; j <= n; ++j) assign[p[j] - 1] = j - 1;
  return assign;
}

}  // namespace

AlignedError aligned_error(const FcnWeights& w, const FcnWeights& truth) {
  if (w.d() != truth.d() || w.k() != truth.k()) {
    throw DimensionError("aligned_error: shape mismatch");
  }
  const int K = w.k();
  // cost(j, i) = ||w_i - w*_j||^2
  Matrix cost(K, K);
  for (int j = 0; j < K; ++j) {
    for (int i = 0; i < K; ++i) {
      cost(j, i) = (w.matrix().col(i) - truth.matrix().col(j)).squaredNorm();
    }
  }
  std::vector<int> best(K);
  if (K <= 8) {
    std::vector<int> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      double c = 0.0;
      for (int j = 0; j < K; ++j) c += cost(j, perm[j]);
      if (c < best_cost) {
        best_cost = c;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    best = hungarian(cost);
  }
  Matrix permuted(w.d(), K);
  for (int j = 0; j < K; ++j) permuted.col(j) = w.matrix().col(best[j]);
  return {(permuted - truth.matrix()).norm(), best};
}

double aligned_error(const CnnWeights& w, const CnnWeights& truth) {
  if (w.m() != truth.m()) throw DimensionError("aligned_error: shape mismatch");
  return (w.filter() - truth.filter()).norm();
}

double aligned_distance(const NetworkWeights& w, const NetworkWeights& truth) {
  if (const auto* f = std::get_if<FcnWeights>(&w)) {
    return aligned_error(*f, std::get<FcnWeights>(truth)).error;
  }
  return aligned_error(std::get<CnnWeights>(w), std::get<CnnWeights>(truth));
}

LinearRateFit fit_linear_rate(const GDTrace& trace) {
  if (trace.records.size() < 2) {
    throw NumericalError("fit_linear_rate: insufficient trace");
  }
  // Everything before the final (converged) record.
  const std::size_t pre = trace.records.size() - 1;
  if (pre < 10) {
    throw NumericalError("fit_linear_rate: insufficient trace (" +
                         std::to_string(pre) + " pre-convergence records)");
  }
  const std::size_t begin = pre / 2;
  const std::size_t end = pre - 5;
  std::vector<double> ts, ls;
  for (std::size_t i = begin; i < end; ++i) {
    const double dist = trace.records[i].dist_to_final;
    if (std::isfinite(dist) && dist > 0.0) {
      ts.push_back(static_cast<double>(trace.records[i].iter));
      ls.push_back(std::log(dist));
    }
  }
  if (ts.size() < 2) {
    throw NumericalError("fit_linear_rate: insufficient trace");
  }
  const double n = static_cast<double>(ts.size());
  const double mt = std::accumulate(ts.begin(), ts.end(), 0.0) / n;
  const double ml = std::accumulate(ls.begin(), ls.end(), 0.0) / n;
  double stt = 0.0, stl = 0.0, sll = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    stt += (ts[i] - mt) * (ts[i] - mt);
    stl += (ts[i] - mt) * (ls[i] - ml);
    sll += (ls[i] - ml) * (ls[i] - ml);
  }
  const double slope = stl / stt;
  const double r2 = sll > 0.0 ? (stl * stl) / (stt * sll) : 1.0;
  return {std::exp(slope), r2, static_cast<int>(ts.size())};
}

NetworkWeights near_truth_init(const NetworkWeights& truth, double radius,
                               RngStream& rng) {
  Vector u = vectorize(truth);
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.normal();
  u *= radius / u.norm();
  if (const auto* f = std::get_if<FcnWeights>(&truth)) {
    return FcnWeights(f->matrix() +
                      Eigen::Map<const Matrix>(u.data(), f->d(), f->k()));
  }
  const auto& c = std::get<CnnWeights>(truth);
  return CnnWeights(c.filter() + u, c.k());
}

NetworkWeights ball_init(const NetworkWeights& truth, double radius,
                         RngStream& rng) {
  const auto dim = static_cast<double>(vectorize(truth).size());
  return near_truth_init(truth, radius * std::pow(rng.uniform(), 1.0 / dim),
                         rng);
}

NetworkWeights random_init(ModelKind kind, int d, int k, double norm,
                           RngStream& rng) {
  if (kind == ModelKind::kFcn) {
    Matrix w(d, k);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    return FcnWeights(w * (norm / w.norm()));
  }
  if (k < 1 || d % k != 0) throw ConfigError("random_init: K must divide d");
  Vector f(d / k);
  for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = rng.normal();
  return CnnWeights(f * (norm / f.norm()), k);
}

double default_init_radius(const NetworkWeights& truth) {
  if (const auto* f = std::get_if<FcnWeights>(&truth)) {
    return 0.1 * f->matrix().norm();
  }
  return 0.9 * std::get<CnnWeights>(truth).filter().norm();
}

void write_trace_csv(std::ostream& os, const GDTrace& trace) {
  os << "iter,loss,grad_norm,aligned_err,dist_to_final\n";
  for (const auto& r : trace.records) {
    os << r.iter << ',' << fmt17(r.loss) << ',' << fmt17(r.grad_norm) << ','
       << fmt17(r.aligned_err) << ',' << fmt17(r.dist_to_final) << '\n';
  }
}

}  // namespace shallow
