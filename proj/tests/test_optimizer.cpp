#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "shallow/data_gen.hpp"
#include "shallow/error.hpp"
#include "shallow/optimizer.hpp"
#include "support.hpp"

using namespace shallow;

namespace {

double brute_aligned(const Matrix& w, const Matrix& truth) {
  std::vector<int> perm(w.cols());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (int j = 0; j < w.cols(); ++j) s += (w.col(perm[j]) - truth.col(j)).squaredNorm();
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best);
}

struct Problem {
  NetworkWeights truth;
  Dataset data;
};

Problem small_problem(ModelKind kind, int d, int k, int n, std::uint64_t seed) {
  NetworkWeights t = make_ground_truth({kind, d, k, 0.9, seed});
  Dataset data = sample_dataset(t, n, RngStream(seed, 11));
  return {t, std::move(data)};
}

}  // namespace

TEST_CASE("default step size") {
  CHECK(default_step_size(ModelKind::kFcn, 3) == 12.0);
  CHECK(default_step_size(ModelKind::kCnn, 1) == 4.0);
  CHECK_THROWS_AS(default_step_size(ModelKind::kFcn, 0), ConfigError);
}

TEST_CASE("a loose tolerance stops before the first step") {
  const auto p = small_problem(ModelKind::kFcn, 4, 2, 200, 1);
  GDConfig cfg;
  cfg.grad_tol = 1e9;
  const auto tr = gd_run(p.data, p.truth, cfg);
  CHECK(tr.iterations == 0);
  CHECK(tr.converged);
  CHECK(tr.reason == StopReason::kGradientTolerance);
  CHECK(vectorize(tr.final_weights) == vectorize(p.truth));
  CHECK(tr.records.size() == 1);
}

TEST_CASE("gradient descent is deterministic and descends") {
  for (ModelKind kind : {ModelKind::kFcn, ModelKind::kCnn}) {
    const auto p = small_problem(kind, 6, 2, 2000, 2);
    RngStream rng(3, 3);
    const NetworkWeights w0 = near_truth_init(p.truth, 0.5, rng);
    GDConfig cfg;
    cfg.max_iters = 50;
    cfg.grad_tol = 0.0;
    const auto a = gd_run(p.data, w0, cfg, p.truth);
    const auto b = gd_run(p.data, w0, cfg, p.truth);
    CHECK(vectorize(a.final_weights) == vectorize(b.final_weights));
    CHECK(a.records.size() == 51);
    CHECK(a.ascent_steps == 0);
    for (size_t i = 1; i < a.records.size(); ++i) {
      CHECK(a.records[i].loss <= a.records[i - 1].loss);
    }
    CHECK(std::isfinite(a.records[0].aligned_err));
    CHECK(a.records.back().dist_to_final == 0.0);
  }
}

TEST_CASE("a converged run is a near fixed point") {
  const auto p = small_problem(ModelKind::kFcn, 3, 1, 3000, 4);
  GDConfig cfg;
  cfg.grad_tol = 1e-8;
  cfg.max_iters = 20000;
  const auto tr = gd_run(p.data, p.truth, cfg);
  REQUIRE(tr.converged);
  const auto& w = std::get<FcnWeights>(tr.final_weights);
  const Matrix g = empirical_gradient(w, p.data);
  const double eta = default_step_size(ModelKind::kFcn, 1);
  CHECK((eta * g).norm() <= eta * cfg.grad_tol);
}

TEST_CASE("trace stride records the final iterate") {
  const auto p = small_problem(ModelKind::kFcn, 4, 2, 300, 5);
  GDConfig cfg;
  cfg.max_iters = 23;
  cfg.trace_stride = 10;
  const auto tr = gd_run(p.data, p.truth, cfg);
  REQUIRE(tr.records.size() == 4);
  CHECK(tr.records[2].iter == 20);
  CHECK(tr.records[3].iter == 23);
  std::ostringstream os;
  write_trace_csv(os, tr);
  CHECK(!os.str().empty());
}

TEST_CASE("invalid configurations and mismatched shapes") {
  const auto p = small_problem(ModelKind::kFcn, 4, 2, 100, 6);
  GDConfig cfg;
  cfg.eta = -1.0;
  CHECK_THROWS_AS(gd_run(p.data, p.truth, cfg), ConfigError);
  cfg = GDConfig{};
  cfg.max_iters = 0;
  CHECK_THROWS_AS(gd_run(p.data, p.truth, cfg), ConfigError);
  cfg = GDConfig{};
  CHECK_THROWS_AS(gd_run(p.data, FcnWeights::zeros(5, 2), cfg), DimensionError);
  cfg.eta = std::numeric_limits<double>::infinity();
  cfg.max_iters = 5;
  RngStream rng(1, 1);
  CHECK_THROWS_AS(gd_run(p.data, near_truth_init(p.truth, 1.0, rng), cfg),
                  DivergenceError);
}

TEST_CASE("linear rate fit on a synthetic trace") {
  GDTrace tr;
  for (int t = 0; t <= 40; ++t) tr.records.push_back({t, 0, 0, 0, std::pow(0.9, t)});
  const auto fit = fit_linear_rate(tr);
  CHECK(fit.ratio == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.points == 15);
  GDTrace small;
  for (int t = 0; t < 10; ++t) small.records.push_back({t, 0, 0, 0, 1.0});
  CHECK_THROWS_AS(fit_linear_rate(small), NumericalError);
}

TEST_CASE("constant small step gives geometric convergence") {
  const auto p = small_problem(ModelKind::kFcn, 3, 1, 5000, 7);
  RngStream rng(8, 8);
  GDConfig cfg;
  cfg.eta = 0.2;
  cfg.grad_tol = 0.0;
  cfg.max_iters = 600;
  const auto tr = gd_run(p.data, near_truth_init(p.truth, 0.1, rng), cfg);
  const auto fit = fit_linear_rate(tr);
  CHECK(fit.ratio < 1.0);
  CHECK(fit.r_squared > 0.99);
}

TEST_CASE("aligned error matches brute force") {
  RngStream rng(9, 9);
  for (int k : {1, 2, 3, 5, 9}) {
    for (int t = 0; t < (k == 9 ? 3 : 20); ++t) {
      const Matrix a = testing::gaussian_matrix(rng, std::max(4, k), k);
      const Matrix b = testing::gaussian_matrix(rng, std::max(4, k), k);
      const auto e = aligned_error(FcnWeights(a), FcnWeights(b));
      CHECK(e.error == doctest::Approx(brute_aligned(a, b)).epsilon(1e-12));
      double s = 0;
      for (int j = 0; j < k; ++j) s += (a.col(e.perm[j]) - b.col(j)).squaredNorm();
      CHECK(std::sqrt(s) == doctest::Approx(e.error).epsilon(1e-12));
    }
  }
  const Matrix a = testing::gaussian_matrix(rng, 5, 4);
  Matrix shuffled(5, 4);
  shuffled << a.col(2), a.col(0), a.col(3), a.col(1);
  CHECK(aligned_error(FcnWeights(shuffled), FcnWeights(a)).error == 0.0);
  const Vector f = testing::gaussian_vector(rng, 3), g = testing::gaussian_vector(rng, 3);
  CHECK(aligned_error(CnnWeights(f, 2), CnnWeights(g, 2)) == doctest::Approx((f - g).norm()));
  CHECK_THROWS_AS(aligned_error(FcnWeights(a), FcnWeights(Matrix(a.leftCols(3)))),
                  DimensionError);
}

TEST_CASE("initializers") {
  const NetworkWeights t = make_ground_truth({ModelKind::kFcn, 6, 3, 0.9, 1});
  RngStream rng(2, 2);
  const Vector vt = vectorize(t);
  CHECK((vectorize(near_truth_init(t, 0.3, rng)) - vt).norm() ==
        doctest::Approx(0.3).epsilon(1e-12));
  double max_r = 0;
  for (int i = 0; i < 100; ++i) {
    const double r = (vectorize(ball_init(t, 0.3, rng)) - vt).norm();
    CHECK(r <= 0.3 + 1e-12);
    max_r = std::max(max_r, r);
  }
  CHECK(max_r > 0.25);
  CHECK(vectorize(random_init(ModelKind::kFcn, 6, 3, 2.0, rng)).norm() ==
        doctest::Approx(2.0));
  const auto c = random_init(ModelKind::kCnn, 6, 3, 0.5, rng);
  CHECK(std::get<CnnWeights>(c).m() == 2);
  CHECK(vectorize(c).norm() == doctest::Approx(0.5));
  CHECK_THROWS_AS(random_init(ModelKind::kCnn, 7, 3, 1.0, rng), ConfigError);
  CHECK(default_init_radius(t) == doctest::Approx(0.1 * vt.norm()));
}
