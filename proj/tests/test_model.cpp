#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shallow/error.hpp"
#include "shallow/model.hpp"
#include "shallow/sigmoid.hpp"
#include "support.hpp"

using namespace shallow;
using namespace testing;

TEST_CASE("sigmoid values") {
  CHECK(sigmoid_derivative(0.0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sigmoid_derivative(0.0, 1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(sigmoid_derivative(std::log(3.0), 0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(std::abs(sigmoid_derivative(0.0, 2)) < 1e-15);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(std::isfinite(sigmoid_derivative(-800.0, 3)));
  CHECK_THROWS_AS(sigmoid_derivative(0.0, 4), DomainError);
  CHECK_THROWS_AS(sigmoid_derivative(NAN, 0), DomainError);
}

TEST_CASE("sigmoid derivatives match finite differences") {
  for (double z : {-6.0, -1.3, -0.2, 0.0, 0.7, 2.5, 9.0}) {
    for (int order = 1; order <= 3; ++order) {
      const double h = 1e-5;
      const double fd = (sigmoid_derivative(z + h, order - 1) -
                         sigmoid_derivative(z - h, order - 1)) / (2 * h);
      CHECK(sigmoid_derivative(z, order) == doctest::Approx(fd).epsilon(1e-6));
    }
    const auto pq = sigmoid_pair(z);
    CHECK(pq.p + pq.q == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sigmoid(-z) == doctest::Approx(1.0 - sigmoid(z)).epsilon(1e-15));
  }
}

TEST_CASE("forward examples") {
  const Vector x3 = Vector::Random(3);
  CHECK(forward(FcnWeights::zeros(3, 2), x3) == 0.5);
  Matrix w(2, 1);
  w << 1, 0;
  Vector x(2);
  x << std::log(3.0), 5;
  CHECK(forward(FcnWeights(w), x) == doctest::Approx(0.75).epsilon(1e-15));

  Vector f(1);
  f << 1;
  Vector xc(2);
  xc << std::log(3.0), std::log(3.0);
  CHECK(forward(CnnWeights(f, 2), xc) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(forward(CnnWeights(Vector::Zero(2), 3), Vector::Random(6)) == 0.5);
}

TEST_CASE("forward matches a scalar loop") {
  RngStream rng(3, 0);
  const Matrix w = gaussian_matrix(rng, 3, 2);
  const Vector x = gaussian_vector(rng, 3);
  double s = 0.0;
  for (int k = 0; k < 2; ++k) {
    double z = 0.0;
    for (int i = 0; i < 3; ++i) z += w(i, k) * x[i];
    s += 1.0 / (1.0 + std::exp(-z));
  }
  CHECK(forward(FcnWeights(w), x) == doctest::Approx(s / 2).epsilon(1e-14));
}

TEST_CASE("cnn embedding") {
  Vector f(1);
  f << 3;
  const Matrix w = cnn_to_fcn(CnnWeights(f, 2)).matrix();
  Matrix expect(2, 2);
  expect << 3, 0, 0, 3;
  CHECK(w == expect);

  RngStream rng(5, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const CnnWeights c(gaussian_vector(rng, 4), 3);
    const FcnWeights e = cnn_to_fcn(c);
    const Vector x = gaussian_vector(rng, 12);
    const int y = trial % 2;
    CHECK(e.matrix().norm() == doctest::Approx(std::sqrt(3.0) * c.filter().norm()));
    CHECK(std::abs(forward(c, x) - forward(e, x)) < 1e-12);
    CHECK(std::abs(sample_loss(c, x, y) - sample_loss(e, x, y)) < 1e-12);
    // Gradient through the embedding: sum of the diagonal stride blocks.
    const Matrix gf = grad_fcn(e, x, y);
    Vector agg = Vector::Zero(4);
    for (int k = 0; k < 3; ++k) agg += gf.block(4 * k, k, 4, 1);
    CHECK((grad_cnn(c, x, y) - agg).norm() < 1e-12);
    // Hessian quadratic form along the embedded direction.
    const Vector v = gaussian_vector(rng, 4);
    const Vector ve = flat(cnn_to_fcn(CnnWeights(v, 3)).matrix());
    const double qc = v.dot(hessian_cnn(c, x, y) * v);
    const double qf = ve.dot(hessian_fcn(e, x, y) * ve);
    CHECK(std::abs(qc - qf) < 1e-12 * std::max(1.0, std::abs(qf)));
  }
}

TEST_CASE("cross entropy examples") {
  CHECK(cross_entropy_loss(0.5, 1) == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy_loss(0.5, 0) == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy_loss(0.75, 1) == doctest::Approx(-std::log(0.75)));
  CHECK(std::isfinite(cross_entropy_loss(0.0, 1)));
  CHECK(cross_entropy_loss(1.0, 0) == doctest::Approx(-std::log(kProbClamp)));
  CHECK_THROWS_AS(cross_entropy_loss(0.5, 2), DomainError);
}

TEST_CASE("label symmetry") {
  RngStream rng(7, 0);
  for (int t = 0; t < 10; ++t) {
    const double h = rng.uniform();
    CHECK(cross_entropy_loss(h, 1) ==
          doctest::Approx(cross_entropy_loss(1.0 - h, 0)).epsilon(1e-12));
  }
}

TEST_CASE("gradient at zero weights") {
  RngStream rng(1, 0);
  const Vector x = gaussian_vector(rng, 4);
  const Matrix g = grad_fcn(FcnWeights::zeros(4, 3), x, 1);
  for (int k = 0; k < 3; ++k) {
    CHECK((g.col(k) + (0.5 / 3) * x).norm() < 1e-15);
  }
  const Vector xc = gaussian_vector(rng, 6);
  const Vector gc = grad_cnn(CnnWeights(Vector::Zero(3), 2), xc, 1);
  CHECK((gc + 0.25 * (xc.head(3) + xc.tail(3))).norm() < 1e-15);
}

TEST_CASE("fcn derivatives match finite differences") {
  RngStream rng(11, 0);
  const int d = 10, K = 3;
  double worst_g = 0.0, worst_h = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Matrix w = gaussian_matrix(rng, d, K, 0.5);
    const Vector x = gaussian_vector(rng, d);
    const int y = rng.uniform() < 0.5;
    auto loss = [&](const Vector& p) {
      return sample_loss(FcnWeights(unflat(p, d, K)), x, y);
    };
    auto grad = [&](const Vector& p) {
      return flat(grad_fcn(FcnWeights(unflat(p, d, K)), x, y));
    };
    const Vector p = flat(w);
    worst_g = std::max(worst_g, rel_err(grad(p), fd_gradient(loss, p)));
    worst_h = std::max(worst_h, rel_err(hessian_fcn(FcnWeights(w), x, y),
                                        fd_jacobian(grad, p)));
  }
  CHECK(worst_g <= 1e-5);
  CHECK(worst_h <= 1e-4);
}

TEST_CASE("cnn derivatives match finite differences") {
  RngStream rng(12, 0);
  const int m = 5, K = 3;
  double worst_g = 0.0, worst_h = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Vector w = gaussian_vector(rng, m, 0.5);
    const Vector x = gaussian_vector(rng, m * K);
    const int y = rng.uniform() < 0.5;
    auto loss = [&](const Vector& p) { return sample_loss(CnnWeights(p, K), x, y); };
    auto grad = [&](const Vector& p) { return grad_cnn(CnnWeights(p, K), x, y); };
    worst_g = std::max(worst_g, rel_err(grad(w), fd_gradient(loss, w)));
    worst_h = std::max(worst_h, rel_err(hessian_cnn(CnnWeights(w, K), x, y),
                                        fd_jacobian(grad, w)));
  }
  CHECK(worst_g <= 1e-5);
  CHECK(worst_h <= 1e-4);
}

TEST_CASE("hessians are exactly symmetric") {
  RngStream rng(13, 0);
  const Matrix h = hessian_fcn(FcnWeights(gaussian_matrix(rng, 8, 2)),
                               gaussian_vector(rng, 8), 1);
  CHECK((h - h.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const Matrix hc = hessian_cnn(CnnWeights(gaussian_vector(rng, 4), 3),
                                gaussian_vector(rng, 12), 0);
  CHECK((hc - hc.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("permutation equivariance") {
  RngStream rng(17, 0);
  const Matrix w = gaussian_matrix(rng, 6, 3);
  const Vector x = gaussian_vector(rng, 6);
  Matrix perm = Matrix::Zero(3, 3);
  perm(0, 2) = perm(1, 0) = perm(2, 1) = 1;
  const Matrix gp = grad_fcn(FcnWeights(w * perm), x, 1);
  CHECK((gp - grad_fcn(FcnWeights(w), x, 1) * perm).norm() < 1e-15);

  RowMatrix X(20, 6);
  Vector Y(20);
  for (int i = 0; i < 20; ++i) {
    X.row(i) = gaussian_vector(rng, 6).transpose();
    Y[i] = i % 3 == 0;
  }
  const Dataset data(X, Y, 0);
  CHECK(empirical_loss(FcnWeights(w * perm), data) ==
        doctest::Approx(empirical_loss(FcnWeights(w), data)).epsilon(1e-14));
}

namespace {

Dataset random_dataset(RngStream& rng, int n, int d) {
  RowMatrix X(n, d);
  Vector Y(n);
  for (int i = 0; i < n; ++i) {
    X.row(i) = gaussian_vector(rng, d).transpose();
    Y[i] = rng.uniform() < 0.5;
  }
  return Dataset(X, Y, 0);
}

}  // namespace

TEST_CASE("batch derivatives are sample means") {
  RngStream rng(19, 0);
  const Dataset data = random_dataset(rng, 700, 6);
  const FcnWeights w(gaussian_matrix(rng, 6, 2, 0.7));
  double loss = 0.0;
  Matrix g = Matrix::Zero(6, 2);
  Matrix h = Matrix::Zero(12, 12);
  for (int i = 0; i < data.n(); ++i) {
    loss += sample_loss(w, data.x(i), data.y(i));
    g += grad_fcn(w, data.x(i), data.y(i));
    h += hessian_fcn(w, data.x(i), data.y(i));
  }
  CHECK(empirical_loss(w, data) == doctest::Approx(loss / data.n()).epsilon(1e-13));
  CHECK(rel_err(empirical_gradient(w, data), g / data.n()) < 1e-12);
  CHECK(rel_err(empirical_hessian(w, data), h / data.n()) < 1e-12);

  const CnnWeights c(gaussian_vector(rng, 3, 0.7), 2);
  double lc = 0.0;
  Vector gc = Vector::Zero(3);
  Matrix hc = Matrix::Zero(3, 3);
  for (int i = 0; i < data.n(); ++i) {
    lc += sample_loss(c, data.x(i), data.y(i));
    gc += grad_cnn(c, data.x(i), data.y(i));
    hc += hessian_cnn(c, data.x(i), data.y(i));
  }
  CHECK(empirical_loss(c, data) == doctest::Approx(lc / data.n()).epsilon(1e-13));
  CHECK(rel_err(empirical_gradient(c, data), gc / data.n()) < 1e-12);
  CHECK(rel_err(empirical_hessian(c, data), hc / data.n()) < 1e-12);
}

TEST_CASE("loss is nonnegative and finite at extreme weights") {
  RngStream rng(23, 0);
  const Dataset data = random_dataset(rng, 50, 4);
  const FcnWeights big(gaussian_matrix(rng, 4, 2, 1e3));
  const LossGradient lg = empirical_loss_gradient(big, data);
  CHECK(lg.loss >= 0.0);
  CHECK(std::isfinite(lg.loss));
  CHECK(lg.gradient.allFinite());
  CHECK(empirical_hessian(big, data).allFinite());
}

TEST_CASE("validation errors") {
  CHECK_THROWS_AS(FcnWeights(Matrix::Zero(2, 3)), DimensionError);
  CHECK_THROWS_AS(CnnWeights(Vector::Zero(0), 2), DimensionError);
  CHECK_THROWS_AS(forward(FcnWeights::zeros(3, 1), Vector::Zero(4)), DimensionError);
  CHECK_THROWS_AS(grad_fcn(FcnWeights::zeros(3, 1), Vector::Zero(3), 3), DomainError);
  CHECK_THROWS_AS(hessian_fcn(FcnWeights::zeros(300, 2), Vector::Zero(300), 1),
                  SizeError);
  CHECK_THROWS_AS(Dataset(RowMatrix::Zero(2, 2), Vector::Constant(2, 0.5), 0),
                  DomainError);
  CHECK_THROWS_AS(parse_model_kind("rnn"), ConfigError);
}
