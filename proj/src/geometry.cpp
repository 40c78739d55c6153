#include "shallow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "shallow/csv.hpp"
#include "shallow/error.hpp"
#include "shallow/sigmoid.hpp"

namespace shallow {

namespace {

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw DomainError("moment scale sigma must be positive and finite");
  }
}

}  // namespace

ActivationMoments activation_moments(double sigma, int nodes,
                                     MomentConvention convention) {
  check_sigma(sigma);
  const GaussHermiteRule& rule = gauss_hermite(nodes);
  ActivationMoments m;
  m.sigma = sigma;
  m.nodes = nodes;
  for (int j = 0; j < 5; ++j) {
    m.gamma[j] = rule.expect(
        [&](double z) { return sigmoid(sigma * z) * std::pow(z, j); });
  }
  // Under the literal convention the latent variable is sigma * u.
  const double lat = convention == MomentConvention::kStandard ? 1.0 : sigma;
  for (int q = 0; q < 3; ++q) {
    m.alpha[q] = rule.expect([&](double u) {
      const double z = lat * u;
      return sigmoid_derivative(sigma * z, 1) * std::pow(z, q);
    });
    m.beta[q] = rule.expect([&](double u) {
      const double z = lat * u;
      const double d1 = sigmoid_derivative(sigma * z, 1);
      return d1 * d1 * std::pow(z, q);
    });
  }
  return m;
}

double gamma1(double sigma, int nodes) {
  check_sigma(sigma);
  return gauss_hermite(nodes).expect(
      [&](double z) { return sigmoid(sigma * z) * z; });
}

double rho_fcn(double sigma, MomentConvention convention, int nodes) {
  const ActivationMoments m = activation_moments(sigma, nodes, convention);
  return std::min(m.beta[0] - m.alpha[0] * m.alpha[0],
                  m.beta[2] - m.alpha[2] * m.alpha[2]) -
         m.alpha[1] * m.alpha[1];
}

double rho_cnn(double sigma, int nodes) {
  check_sigma(sigma);
  const GaussHermiteRule& rule = gauss_hermite(nodes);
  const double a = rule.expect([&](double u) {
    const double z = sigma * u;
    const double v = sigmoid_derivative(z, 1) * z;
    return v * v;
  });
  const double b = rule.expect([&](double u) {
    const double v = sigmoid_derivative(sigma * u, 1);
    return v * v;
  });
  return std::min(a, b);
}

std::vector<RhoPoint> rho_curve(double sigma_min, double sigma_max, int steps,
                                MomentConvention convention) {
  if (!(sigma_min > 0.0) || !(sigma_max > sigma_min) || steps < 2) {
    throw ConfigError("rho_curve: need 0 < sigma_min < sigma_max, steps >= 2");
  }
  std::vector<RhoPoint> out;
  out.reserve(steps);
  for (int i = 0; i < steps; ++i) {
    const double s =
        i == steps - 1
            ? sigma_max
            : sigma_min + (sigma_max - sigma_min) * i / (steps - 1);
    out.push_back({s, rho_fcn(s, convention), rho_cnn(s)});
  }
  return out;
}

void write_rho_csv(std::ostream& os, const std::vector<RhoPoint>& curve) {
  os << "sigma,rho_fcn,rho_cnn\n";
  for (const auto& p : curve) {
    os << fmt17(p.sigma) << ',' << fmt17(p.rho_fcn) << ',' << fmt17(p.rho_cnn)
       << '\n';
  }
}

Conditioning conditioning(const FcnWeights& truth) {
  Eigen::JacobiSVD<Matrix> svd(truth.matrix());
  Conditioning c;
  c.singular_values = svd.singularValues();
  const double s1 = c.singular_values[0];
  const double sk = c.singular_values[c.singular_values.size() - 1];
  if (!(s1 > 0.0) || sk <= 1e-12 * s1) {
    throw DegenerateInputError("conditioning: W* is rank deficient");
  }
  c.kappa = s1 / sk;
  c.lambda = 1.0;
  for (Eigen::Index i = 0; i < c.singular_values.size(); ++i) {
    c.lambda *= c.singular_values[i] / sk;
  }
  return c;
}

Radius theoretical_radius(const NetworkWeights& truth, double constant) {
  if (const auto* f = std::get_if<FcnWeights>(&truth)) {
    const Conditioning c = conditioning(*f);
    const double sk = c.singular_values[c.singular_values.size() - 1];
    const double value = constant / std::sqrt(static_cast<double>(f->k())) *
                         rho_fcn(sk) / (c.kappa * c.kappa * c.lambda);
    return {value, "c2/sqrt(K) * rho_fcn(sigma_K) / (kappa^2 * lambda), c2=" +
                       fmt17(constant)};
  }
  const auto& cnn = std::get<CnnWeights>(truth);
  const double kk = static_cast<double>(cnn.k()) * cnn.k();
  return {constant / kk * rho_cnn(cnn.filter().norm()),
          "c4/K^2 * rho_cnn(||w*||), c4=" + fmt17(constant)};
}

double GeometryReport::min_lambda_min() const {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& p : probes) v = std::min(v, p.lambda_min);
  return v;
}

double GeometryReport::max_lambda_max() const {
  double v = -std::numeric_limits<double>::infinity();
  for (const auto& p : probes) v = std::max(v, p.lambda_max);
  return v;
}

namespace {

NetworkWeights offset(const NetworkWeights& truth, const Vector& delta) {
  if (const auto* f = std::get_if<FcnWeights>(&truth)) {
    Matrix w = f->matrix() +
               Eigen::Map<const Matrix>(delta.data(), f->d(), f->k());
    return FcnWeights(std::move(w));
  }
  const auto& c = std::get<CnnWeights>(truth);
  return CnnWeights(c.filter() + delta, c.k());
}

ProbePoint probe_at(const NetworkWeights& w, const Dataset& data,
                    double dist) {
  const Matrix h = empirical_hessian(w, data);
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  return {dist, ev[0], ev[ev.size() - 1]};
}

}  // namespace

GeometryReport hessian_spectrum_probe(const Dataset& data,
                                      const NetworkWeights& truth,
                                      double radius, int points,
                                      RngStream rng) {
  if (points < 1) throw ConfigError("hessian probe: need at least one point");
  if (!(radius >= 0.0)) throw ConfigError("hessian probe: negative radius");
  GeometryReport rep;
  rep.kind = kind_of(truth);
  if (const auto* f = std::get_if<FcnWeights>(&truth)) {
    rep.cond = conditioning(*f);
    rep.rho = rho_fcn(rep.cond.singular_values[f->k() - 1]);
  } else {
    rep.cond.singular_values = Vector::Ones(1);
    rep.rho = rho_cnn(std::get<CnnWeights>(truth).filter().norm());
  }
  rep.radius = theoretical_radius(truth);
  rep.probe_radius = radius;

  rep.probes.push_back(probe_at(truth, data, 0.0));
  if (radius == 0.0) return rep;

  const long dim = vectorize(truth).size();
  for (int p = 0; p < points; ++p) {
    Vector dir(dim);
    for (long i = 0; i < dim; ++i) dir[i] = rng.normal();
    // Uniform in volume: radius r * u^(1/dim).
    const double rr = radius * std::pow(rng.uniform(), 1.0 / dim);
    dir *= rr / dir.norm();
    rep.probes.push_back(probe_at(offset(truth, dir), data, rr));
  }
  return rep;
}

void write_probe_csv(std::ostream& os, const GeometryReport& report) {
  os << "dist,lambda_min,lambda_max\n";
  for (const auto& p : report.probes) {
    os << fmt17(p.dist) << ',' << fmt17(p.lambda_min) << ','
       << fmt17(p.lambda_max) << '\n';
  }
}

}  // namespace shallow
