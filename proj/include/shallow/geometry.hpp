#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "shallow/model.hpp"
#include "shallow/quadrature.hpp"
#include "shallow/rng.hpp"

namespace shallow {

/// How the FCN curvature quantity scales its latent Gaussian.
/// kStandard: z ~ N(0,1) and the activation sees sigma * z (default).
/// kLiteral:  z ~ N(0, sigma^2) and the activation still sees sigma * z.
enum class MomentConvention { kStandard, kLiteral };

/// Gaussian moments of the sigmoid at scale sigma:
///   gamma[j] = E[phi(sigma z) z^j],     j = 0..4
///   alpha[q] = E[phi'(sigma z) z^q],    q = 0..2
///   beta[q]  = E[phi'(sigma z)^2 z^q],  q = 0..2 (beta[1] is unused)
struct ActivationMoments {
  double sigma = 0.0;
  double gamma[5] = {};
  double alpha[3] = {};
  double beta[3] = {};
  int nodes = 0;

  /// m_{j,i} coefficients for a neuron of norm sigma.
  double m1() const { return gamma[1]; }
  double m2() const { return gamma[2] - gamma[0]; }
  double m3() const { return gamma[3] - 3.0 * gamma[1]; }
  double m4() const { return gamma[4] + 3.0 * gamma[0] - 6.0 * gamma[2]; }
};

ActivationMoments activation_moments(
    double sigma, int nodes = kDefaultQuadratureNodes,
    MomentConvention convention = MomentConvention::kStandard);

/// gamma_1(sigma) = E[phi(sigma z) z], strictly increasing in sigma > 0.
double gamma1(double sigma, int nodes = kDefaultQuadratureNodes);

double rho_fcn(double sigma,
               MomentConvention convention = MomentConvention::kStandard,
               int nodes = kDefaultQuadratureNodes);

/// min{E[(phi'(z) z)^2], E[phi'(z)^2]} with z ~ N(0, sigma^2).
double rho_cnn(double sigma, int nodes = kDefaultQuadratureNodes);

struct RhoPoint {
  double sigma;
  double rho_fcn;
  double rho_cnn;
};

/// Uniform grid from sigma_min to sigma_max inclusive.
std::vector<RhoPoint> rho_curve(
    double sigma_min, double sigma_max, int steps,
    MomentConvention convention = MomentConvention::kStandard);
void write_rho_csv(std::ostream& os, const std::vector<RhoPoint>& curve);

struct Conditioning {
  Vector singular_values;  // descending
  double kappa = 1.0;
  double lambda = 1.0;
};

/// Singular values of W*, kappa = s_1 / s_K, lambda = prod_i (s_i / s_K).
/// Throws DegenerateInputError when W* is rank deficient.
Conditioning conditioning(const FcnWeights& truth);

/// Local-ball radius from the strong-convexity result with its unspecified
/// constant set to `constant`:
///   FCN: constant / sqrt(K) * rho_fcn(s_K) / (kappa^2 lambda)
///   CNN: constant / K^2 * rho_cnn(||w*||)
struct Radius {
  double value;
  std::string formula;
};
Radius theoretical_radius(const NetworkWeights& truth, double constant = 1.0);

struct ProbePoint {
  double dist;
  double lambda_min;
  double lambda_max;
};

struct GeometryReport {
  ModelKind kind = ModelKind::kFcn;
  Conditioning cond;  // FCN only; unit values for CNN
  double rho = 0.0;   // rho_fcn(s_K) or rho_cnn(||w*||)
  Radius radius{0.0, ""};  // theory radius, unit constants
  double probe_radius = 0.0;
  std::vector<ProbePoint> probes;

  double min_lambda_min() const;
  double max_lambda_max() const;
};

/// Extreme eigenvalues of the empirical Hessian at the truth and at `points`
/// draws uniform in the Frobenius ball of radius r around it.
GeometryReport hessian_spectrum_probe(const Dataset& data,
                                      const NetworkWeights& truth,
                                      double radius, int points,
                                      RngStream rng);

void write_probe_csv(std::ostream& os, const GeometryReport& report);

}  // namespace shallow
