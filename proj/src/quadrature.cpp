#include "shallow/quadrature.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "shallow/error.hpp"

namespace shallow {

namespace {

// Orthonormal Hermite polynomial values p_n(t) and p_{n-1}(t) for the weight
// exp(-t^2).
std::pair<double, double> hermite_pair(int n, double t) {
  double p_prev = 0.0;
  double p = 1.0 / std::pow(std::numbers::pi, 0.25);
  for (int j = 0; j < n; ++j) {
    const double next = t * std::sqrt(2.0 / (j + 1)) * p -
                        std::sqrt(static_cast<double>(j) / (j + 1)) * p_prev;
    p_prev = p;
    p = next;
  }
  return {p, p_prev};
}

GaussHermiteRule build_rule(int n) {
  if (n < 1) throw DomainError("gauss_hermite: need at least one node");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(k / 2.0);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi,
                                                    Eigen::EigenvaluesOnly);
  const Eigen::VectorXd guess = es.eigenvalues();  // ascending

  // Polish the non-negative half and mirror it.
  const int half = n / 2;
  std::vector<double> pos_nodes, pos_weights;
  for (int i = n - 1; i >= n - half; --i) {
    double t = guess[i];
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      const auto [p, p1] = hermite_pair(n, t);
      pp = std::sqrt(2.0 * n) * p1;
      const double step = p / pp;
      t -= step;
      if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(t))) break;
    }
    pp = std::sqrt(2.0 * n) * hermite_pair(n, t).second;
    pos_nodes.push_back(t);
    pos_weights.push_back(2.0 / (pp * pp));
  }

  GaussHermiteRule rule;
  const double scale = std::numbers::sqrt2;
  const double wscale = 1.0 / std::sqrt(std::numbers::pi);
  for (int i = 0; i < half; ++i) {
    rule.nodes.push_back(-scale * pos_nodes[i]);
    rule.weights.push_back(wscale * pos_weights[i]);
  }
  if (n % 2 == 1) {
    const double pp = std::sqrt(2.0 * n) * hermite_pair(n, 0.0).second;
    rule.nodes.push_back(0.0);
    rule.weights.push_back(wscale * 2.0 / (pp * pp));
  }
  for (int i = half - 1; i >= 0; --i) {
    rule.nodes.push_back(scale * pos_nodes[i]);
    rule.weights.push_back(wscale * pos_weights[i]);
  }
  return rule;
}

}  // namespace

double GaussHermiteRule::expect(const std::function<double(double)>& f) const {
  // Sum symmetric pairs first so even/odd structure survives rounding.
  const std::size_t n = nodes.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n / 2; ++i) {
    s += weights[i] * (f(nodes[i]) + f(nodes[n - 1 - i]));
  }
  if (n % 2 == 1) s += weights[n / 2] * f(nodes[n / 2]);
  return s;
}

const GaussHermiteRule& gauss_hermite(int nodes) {
  static std::mutex mu;
  static std::map<int, GaussHermiteRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(nodes);
  if (it == cache.end()) it = cache.emplace(nodes, build_rule(nodes)).first;
  return it->second;
}

}  // namespace shallow
