#pragma once

#include <functional>
#include <vector>

namespace shallow {

inline constexpr int kDefaultQuadratureNodes = 61;

/// Gauss-Hermite rule rescaled for a standard normal weight:
/// E[f(z)], z ~ N(0,1), is approximated by sum_i weights[i] * f(nodes[i]).
/// Nodes are exactly symmetric about 0 (the middle node is exactly 0 for odd
/// counts) so odd integrands cancel to rounding.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  double expect(const std::function<double(double)>& f) const;
};

/// Golub-Welsch initial guesses polished by Newton on the orthonormal
/// Hermite recurrence. Results are cached per node count.
const GaussHermiteRule& gauss_hermite(int nodes = kDefaultQuadratureNodes);

}  // namespace shallow
