#include "shallow/sigmoid.hpp"

#include <cmath>
#include <string>

#include "shallow/error.hpp"

namespace shallow {

SigmoidPair sigmoid_pair(double z) {
  // Branch on the sign so exp() only ever sees -|z|.
  const double e = std::exp(-std::abs(z));
  const double big = 1.0 / (1.0 + e);
  const double small = e / (1.0 + e);
  return z >= 0.0 ? SigmoidPair{big, small} : SigmoidPair{small, big};
}

double sigmoid(double z) { return sigmoid_pair(z).p; }

double sigmoid_derivative(double z, int order) {
  if (!std::isfinite(z)) {
    throw DomainError("sigmoid_derivative: non-finite argument");
  }
  const auto [p, q] = sigmoid_pair(z);
  switch (order) {
    case 0:
      return p;
    case 1:
      return p * q;
    case 2:
      return p * q * (q - p);
    case 3:
      // 1 - 6p + 6p^2 = 1 - 6pq
      return p * q * (1.0 - 6.0 * p * q);
    default:
      throw DomainError("sigmoid_derivative: order must be 0..3, got " +
                        std::to_string(order));
  }
}

}  // namespace shallow
