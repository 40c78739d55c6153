#pragma once

namespace shallow {

/// Logistic sigmoid phi(z) = 1 / (1 + exp(-z)) and its first three
/// derivatives. Stable for |z| up to (and well past) 700.
double sigmoid(double z);

/// phi^(order)(z) for order in {0, 1, 2, 3}.
/// Throws DomainError for a non-finite z or an unsupported order.
double sigmoid_derivative(double z, int order);

/// phi(z) and 1 - phi(z), each computed without cancellation.
struct SigmoidPair {
  double p;
  double q;
};
SigmoidPair sigmoid_pair(double z);

}  // namespace shallow
