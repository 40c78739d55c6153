#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>

namespace shallow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorRef = Eigen::Ref<const Vector>;

/// Network outputs are clamped to [kProbClamp, 1 - kProbClamp] before they
/// enter a log or a (y - H) / (H (1 - H)) ratio.
inline constexpr double kProbClamp = 1e-12;

/// Dense Hessians are limited to dK x dK with dK <= kMaxHessianDim.
inline constexpr int kMaxHessianDim = 512;

enum class ModelKind { kFcn, kCnn };

const char* to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

/// Fully-connected one-hidden-layer network, W = [w_1 ... w_K] in R^{d x K}.
class FcnWeights {
 public:
  explicit FcnWeights(Matrix w);
  static FcnWeights zeros(int d, int k);

  const Matrix& matrix() const { return w_; }
  int d() const { return static_cast<int>(w_.rows()); }
  int k() const { return static_cast<int>(w_.cols()); }

 private:
  Matrix w_;
};

/// Non-overlapping convolutional network: one filter of length m shared by K
/// disjoint strides, so d = m * K.
class CnnWeights {
 public:
  CnnWeights(Vector filter, int k);

  const Vector& filter() const { return w_; }
  int m() const { return static_cast<int>(w_.size()); }
  int k() const { return k_; }
  int d() const { return m() * k_; }

 private:
  Vector w_;
  int k_;
};

using NetworkWeights = std::variant<FcnWeights, CnnWeights>;

int input_dim(const NetworkWeights& w);
int neuron_count(const NetworkWeights& w);
ModelKind kind_of(const NetworkWeights& w);
/// Column-major vec(W) for FCN, the filter for CNN.
Vector vectorize(const NetworkWeights& w);

struct Sample {
  Vector x;
  int y;
};

/// n Gaussian inputs (rows) with their binary labels.
class Dataset {
 public:
  Dataset(RowMatrix inputs, Vector labels, std::uint64_t seed);

  int n() const { return static_cast<int>(x_.rows()); }
  int d() const { return static_cast<int>(x_.cols()); }
  std::uint64_t seed() const { return seed_; }

  const RowMatrix& inputs() const { return x_; }
  const Vector& labels() const { return y_; }
  Vector x(int i) const { return x_.row(i).transpose(); }
  int y(int i) const { return y_[i] > 0.5 ? 1 : 0; }
  Sample sample(int i) const { return {x(i), y(i)}; }

  /// Rows [begin, end) as a new dataset with the same seed.
  Dataset slice(int begin, int end) const;

 private:
  RowMatrix x_;
  Vector y_;
  std::uint64_t seed_;
};

// ---- forward models -------------------------------------------------------

double forward(const FcnWeights& w, const VectorRef& x);
double forward(const CnnWeights& w, const VectorRef& x);
double forward(const NetworkWeights& w, const VectorRef& x);

/// Block-diagonal embedding of a CNN filter as a d x K FCN weight matrix.
FcnWeights cnn_to_fcn(const CnnWeights& w);

// ---- loss ------------------------------------------------------------------

double clamp_probability(double p);
double cross_entropy_loss(double p, int y);
double sample_loss(const FcnWeights& w, const VectorRef& x, int y);
double sample_loss(const CnnWeights& w, const VectorRef& x, int y);

// ---- per-sample derivatives -------------------------------------------------

/// d x K; column j is -(1/K) (y - H) / (H (1 - H)) phi'(w_j^T x) x.
Matrix grad_fcn(const FcnWeights& w, const VectorRef& x, int y);
/// Length m; sums all K strides.
Vector grad_cnn(const CnnWeights& w, const VectorRef& x, int y);
/// dK x dK in column-major vec(W) order; block (j, l) = xi_{j,l} x x^T.
Matrix hessian_fcn(const FcnWeights& w, const VectorRef& x, int y);
/// m x m; sum_{j,l} g_{j,l} x^(j) x^(l)^T.
Matrix hessian_cnn(const CnnWeights& w, const VectorRef& x, int y);

// ---- empirical risk f_n and its derivatives ----------------------------------

double empirical_loss(const FcnWeights& w, const Dataset& data);
double empirical_loss(const CnnWeights& w, const Dataset& data);
double empirical_loss(const NetworkWeights& w, const Dataset& data);

Matrix empirical_gradient(const FcnWeights& w, const Dataset& data);
Vector empirical_gradient(const CnnWeights& w, const Dataset& data);

Matrix empirical_hessian(const FcnWeights& w, const Dataset& data);
Matrix empirical_hessian(const CnnWeights& w, const Dataset& data);
Matrix empirical_hessian(const NetworkWeights& w, const Dataset& data);

/// Loss and gradient in one pass over the data (what gradient descent uses).
/// The gradient has the shape of the parameter: d x K for FCN, m x 1 for CNN.
struct LossGradient {
  double loss;
  Matrix gradient;
};
LossGradient empirical_loss_gradient(const FcnWeights& w, const Dataset& data);
LossGradient empirical_loss_gradient(const CnnWeights& w, const Dataset& data);

}  // namespace shallow
