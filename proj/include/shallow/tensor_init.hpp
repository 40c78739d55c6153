#pragma once

#include <array>
#include <string>
#include <vector>

#include "shallow/model.hpp"
#include "shallow/rng.hpp"

namespace shallow {

/// Dense symmetric K x K x K tensor, index (i, j, l) at i + K (j + K l).
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int k) : k_(k), v_(static_cast<size_t>(k) * k * k, 0.0) {}

  int k() const { return k_; }
  double& operator()(int i, int j, int l) { return v_[index(i, j, l)]; }
  double operator()(int i, int j, int l) const { return v_[index(i, j, l)]; }
  const std::vector<double>& data() const { return v_; }
  std::vector<double>& data() { return v_; }

  double norm() const;
  /// T(I, I, a): the K x K slice contracted with a in the last mode.
  Matrix contract_last(const Vector& a) const;
  /// Average over all six index permutations.
  void symmetrize();

 private:
  size_t index(int i, int j, int l) const {
    return static_cast<size_t>(i) + static_cast<size_t>(k_) * (j + static_cast<size_t>(k_) * l);
  }
  int k_ = 0;
  std::vector<double> v_;
};

/// sum_i c_i u_i (x) u_i (x) u_i for unit columns u_i.
Tensor3 rank_one_sum(const Matrix& u, const Vector& c);

struct DatasetSplit {
  Dataset d1, d2, d3;
};

/// Contiguous thirds; the remainder goes to the last part.
DatasetSplit split_dataset(const Dataset& data);

/// A moment estimate with the standard error of its Frobenius norm.
template <class T>
struct Estimate {
  T value;
  double std_error = 0.0;
};

/// mean y x
Estimate<Vector> estimate_M1(const Dataset& data);
/// mean y (x x^T - I)
Estimate<Matrix> estimate_M2(const Dataset& data);
/// mean y [(a.x) x x^T - x a^T - a x^T - (a.x) I], the third-order moment
/// with one copy of a contracted in. Symmetrized. Requires unit a.
Estimate<Matrix> estimate_P2(const Dataset& data, const Vector& alpha);
/// mean y [z (x) z (x) z - z ~(x) I_K] with z = V^T x. Requires V^T V = I.
Tensor3 estimate_R3(const Dataset& data, const Matrix& v);

struct Subspace {
  Matrix v;            // d x K, orthonormal
  Vector eigenvalues;  // all eigenvalues of the input, by descending |value|
  int sweeps = 0;
  bool ill_separated = false;
};

/// Dominant K-dimensional eigenspace by absolute eigenvalue, by orthogonal
/// iteration.
Subspace subspace_V(const Matrix& p2, int k);

struct Decomposition {
  Matrix u;  // K x K, unit columns
  Vector c;  // weights
  double residual = 0.0;  // ||R - sum c_i u_i^3|| / ||R||
  int probe_draws = 0;
  /// Largest |imag|/|real| over the pencil eigenvalues that were used.
  double pencil_imag = 0.0;
  bool complex_fallback = false;
};

/// What to do when every probe draw leaves a complex pencil spectrum.
enum class ComplexSpectrum {
  kThrow,     // DecompositionError
  kBestReal,  // real parts of the least complex draw, then refinement
};

/// Non-orthogonal rank-K decomposition by simultaneous diagonalization
/// followed by alternating refinement. Throws DecompositionError when the
/// tensor is zero, or (under kThrow) when the pencil stays complex after all
/// probe redraws.
Decomposition decompose_R3(const Tensor3& r3, RngStream rng,
                           ComplexSpectrum policy = ComplexSpectrum::kThrow);

inline constexpr double kMagnitudeCeiling = 10.0;

/// Solves gamma_1(a) = target for a in (0, kMagnitudeCeiling] by bisection.
/// The target is clamped into the range of gamma_1 first.
double invert_gamma1(double target);

struct InitOutput {
  Matrix u;        // K x K unit directions in the subspace
  Vector signs;    // +-1
  Vector magnitudes;
  Matrix w0;       // d x K
  double lstsq_residual = 0.0;
  double decomposition_residual = 0.0;
};

/// Least-squares fit of q1 on the columns (1/K) V u_i, then signs and
/// magnitudes from the fitted coefficients.
InitOutput recover_magnitudes_signs(const Matrix& v, const Matrix& u,
                                    const Vector& q1);

struct InitConfig {
  /// Pick j2 and l1 from data instead of the sigmoid values j2 = 3, l1 = 1.
  bool detect_orders = false;
  /// A moment counts as zero when its norm is within this many standard
  /// errors of zero, or below `relative_zero` times the competing moment.
  double noise_multiple = 2.0;
  double relative_zero = 0.1;
  /// Sampled third-order tensors are rarely exactly rank K; by default a
  /// persistently complex pencil falls back to its real parts.
  ComplexSpectrum complex_spectrum = ComplexSpectrum::kBestReal;
};

struct MomentTensors {
  Vector m1;
  Matrix m2;
  Matrix p2;
  Vector alpha;
  Matrix v;
  Tensor3 r3;
  Vector q1;
  int j2 = 3;
  int j3 = 3;
  int l1 = 1;
  double m1_norm = 0.0, m1_se = 0.0;
  double m2_norm = 0.0, m2_se = 0.0;
  double p2_norm = 0.0, p2_se = 0.0;
  int alpha_draws = 0;
  bool ill_separated = false;
};

struct TensorInit {
  MomentTensors moments;
  Decomposition decomposition;
  InitOutput output;
  FcnWeights weights() const { return FcnWeights(output.w0); }
};

/// Split, second-order slice on the first third, subspace, projected
/// third-order tensor on the second third, decomposition, then magnitudes
/// and signs on the last third. Deterministic in `rng`.
TensorInit init_full(const Dataset& data, int k, RngStream rng,
                     const InitConfig& cfg = {});

}  // namespace shallow
