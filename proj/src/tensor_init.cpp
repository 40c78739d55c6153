#include "shallow/tensor_init.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "shallow/error.hpp"
#include "shallow/geometry.hpp"
#include "shallow/reduce.hpp"

namespace shallow {

double Tensor3::norm() const {
  double s = 0.0;
  for (double x : v_) s += x * x;
  return std::sqrt(s);
}

Matrix Tensor3::contract_last(const Vector& a) const {
  if (a.size() != k_) throw DimensionError("Tensor3::contract_last: size");
  Matrix out = Matrix::Zero(k_, k_);
  for (int l = 0; l < k_; ++l) {
    out += a[l] * Eigen::Map<const Matrix>(v_.data() + index(0, 0, l), k_, k_);
  }
  return out;
}

void Tensor3::symmetrize() {
  Tensor3 s(k_);
  for (int i = 0; i < k_; ++i) {
    for (int j = 0; j < k_; ++j) {
      for (int l = 0; l < k_; ++l) {
        const auto& t = *this;
        s(i, j, l) = (t(i, j, l) + t(i, l, j) + t(j, i, l) + t(j, l, i) +
                      t(l, i, j) + t(l, j, i)) /
                     6.0;
      }
    }
  }
  *this = std::move(s);
}

Tensor3 rank_one_sum(const Matrix& u, const Vector& c) {
  const int K = static_cast<int>(u.rows());
  Tensor3 t(K);
  for (int r = 0; r < u.cols(); ++r) {
    for (int l = 0; l < K; ++l) {
      for (int j = 0; j < K; ++j) {
        for (int i = 0; i < K; ++i) {
          t(i, j, l) += c[r] * u(i, r) * u(j, r) * u(l, r);
        }
      }
    }
  }
  return t;
}

DatasetSplit split_dataset(const Dataset& data) {
  const int n = data.n();
  if (n < 3) throw DimensionError("split_dataset: need n >= 3");
  const int third = n / 3;
  return {data.slice(0, third), data.slice(third, 2 * third),
          data.slice(2 * third, n)};
}

namespace {

double standard_error(double mean_sq_norm, double norm, int n) {
  return std::sqrt(std::max(0.0, mean_sq_norm - norm * norm) / n);
}

void check_unit(const Vector& a, const char* who) {
  if (std::abs(a.norm() - 1.0) > 1e-10) {
    throw DomainError(std::string(who) + ": probe vector must have unit norm");
  }
}

}  // namespace

Estimate<Vector> estimate_M1(const Dataset& data) {
  const RowMatrix& X = data.inputs();
  const Vector& Y = data.labels();
  const int n = data.n();
  KahanAccumulator<Vector> sum(Vector::Zero(data.d()));
  KahanScalar sq;
  for_each_chunk(n, [&](int b, int e) {
    const auto Xc = X.middleRows(b, e - b);
    const auto yc = Y.segment(b, e - b);
    sum.add(Xc.transpose() * yc);
    sq.add(yc.dot(Xc.rowwise().squaredNorm()));
  });
  Estimate<Vector> out{sum.sum() / n};
  out.std_error = standard_error(sq.sum() / n, out.value.norm(), n);
  return out;
}

Estimate<Matrix> estimate_M2(const Dataset& data) {
  const RowMatrix& X = data.inputs();
  const Vector& Y = data.labels();
  const int n = data.n(), d = data.d();
  KahanAccumulator<Matrix> sum(Matrix::Zero(d, d));
  KahanScalar count, sq;
  for_each_chunk(n, [&](int b, int e) {
    const auto Xc = X.middleRows(b, e - b);
    const auto yc = Y.segment(b, e - b);
    sum.add(Xc.transpose() * yc.asDiagonal() * Xc);
    count.add(yc.sum());
    // ||x x^T - I||^2 = s^2 - 2 s + d with s = ||x||^2
    const Eigen::ArrayXd s = Xc.rowwise().squaredNorm().array();
    sq.add(yc.dot((s * s - 2.0 * s + d).matrix()));
  });
  Matrix m = (sum.sum() - count.sum() * Matrix::Identity(d, d)) / n;
  m = 0.5 * (m + m.transpose());
  Estimate<Matrix> out{m};
  out.std_error = standard_error(sq.sum() / n, m.norm(), n);
  return out;
}

Estimate<Matrix> estimate_P2(const Dataset& data, const Vector& alpha) {
  check_unit(alpha, "estimate_P2");
  if (alpha.size() != data.d()) throw DimensionError("estimate_P2: size");
  const RowMatrix& X = data.inputs();
  const Vector& Y = data.labels();
  const int n = data.n(), d = data.d();
  KahanAccumulator<Matrix> cubic(Matrix::Zero(d, d));
  KahanAccumulator<Vector> first(Vector::Zero(d));
  KahanScalar sq;
  for_each_chunk(n, [&](int b, int e) {
    const auto Xc = X.middleRows(b, e - b);
    const auto yc = Y.segment(b, e - b);
    const Vector a = Xc * alpha;
    const Vector ya = yc.cwiseProduct(a);
    cubic.add(Xc.transpose() * ya.asDiagonal() * Xc);
    first.add(Xc.transpose() * yc);
    // ||G||^2 = a^2 s^2 + 2 s + a^2 d - 6 a^2 s + 6 a^2 for unit alpha
    const Eigen::ArrayXd s = Xc.rowwise().squaredNorm().array();
    const Eigen::ArrayXd a2 = a.array().square();
    sq.add(yc.dot(
        (a2 * s * s + 2.0 * s + a2 * d - 6.0 * a2 * s + 6.0 * a2).matrix()));
  });
  const Vector s1 = first.sum();
  const double s0 = alpha.dot(s1);
  Matrix p = cubic.sum() - s1 * alpha.transpose() - alpha * s1.transpose() -
             s0 * Matrix::Identity(d, d);
  p /= n;
  p = 0.5 * (p + p.transpose());
  Estimate<Matrix> out{p};
  out.std_error = standard_error(sq.sum() / n, p.norm(), n);
  return out;
}

Tensor3 estimate_R3(const Dataset& data, const Matrix& v) {
  if (v.rows() != data.d()) throw DimensionError("estimate_R3: V rows");
  const int K = static_cast<int>(v.cols());
  if ((v.transpose() * v - Matrix::Identity(K, K)).cwiseAbs().maxCoeff() >
      1e-8) {
    throw DomainError("estimate_R3: V must have orthonormal columns");
  }
  const RowMatrix& X = data.inputs();
  const Vector& Y = data.labels();
  const int n = data.n();
  const long kkk = static_cast<long>(K) * K * K;
  KahanAccumulator<Vector> cube(Vector::Zero(kkk));
  KahanAccumulator<Vector> first(Vector::Zero(K));
  for_each_chunk(n, [&](int b, int e) {
    const Matrix Z = X.middleRows(b, e - b) * v;
    Vector part = Vector::Zero(kkk);
    for (int r = 0; r < e - b; ++r) {
      const double y = Y[b + r];
      if (y == 0.0) continue;
      long idx = 0;
      for (int l = 0; l < K; ++l) {
        for (int j = 0; j < K; ++j) {
          const double zjl = y * Z(r, j) * Z(r, l);
          for (int i = 0; i < K; ++i) part[idx++] += zjl * Z(r, i);
        }
      }
    }
    cube.add(part);
    first.add(Z.transpose() * Y.segment(b, e - b));
  });
  Tensor3 t(K);
  const Vector c = cube.sum();
  const Vector s = first.sum();
  std::copy(c.data(), c.data() + kkk, t.data().begin());
  // z ~(x) I = sum_j z(x)e_j(x)e_j + e_j(x)z(x)e_j + e_j(x)e_j(x)z
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      t(i, j, j) -= s[i];
      t(j, i, j) -= s[i];
      t(j, j, i) -= s[i];
    }
  }
  for (double& x : t.data()) x /= n;
  t.symmetrize();
  return t;
}

Subspace subspace_V(const Matrix& p2, int k) {
  const int d = static_cast<int>(p2.rows());
  if (p2.cols() != d || k < 1 || k > d) {
    throw DimensionError("subspace_V: need square input and 1 <= K <= d");
  }
  if ((p2 - p2.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, p2.cwiseAbs().maxCoeff())) {
    throw DomainError("subspace_V: input must be symmetric");
  }
  Subspace out;
  Eigen::SelfAdjointEigenSolver<Matrix> es(p2, Eigen::EigenvaluesOnly);
  std::vector<double> ev(es.eigenvalues().data(),
                         es.eigenvalues().data() + d);
  std::stable_sort(ev.begin(), ev.end(), [](double a, double b) {
    return std::abs(a) > std::abs(b);
  });
  out.eigenvalues = Eigen::Map<const Vector>(ev.data(), d);
  if (k < d && std::abs(ev[k - 1]) - std::abs(ev[k]) < 1e-14) {
    out.ill_separated = true;
  }

  // Fixed pseudo-random start so the result depends on the input only.
  RngStream rng(0, stream_id("subspace-start"));
  Matrix start(d, k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < d; ++i) start(i, j) = rng.normal();
  }
  auto orthonormalize = [&](const Matrix& m) {
    Eigen::HouseholderQR<Matrix> qr(m);
    return Matrix(qr.householderQ() * Matrix::Identity(d, k));
  };
  Matrix q = orthonormalize(start);
  for (int sweep = 1; sweep <= 200; ++sweep) {
    Matrix next = orthonormalize(p2 * q);
    const double change =
        (next * next.transpose() - q * q.transpose()).norm() / std::sqrt(k);
    q = std::move(next);
    out.sweeps = sweep;
    if (change <= 1e-12) break;
  }
  out.v = q;
  return out;
}

namespace {

double decomposition_residual(const Tensor3& r, const Matrix& u,
                              const Vector& c) {
  const Tensor3 fit = rank_one_sum(u, c);
  double s = 0.0;
  for (size_t i = 0; i < r.data().size(); ++i) {
    const double diff = r.data()[i] - fit.data()[i];
    s += diff * diff;
  }
  return std::sqrt(s) / r.norm();
}

// Least-squares weights for fixed unit directions.
Vector fit_weights(const Tensor3& r, const Matrix& u) {
  const int K = r.k();
  const long kkk = static_cast<long>(K) * K * K;
  Matrix design(kkk, u.cols());
  for (int c = 0; c < u.cols(); ++c) {
    const Tensor3 t = rank_one_sum(u.col(c), Vector::Ones(1));
    design.col(c) = Eigen::Map<const Vector>(t.data().data(), kkk);
  }
  const Eigen::Map<const Vector> rhs(r.data().data(), kkk);
  return design.colPivHouseholderQr().solve(rhs);
}

Vector unit_gaussian(RngStream& rng, int k) {
  Vector a(k);
  for (int i = 0; i < k; ++i) a[i] = rng.normal();
  return a / a.norm();
}

}  // namespace

namespace {

// Alternating refinement on the mode-1 unfolding, keeping a sweep only when
// it lowers the residual.
void refine(const Tensor3& r3, Decomposition& out) {
  const int K = r3.k();
  const Eigen::Map<const Matrix> unfold(r3.data().data(), K,
                                        static_cast<long>(K) * K);
  for (int sweep = 0; sweep < 50 && out.residual > 0.0; ++sweep) {
    Matrix kr(static_cast<long>(K) * K, K);
    for (int c = 0; c < K; ++c) {
      for (int l = 0; l < K; ++l) {
        kr.col(c).segment(static_cast<long>(l) * K, K) =
            out.u(l, c) * out.u.col(c);
      }
    }
    const Matrix gram = (out.u.transpose() * out.u).cwiseAbs2();
    Matrix next = unfold * kr *
                  gram.completeOrthogonalDecomposition().pseudoInverse();
    bool ok = next.allFinite();
    for (int c = 0; ok && c < K; ++c) {
      const double nn = next.col(c).norm();
      if (!(nn > 0.0)) {
        ok = false;
      } else {
        next.col(c) /= nn;
      }
    }
    if (!ok) break;
    const Vector c_next = fit_weights(r3, next);
    const double res = decomposition_residual(r3, next, c_next);
    if (!(res < out.residual)) break;
    out.u = std::move(next);
    out.c = c_next;
    out.residual = res;
  }
}

}  // namespace

Decomposition decompose_R3(const Tensor3& r3, RngStream rng,
                           ComplexSpectrum policy) {
  const int K = r3.k();
  if (K < 1) throw DimensionError("decompose_R3: empty tensor");
  const double norm = r3.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw DecompositionError("decompose_R3: tensor is zero or non-finite", 0.0);
  }
  constexpr int kMaxRedraws = 10;
  constexpr double kComplexTol = 1e-6;
  double best_imag = std::numeric_limits<double>::infinity();
  Matrix best_u;
  int draws = 0;
  for (int draw = 0; draw <= kMaxRedraws; ++draw) {
    const Vector a = unit_gaussian(rng, K);
    const Vector b = unit_gaussian(rng, K);
    const Matrix A = r3.contract_last(a);
    const Matrix B = r3.contract_last(b);
    const Matrix pencil =
        A * B.completeOrthogonalDecomposition().pseudoInverse();
    Eigen::EigenSolver<Matrix> es(pencil);
    draws = draw + 1;
    if (es.info() != Eigen::Success) continue;
    double imag = 0.0;
    for (int i = 0; i < K; ++i) {
      const auto lam = es.eigenvalues()[i];
      imag = std::max(imag, std::abs(lam.imag()) /
                                std::max(std::abs(lam.real()), 1e-300));
    }
    if (imag < best_imag) {
      best_imag = imag;
      // The two members of a conjugate pair share their real part; taking
      // the imaginary part for one keeps the real invariant plane.
      best_u.resize(K, K);
      for (int i = 0; i < K; ++i) {
        if (es.eigenvalues()[i].imag() < 0.0) {
          best_u.col(i) = es.eigenvectors().col(i).imag();
        } else {
          best_u.col(i) = es.eigenvectors().col(i).real();
        }
      }
    }
    if (imag <= kComplexTol) break;
  }
  if (best_u.size() == 0 ||
      (best_imag > kComplexTol && policy == ComplexSpectrum::kThrow)) {
    throw DecompositionError(
        "decompose_R3: probe pencil kept a complex spectrum (max |imag|/|real| " +
            std::to_string(best_imag) + ")",
        best_imag);
  }
  Decomposition out;
  out.probe_draws = draws;
  out.pencil_imag = best_imag;
  out.complex_fallback = best_imag > kComplexTol;
  out.u = best_u;
  for (int i = 0; i < K; ++i) out.u.col(i).normalize();
  out.c = fit_weights(r3, out.u);
  out.residual = decomposition_residual(r3, out.u, out.c);
  refine(r3, out);
  return out;
}

double invert_gamma1(double target) {
  const double top = gamma1(kMagnitudeCeiling);
  if (!(target > 0.0)) {
    throw DegenerateInputError("invert_gamma1: target must be positive");
  }
  target = std::min(target, top);
  double lo = 0.0, hi = kMagnitudeCeiling;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (gamma1(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

InitOutput recover_magnitudes_signs(const Matrix& v, const Matrix& u,
                                    const Vector& q1) {
  const int K = static_cast<int>(u.cols());
  if (v.cols() != u.rows() || q1.size() != v.rows()) {
    throw DimensionError("recover_magnitudes_signs: shapes disagree");
  }
  const Matrix dirs = v * u;
  const Matrix design = dirs / K;
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < K) {
    throw DegenerateInputError(
        "recover_magnitudes_signs: direction matrix is rank deficient");
  }
  const Vector beta = qr.solve(q1);
  InitOutput out;
  out.u = u;
  out.signs.resize(K);
  out.magnitudes.resize(K);
  out.w0.resize(v.rows(), K);
  out.lstsq_residual = (design * beta - q1).norm();
  for (int i = 0; i < K; ++i) {
    const double s = beta[i] >= 0.0 ? 1.0 : -1.0;
    const double b1 = beta[i] / s;
    if (!(b1 > 0.0)) {
      throw DegenerateInputError(
          "recover_magnitudes_signs: zero coefficient for neuron " +
          std::to_string(i));
    }
    out.signs[i] = s;
    out.magnitudes[i] = invert_gamma1(b1);
    out.w0.col(i) = out.magnitudes[i] * s * dirs.col(i);
  }
  return out;
}

namespace {

bool is_zero(double norm, double se, double competing, const InitConfig& cfg) {
  return norm <= cfg.noise_multiple * se || norm <= cfg.relative_zero * competing;
}

}  // namespace

TensorInit init_full(const Dataset& data, int k, RngStream rng,
                     const InitConfig& cfg) {
  if (k < 1 || k > data.d()) {
    throw DimensionError("init_full: need 1 <= K <= d");
  }
  const DatasetSplit parts = split_dataset(data);
  TensorInit out;
  MomentTensors& mt = out.moments;

  const Estimate<Vector> m1 = estimate_M1(parts.d1);
  RngStream alpha_rng = rng.derive("alpha");
  const double m1_norm = m1.value.norm();
  do {
    mt.alpha = unit_gaussian(alpha_rng, data.d());
    ++mt.alpha_draws;
  } while (m1_norm > 0.0 && mt.alpha_draws < 1000 &&
           std::abs(mt.alpha.dot(m1.value)) / m1_norm < 1e-3);

  const Estimate<Matrix> p2 = estimate_P2(parts.d1, mt.alpha);
  const Estimate<Matrix> m2 = estimate_M2(parts.d1);
  mt.m2 = m2.value;
  mt.p2_norm = p2.value.norm();
  mt.p2_se = p2.std_error;
  mt.m2_norm = m2.value.norm();
  mt.m2_se = m2.std_error;
  mt.p2 = p2.value;
  if (cfg.detect_orders && !is_zero(mt.m2_norm, mt.m2_se, mt.p2_norm, cfg)) {
    mt.j2 = 2;
    mt.p2 = m2.value;
  }

  const Subspace sub = subspace_V(mt.p2, k);
  mt.v = sub.v;
  mt.ill_separated = sub.ill_separated;
  mt.r3 = estimate_R3(parts.d2, mt.v);
  out.decomposition =
      decompose_R3(mt.r3, rng.derive("jennrich"), cfg.complex_spectrum);

  const Estimate<Vector> q1 = estimate_M1(parts.d3);
  mt.m1 = q1.value;
  mt.q1 = q1.value;
  mt.m1_norm = q1.value.norm();
  mt.m1_se = q1.std_error;
  if (cfg.detect_orders) {
    const double competing =
        (estimate_M2(parts.d3).value * mt.alpha).norm();
    if (is_zero(mt.m1_norm, mt.m1_se, competing, cfg)) {
      mt.l1 = 2;
      throw DegenerateInputError(
          "init_full: first-order moment is indistinguishable from zero; "
          "magnitude recovery needs l1 = 1");
    }
  }

  out.output = recover_magnitudes_signs(mt.v, out.decomposition.u, mt.q1);
  out.output.decomposition_residual = out.decomposition.residual;
  return out;
}

}  // namespace shallow
