#include "shallow/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "shallow/error.hpp"
#include "shallow/reduce.hpp"
#include "shallow/sigmoid.hpp"

namespace shallow {

const char* to_string(ModelKind kind) {
  return kind == ModelKind::kFcn ? "fcn" : "cnn";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "fcn") return ModelKind::kFcn;
  if (s == "cnn") return ModelKind::kCnn;
  throw ConfigError("unknown model kind '" + s + "' (expected fcn or cnn)");
}

FcnWeights::FcnWeights(Matrix w) : w_(std::move(w)) {
  if (w_.cols() < 1 || w_.rows() < w_.cols()) {
    throw DimensionError("FcnWeights: need d >= K >= 1, got d=" +
                         std::to_string(w_.rows()) +
                         " K=" + std::to_string(w_.cols()));
  }
  if (!w_.allFinite()) throw DomainError("FcnWeights: non-finite entry");
}

FcnWeights FcnWeights::zeros(int d, int k) {
  return FcnWeights(Matrix::Zero(d, k));
}

CnnWeights::CnnWeights(Vector filter, int k) : w_(std::move(filter)), k_(k) {
  if (w_.size() < 1 || k_ < 1) {
    throw DimensionError("CnnWeights: need m >= 1 and K >= 1");
  }
  if (!w_.allFinite()) throw DomainError("CnnWeights: non-finite entry");
}

int input_dim(const NetworkWeights& w) {
  return std::visit([](const auto& v) { return v.d(); }, w);
}

int neuron_count(const NetworkWeights& w) {
  return std::visit([](const auto& v) { return v.k(); }, w);
}

ModelKind kind_of(const NetworkWeights& w) {
  return std::holds_alternative<FcnWeights>(w) ? ModelKind::kFcn
                                               : ModelKind::kCnn;
}

Vector vectorize(const NetworkWeights& w) {
  if (const auto* f = std::get_if<FcnWeights>(&w)) {
    return Eigen::Map<const Vector>(f->matrix().data(), f->matrix().size());
  }
  return std::get<CnnWeights>(w).filter();
}

Dataset::Dataset(RowMatrix inputs, Vector labels, std::uint64_t seed)
    : x_(std::move(inputs)), y_(std::move(labels)), seed_(seed) {
  if (x_.rows() < 1) throw DimensionError("Dataset: need n >= 1");
  if (y_.size() != x_.rows()) {
    throw DimensionError("Dataset: label count does not match input count");
  }
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    if (y_[i] != 0.0 && y_[i] != 1.0) {
      throw DomainError("Dataset: label " + std::to_string(i) +
                        " is not in {0,1}");
    }
  }
}

Dataset Dataset::slice(int begin, int end) const {
  if (begin < 0 || end > n() || begin >= end) {
    throw DimensionError("Dataset::slice: bad range");
  }
  return Dataset(x_.middleRows(begin, end - begin),
                 y_.segment(begin, end - begin), seed_);
}

namespace {

void check_label(int y) {
  if (y != 0 && y != 1) {
    throw DomainError("label must be 0 or 1, got " + std::to_string(y));
  }
}

void check_dim(long got, long want, const char* who) {
  if (got != want) {
    throw DimensionError(std::string(who) + ": input has dimension " +
                         std::to_string(got) + ", expected " +
                         std::to_string(want));
  }
}

void check_hessian_size(long dim) {
  if (dim > kMaxHessianDim) {
    throw SizeError("dense Hessian of dimension " + std::to_string(dim) +
                    " exceeds the cap of " + std::to_string(kMaxHessianDim));
  }
}

// Everything the loss and its derivatives need from one sample, given the
// per-neuron pre-activations.
struct Pointwise {
  double h;      // clamped H
  double hbar;   // clamped 1 - H, accumulated from the q's
  double loss;
  double ratio;  // (y - H) / (H (1 - H))
  double curv;   // (H^2 + y - 2yH) / (H^2 (1 - H)^2)
};

Pointwise pointwise(double p_sum, double q_sum, int k, int y) {
  Pointwise out{};
  out.h = clamp_probability(p_sum / k);
  out.hbar = clamp_probability(q_sum / k);
  if (y == 1) {
    out.loss = -std::log(out.h);
    out.ratio = 1.0 / out.h;
    out.curv = 1.0 / (out.h * out.h);
  } else {
    out.loss = -std::log(out.hbar);
    out.ratio = -1.0 / out.hbar;
    out.curv = 1.0 / (out.hbar * out.hbar);
  }
  return out;
}

}  // namespace

double clamp_probability(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

double cross_entropy_loss(double p, int y) {
  check_label(y);
  const double pc = clamp_probability(p);
  return y == 1 ? -std::log(pc) : -std::log(1.0 - pc);
}

double forward(const FcnWeights& w, const VectorRef& x) {
  check_dim(x.size(), w.d(), "forward_fcn");
  const Vector z = w.matrix().transpose() * x;
  double s = 0.0;
  for (Eigen::Index k = 0; k < z.size(); ++k) s += sigmoid(z[k]);
  return s / w.k();
}

double forward(const CnnWeights& w, const VectorRef& x) {
  check_dim(x.size(), w.d(), "forward_cnn");
  const int m = w.m();
  double s = 0.0;
  for (int k = 0; k < w.k(); ++k) {
    s += sigmoid(w.filter().dot(x.segment(k * m, m)));
  }
  return s / w.k();
}

double forward(const NetworkWeights& w, const VectorRef& x) {
  return std::visit([&](const auto& v) { return forward(v, x); }, w);
}

FcnWeights cnn_to_fcn(const CnnWeights& w) {
  Matrix out = Matrix::Zero(w.d(), w.k());
  for (int k = 0; k < w.k(); ++k) out.block(k * w.m(), k, w.m(), 1) = w.filter();
  return FcnWeights(std::move(out));
}

double sample_loss(const FcnWeights& w, const VectorRef& x, int y) {
  check_label(y);
  check_dim(x.size(), w.d(), "sample_loss");
  const Vector z = w.matrix().transpose() * x;
  double ps = 0.0, qs = 0.0;
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    const auto s = sigmoid_pair(z[k]);
    ps += s.p;
    qs += s.q;
  }
  return pointwise(ps, qs, w.k(), y).loss;
}

double sample_loss(const CnnWeights& w, const VectorRef& x, int y) {
  check_label(y);
  check_dim(x.size(), w.d(), "sample_loss");
  double ps = 0.0, qs = 0.0;
  for (int k = 0; k < w.k(); ++k) {
    const auto s = sigmoid_pair(w.filter().dot(x.segment(k * w.m(), w.m())));
    ps += s.p;
    qs += s.q;
  }
  return pointwise(ps, qs, w.k(), y).loss;
}

Matrix grad_fcn(const FcnWeights& w, const VectorRef& x, int y) {
  check_label(y);
  check_dim(x.size(), w.d(), "grad_fcn");
  const int K = w.k();
  const Vector z = w.matrix().transpose() * x;
  Vector d1(K);
  double ps = 0.0, qs = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto s = sigmoid_pair(z[k]);
    ps += s.p;
    qs += s.q;
    d1[k] = s.p * s.q;
  }
  const Pointwise pw = pointwise(ps, qs, K, y);
  return x * (-(pw.ratio / K) * d1).transpose();
}

Vector grad_cnn(const CnnWeights& w, const VectorRef& x, int y) {
  check_label(y);
  check_dim(x.size(), w.d(), "grad_cnn");
  const int K = w.k(), m = w.m();
  Vector d1(K);
  double ps = 0.0, qs = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto s = sigmoid_pair(w.filter().dot(x.segment(k * m, m)));
    ps += s.p;
    qs += s.q;
    d1[k] = s.p * s.q;
  }
  const Pointwise pw = pointwise(ps, qs, K, y);
  Vector g = Vector::Zero(m);
  for (int k = 0; k < K; ++k) g += d1[k] * x.segment(k * m, m);
  return -(pw.ratio / K) * g;
}

namespace {

// xi_{j,l} for FCN and g_{j,l} for CNN share the same K x K coefficient form.
Matrix curvature_coefficients(const Vector& d1, const Vector& d2,
                              const Pointwise& pw) {
  const int K = static_cast<int>(d1.size());
  const double kk = static_cast<double>(K) * K;
  Matrix xi = (pw.curv / kk) * (d1 * d1.transpose());
  for (int j = 0; j < K; ++j) xi(j, j) -= (pw.ratio / K) * d2[j];
  return xi;
}

}  // namespace

Matrix hessian_fcn(const FcnWeights& w, const VectorRef& x, int y) {
  check_label(y);
  check_dim(x.size(), w.d(), "hessian_fcn");
  const int K = w.k(), d = w.d();
  check_hessian_size(static_cast<long>(d) * K);
  const Vector z = w.matrix().transpose() * x;
  Vector d1(K), d2(K);
  double ps = 0.0, qs = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto s = sigmoid_pair(z[k]);
    ps += s.p;
    qs += s.q;
    d1[k] = s.p * s.q;
    d2[k] = s.p * s.q * (s.q - s.p);
  }
  const Matrix xi = curvature_coefficients(d1, d2, pointwise(ps, qs, K, y));
  const Matrix xx = x * x.transpose();
  Matrix h(d * K, d * K);
  for (int j = 0; j < K; ++j) {
    for (int l = j; l < K; ++l) {
      h.block(j * d, l * d, d, d) = xi(j, l) * xx;
      if (l != j) h.block(l * d, j * d, d, d) = h.block(j * d, l * d, d, d);
    }
  }
  return h;
}

Matrix hessian_cnn(const CnnWeights& w, const VectorRef& x, int y) {
  check_label(y);
  check_dim(x.size(), w.d(), "hessian_cnn");
  const int K = w.k(), m = w.m();
  check_hessian_size(m);
  Eigen::Map<const Matrix> strides(x.data(), m, K);
  const Vector z = strides.transpose() * w.filter();
  Vector d1(K), d2(K);
  double ps = 0.0, qs = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto s = sigmoid_pair(z[k]);
    ps += s.p;
    qs += s.q;
    d1[k] = s.p * s.q;
    d2[k] = s.p * s.q * (s.q - s.p);
  }
  const Matrix g = curvature_coefficients(d1, d2, pointwise(ps, qs, K, y));
  Matrix h = strides * g * strides.transpose();
  // Exact symmetry.
  return 0.5 * (h + h.transpose());
}

// ---- batch versions ----------------------------------------------------------

namespace {

// Vectorized pointwise quantities for a chunk: rows are samples, columns the
// K neurons (FCN) or strides (CNN).
struct ChunkTerms {
  Eigen::ArrayXXd d1;     // phi'(z)
  Eigen::ArrayXXd d2;     // phi''(z), only when requested
  Eigen::ArrayXd ratio;   // (y - H) / (H (1 - H))
  Eigen::ArrayXd curv;    // (H^2 + y - 2yH) / (H^2 (1 - H)^2)
  double loss_sum = 0.0;
};

ChunkTerms chunk_terms(const Eigen::ArrayXXd& z,
                       const Eigen::Ref<const Vector>& y, bool second) {
  const int K = static_cast<int>(z.cols());
  const Eigen::ArrayXXd e = (-z.abs()).exp();
  const Eigen::ArrayXXd big = 1.0 / (1.0 + e);
  const Eigen::ArrayXXd small = e * big;
  const auto pos = z >= 0.0;
  const Eigen::ArrayXXd p = pos.select(big, small);
  const Eigen::ArrayXXd q = pos.select(small, big);
  const Eigen::ArrayXd h =
      (p.rowwise().sum() / K).max(kProbClamp).min(1.0 - kProbClamp);
  const Eigen::ArrayXd hbar =
      (q.rowwise().sum() / K).max(kProbClamp).min(1.0 - kProbClamp);
  const auto is_one = y.array() > 0.5;
  const Eigen::ArrayXd sel = is_one.select(h, hbar);
  ChunkTerms t;
  t.loss_sum = -sel.log().sum();
  t.ratio = is_one.select(1.0 / h, -1.0 / hbar);
  t.d1 = p * q;
  if (second) {
    t.curv = 1.0 / (sel * sel);
    t.d2 = t.d1 * (q - p);
  }
  return t;
}

}  // namespace

LossGradient empirical_loss_gradient(const FcnWeights& w, const Dataset& data) {
  check_dim(data.d(), w.d(), "empirical_loss_gradient");
  const int K = w.k(), d = w.d(), n = data.n();
  const RowMatrix& X = data.inputs();
  const Vector& Y = data.labels();
  KahanScalar loss;
  KahanAccumulator<Matrix> grad(Matrix::Zero(d, K));
  for_each_chunk(n, [&](int b, int e) {
    const auto Xc = X.middleRows(b, e - b);
    const Eigen::ArrayXXd z = (Xc * w.matrix()).array();
    const ChunkTerms t = chunk_terms(z, Y.segment(b, e - b), false);
    loss.add(t.loss_sum);
    const Matrix coef = (t.d1.colwise() * (-t.ratio / K)).matrix();
    // One matrix-vector product per neuron beats a thin GEMM here.
    Matrix part(d, K);
    for (int j = 0; j < K; ++j) {
      part.col(j).noalias() = Xc.transpose() * coef.col(j);
    }
    grad.add(part);
  });
  return {loss.sum() / n, grad.sum() / n};
}

LossGradient empirical_loss_gradient(const CnnWeights& w, const Dataset& data) {
  check_dim(data.d(), w.d(), "empirical_loss_gradient");
  const int K = w.k(), m = w.m(), d = w.d(), n = data.n();
  const RowMatrix& X = data.inputs();
  const Vector& Y = data.labels();
  KahanScalar loss;
  KahanAccumulator<Matrix> grad(Matrix::Zero(m, 1));
  for_each_chunk(n, [&](int b, int e) {
    const int c = e - b;
    // Row-major n x (mK) viewed as (nK) x m: one row per stride.
    Eigen::Map<const RowMatrix> strides(X.data() + static_cast<long>(b) * d,
                                        static_cast<long>(c) * K, m);
    const Vector zs = strides * w.filter();
    const Eigen::ArrayXXd z =
        Eigen::Map<const RowMatrix>(zs.data(), c, K).array();
    const ChunkTerms t = chunk_terms(z, Y.segment(b, c), false);
    loss.add(t.loss_sum);
    const RowMatrix coef = (t.d1.colwise() * (-t.ratio / K)).matrix();
    grad.add(strides.transpose() *
             Eigen::Map<const Vector>(coef.data(), coef.size()));
  });
  return {loss.sum() / n, grad.sum() / n};
}

double empirical_loss(const FcnWeights& w, const Dataset& data) {
  return empirical_loss_gradient(w, data).loss;
}

double empirical_loss(const CnnWeights& w, const Dataset& data) {
  return empirical_loss_gradient(w, data).loss;
}

double empirical_loss(const NetworkWeights& w, const Dataset& data) {
  return std::visit([&](const auto& v) { return empirical_loss(v, data); }, w);
}

Matrix empirical_gradient(const FcnWeights& w, const Dataset& data) {
  return empirical_loss_gradient(w, data).gradient;
}

Vector empirical_gradient(const CnnWeights& w, const Dataset& data) {
  return empirical_loss_gradient(w, data).gradient.col(0);
}

Matrix empirical_hessian(const FcnWeights& w, const Dataset& data) {
  check_dim(data.d(), w.d(), "empirical_hessian");
  const int K = w.k(), d = w.d(), n = data.n();
  check_hessian_size(static_cast<long>(d) * K);
  const RowMatrix& X = data.inputs();
  const Vector& Y = data.labels();
  const double kk = static_cast<double>(K) * K;
  KahanAccumulator<Matrix> acc(Matrix::Zero(d * K, d * K));
  for_each_chunk(n, [&](int b, int e) {
    const int c = e - b;
    const auto Xc = X.middleRows(b, c);
    const Eigen::ArrayXXd z = (Xc * w.matrix()).array();
    const ChunkTerms t = chunk_terms(z, Y.segment(b, c), true);
    Matrix part(d * K, d * K);
    for (int j = 0; j < K; ++j) {
      for (int l = j; l < K; ++l) {
        Eigen::ArrayXd xi = t.curv / kk * t.d1.col(j) * t.d1.col(l);
        if (j == l) xi -= t.ratio / K * t.d2.col(j);
        const Matrix blk =
            Xc.transpose() * (xi.matrix().asDiagonal() * Xc);
        part.block(j * d, l * d, d, d) = blk;
        if (l != j) part.block(l * d, j * d, d, d) = blk.transpose();
      }
    }
    acc.add(part);
  });
  Matrix h = acc.sum() / n;
  return 0.5 * (h + h.transpose());
}

Matrix empirical_hessian(const CnnWeights& w, const Dataset& data) {
  check_dim(data.d(), w.d(), "empirical_hessian");
  const int K = w.k(), m = w.m(), d = w.d(), n = data.n();
  check_hessian_size(m);
  const RowMatrix& X = data.inputs();
  const Vector& Y = data.labels();
  const double kk = static_cast<double>(K) * K;
  KahanAccumulator<Matrix> acc(Matrix::Zero(m, m));
  for_each_chunk(n, [&](int b, int e) {
    const int c = e - b;
    Eigen::Map<const RowMatrix> strides(X.data() + static_cast<long>(b) * d,
                                        static_cast<long>(c) * K, m);
    const Vector zs = strides * w.filter();
    const Eigen::ArrayXXd z =
        Eigen::Map<const RowMatrix>(zs.data(), c, K).array();
    const ChunkTerms t = chunk_terms(z, Y.segment(b, c), true);
    Matrix part = Matrix::Zero(m, m);
    Matrix g(K, K);
    for (int i = 0; i < c; ++i) {
      for (int j = 0; j < K; ++j) {
        for (int l = 0; l < K; ++l) {
          g(j, l) = t.curv[i] / kk * t.d1(i, j) * t.d1(i, l);
        }
        g(j, j) -= t.ratio[i] / K * t.d2(i, j);
      }
      Eigen::Map<const Matrix> xs(X.row(b + i).data(), m, K);
      part.noalias() += xs * g * xs.transpose();
    }
    acc.add(part);
  });
  Matrix h = acc.sum() / n;
  return 0.5 * (h + h.transpose());
}

Matrix empirical_hessian(const NetworkWeights& w, const Dataset& data) {
  return std::visit([&](const auto& v) { return empirical_hessian(v, data); },
                    w);
}

}  // namespace shallow
