#pragma once

#include <cmath>
#include <functional>

#include "shallow/model.hpp"
#include "shallow/rng.hpp"

namespace testing {

using shallow::Matrix;
using shallow::RngStream;
using shallow::Vector;

inline Vector gaussian_vector(RngStream& rng, int n, double scale = 1.0) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

inline Matrix gaussian_matrix(RngStream& rng, int r, int c, double scale = 1.0) {
  Matrix m(r, c);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-12);
}

// Central differences of a scalar function of a flat parameter vector.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f,
                          const Vector& p, double h = 1e-4) {
  Vector g(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Vector a = p, b = p;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

// Central differences of a vector function; column i is d g / d p_i.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& g,
                          const Vector& p, double h = 1e-4) {
  Matrix j(g(p).size(), p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Vector a = p, b = p;
    a[i] += h;
    b[i] -= h;
    j.col(i) = (g(a) - g(b)) / (2 * h);
  }
  return j;
}

inline Vector flat(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

inline Matrix unflat(const Vector& v, int r, int c) {
  return Eigen::Map<const Matrix>(v.data(), r, c);
}

}  // namespace testing
