#include "shallow/data_gen.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include "shallow/error.hpp"

namespace shallow {

NetworkWeights make_ground_truth(const GroundTruthSpec& spec) {
  return make_ground_truth(spec, RngStream(spec.seed, stream_id("ground-truth")));
}

NetworkWeights make_ground_truth(const GroundTruthSpec& spec, RngStream rng) {
  if (spec.k < 1 || spec.d < 1) {
    throw ConfigError("ground truth needs d >= 1 and K >= 1");
  }
  if (!(spec.scale > 0.0 && spec.scale <= 1.0)) {
    throw ConfigError("ground-truth weight scale must lie in (0, 1]");
  }
  if (spec.kind == ModelKind::kFcn) {
    if (spec.d < spec.k) throw ConfigError("fcn ground truth needs d >= K");
    Matrix w(spec.d, spec.k);
    for (int j = 0; j < spec.k; ++j) {
      for (int i = 0; i < spec.d; ++i) w(i, j) = rng.normal();
      w.col(j) *= spec.scale / w.col(j).norm();
    }
    return FcnWeights(std::move(w));
  }
  if (spec.d % spec.k != 0) {
    throw ConfigError("cnn ground truth needs K to divide d (d=" +
                      std::to_string(spec.d) +
                      ", K=" + std::to_string(spec.k) + ")");
  }
  Vector w(spec.d / spec.k);
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.normal();
  w *= spec.scale / w.norm();
  return CnnWeights(std::move(w), spec.k);
}

Dataset sample_dataset(const NetworkWeights& truth, int n, RngStream rng) {
  if (n < 1) throw ConfigError("sample_dataset: need n >= 1");
  const int d = input_dim(truth);
  RowMatrix x(n, d);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
    const double h = forward(truth, x.row(i).transpose());
    y[i] = rng.uniform() < h ? 1.0 : 0.0;
  }
  return Dataset(std::move(x), std::move(y), rng.stream());
}

void write_dataset(std::ostream& os, const Dataset& data, int k) {
  char buf[40];
  os << data.d() << ' ' << k << ' ' << data.n() << ' ' << data.seed() << '\n';
  for (int i = 0; i < data.n(); ++i) {
    os << data.y(i);
    for (int j = 0; j < data.d(); ++j) {
      std::snprintf(buf, sizeof buf, " %.17g", data.inputs()(i, j));
      os << buf;
    }
    os << '\n';
  }
}

Dataset read_dataset(std::istream& is, int* k) {
  long d = 0, kk = 0, n = 0;
  std::uint64_t seed = 0;
  if (!(is >> d >> kk >> n >> seed) || d < 1 || n < 1) {
    throw ConfigError("dataset dump: malformed header");
  }
  RowMatrix x(n, d);
  Vector y(n);
  for (long i = 0; i < n; ++i) {
    if (!(is >> y[i])) throw ConfigError("dataset dump: truncated");
    for (long j = 0; j < d; ++j) {
      if (!(is >> x(i, j))) throw ConfigError("dataset dump: truncated");
    }
  }
  if (k) *k = static_cast<int>(kk);
  return Dataset(std::move(x), std::move(y), seed);
}

}  // namespace shallow
