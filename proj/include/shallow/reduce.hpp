#pragma once

#include <Eigen/Dense>
#include <algorithm>

namespace shallow {

// Samples are reduced in fixed-size chunks; chunk partials are merged in
// chunk order with compensated summation. The chunk size never depends on
// the worker count, so reductions are bit-stable across thread counts.
inline constexpr int kReductionChunk = 256;

template <class Derived>
class KahanAccumulator {
 public:
  using Value = Derived;

  KahanAccumulator() = default;
  explicit KahanAccumulator(const Value& zero) : sum_(zero), comp_(zero) {
    sum_.setZero();
    comp_.setZero();
  }

  void add(const Value& v) {
    Value y = v - comp_;
    Value t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = std::move(t);
  }

  const Value& sum() const { return sum_; }

 private:
  Value sum_;
  Value comp_;
};

class KahanScalar {
 public:
  void add(double v) {
    const double y = v - comp_;
    const double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double sum() const { return sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Calls fn(begin, end) for consecutive chunks of [0, n).
template <class Fn>
void for_each_chunk(int n, Fn&& fn) {
  for (int b = 0; b < n; b += kReductionChunk) {
    fn(b, std::min(n, b + kReductionChunk));
  }
}

}  // namespace shallow
