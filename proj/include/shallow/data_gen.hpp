#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "shallow/model.hpp"
#include "shallow/rng.hpp"

namespace shallow {

inline constexpr double kDefaultWeightScale = 0.9;

struct GroundTruthSpec {
  ModelKind kind = ModelKind::kFcn;
  int d = 10;
  int k = 3;
  /// Each FCN column (or the CNN filter) is rescaled to this norm.
  double scale = kDefaultWeightScale;
  std::uint64_t seed = 0;
};

/// Gaussian weights rescaled to norm `scale` per column (FCN) or for the
/// filter (CNN, m = d / K). Deterministic in spec.seed.
NetworkWeights make_ground_truth(const GroundTruthSpec& spec);

/// Same, drawing from an explicit stream.
NetworkWeights make_ground_truth(const GroundTruthSpec& spec, RngStream rng);

/// n i.i.d. samples x ~ N(0, I_d), y ~ Bernoulli(H(truth, x)).
/// The dataset records rng.stream() as its seed.
Dataset sample_dataset(const NetworkWeights& truth, int n, RngStream rng);

/// Text dump: header "d K n seed", then one "y x_1 ... x_d" row per sample,
/// 17 significant digits.
void write_dataset(std::ostream& os, const Dataset& data, int k);
Dataset read_dataset(std::istream& is, int* k = nullptr);

}  // namespace shallow
