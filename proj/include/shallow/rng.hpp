#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace shallow {

/// 64-bit id for a named purpose and an index, e.g. ("trial", 17).
std::uint64_t stream_id(std::string_view purpose, std::uint64_t index = 0);

/// Counter-based random stream (Philox4x32-10). The key is derived from
/// (master seed, stream id); the counter advances by one per 128-bit block.
/// Distinct (seed, stream id) pairs give independent streams; the same pair
/// always reproduces the same sequence on every platform.
namespace detail {
/// Philox4x32 with 10 rounds; exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key);
}  // namespace detail

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  /// Child stream keyed on this stream's identity plus (purpose, index).
  /// Does not consume draws from this stream.
  RngStream derive(std::string_view purpose, std::uint64_t index = 0) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via the Marsaglia polar method.
  double normal();

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::array<std::uint32_t, 2> key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace shallow
