#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace spgrpo::numerics {

// Philox4x32-10 block function. Exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Counter-based random stream keyed by (seed, stream). Two sources with the
// same seed and stream produce identical sequences; split() derives
// independent child streams, which is how parallel rollouts get disjoint
// reproducible noise.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  // Number of 64-bit words consumed so far.
  std::uint64_t position() const { return position_; }

  RandomSource split(std::uint64_t substream) const;

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  std::size_t uniform_index(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t position_ = 0;
  std::optional<double> spare_normal_;
};

// n standard normal draws.
std::vector<double> gaussian(RandomSource& rng, std::size_t n);

}  // namespace spgrpo::numerics
