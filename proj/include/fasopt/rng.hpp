#ifndef FASOPT_RNG_HPP
#define FASOPT_RNG_HPP

#include <cstdint>

namespace fasopt {

/// Counter-free xoshiro256++ stream with an explicit (seed, stream_id)
/// identity. The same pair always reproduces the same sample sequence,
/// independent of the standard library's distribution implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via the Marsaglia polar method (sqrt/log only).
  double gaussian();

  /// Derive an independent stream, e.g. one per Monte Carlo replicate.
  RngStream split(std::uint64_t child_id) const;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t state_[4] = {0, 0, 0, 0};
  bool has_cached_gaussian_ = false;
  double cached_gaussian_ = 0.0;
};

}  // namespace fasopt

#endif
