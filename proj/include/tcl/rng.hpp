#pragma once

#include <cstdint>
#include <random>

namespace tcl {

// Seeded random stream. (seed, stream) fully determine the sequence; all
// derived draws (uniform, normal, permutation) are computed in-repo so they do
// not depend on the standard library's distribution implementations.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 bits of mantissa.
  double uniform();
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent child stream, deterministic in (seed, stream, id).
  RngStream fork(std::uint64_t id) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace tcl
