#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace storm {

// Deterministic random stream (xoshiro256** seeded via splitmix64).
// Self-contained so that identical seeds reproduce identical draws on any
// platform, independent of the standard library's distribution internals.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) { reseed(seed); }

  void reseed(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; consumes two uniforms per pair.
  double normal();

  // Uniform integer in [0, n). n must be > 0.
  int uniform_int(int n);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent stream from a master seed and a purpose tag, so
  // that consuming one stream never shifts draws of another.
  static RngStream fork(std::uint64_t master_seed, std::string_view tag);

 private:
  std::uint64_t state_[4];
  bool has_spare_{false};
  double spare_{0.0};
};

}  // namespace storm
