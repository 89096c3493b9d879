#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cloneforge {

/// Seeded random stream with platform-independent sampling.
///
/// The standard distributions are implementation-defined, so every draw here
/// is built directly from the raw 64-bit output of mt19937_64. A run-level
/// seed fans out into independent streams through `derive`, keyed by a fixed
/// label and an optional index (anchor id, clone number, ...).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                                   std::uint64_t index = 0);
  static Rng derive(std::uint64_t seed, std::string_view label, std::uint64_t index = 0) {
    return Rng(derive_seed(seed, label, index));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace cloneforge
