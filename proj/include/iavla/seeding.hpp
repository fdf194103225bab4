#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace iavla {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Independent stream seed for one named consumer of a parent seed.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream) {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return splitmix64(parent ^ splitmix64(h));
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(parent ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

/// Uniform double in [0, 1) from a 64-bit draw.
inline double unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Engine plus the few draws the library needs, defined without the
/// implementation-specific standard distributions so sequences are portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double real() { return unit_interval(engine_()); }
  bool chance(double p) { return real() < p; }
  /// Uniform integer in [0, n); n must be positive.
  int below(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }
  int between(int lo, int hi) { return lo + below(hi - lo + 1); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace iavla
