#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

namespace tapetrack {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Counter-based key: hashes (seed, a, b, c) into an independent stream seed
// so that per-node/per-iteration draws do not depend on evaluation order.
inline constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                                          std::uint64_t c = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (a + 0x632BE59BD9B4E019ULL));
  h = splitmix64(h ^ (b + 0x85157AF5ULL));
  h = splitmix64(h ^ (c + 0x2545F4914F6CDD1DULL));
  return h;
}

// Deterministic generator with library-independent transforms.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0)
      : engine_(stream_key(seed, a, b, c)) {}

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// One univariate slice-sampling update (stepping out, then shrinkage).
// `log_density` may return -inf outside the support. When the step-out budget
// is exhausted the current bracket is shrunk as is.
template <typename LogDensity>
double slice_sample(double current, LogDensity&& log_density, double width, int max_steps, Rng& rng) {
  if (!(width > 0.0)) return current;
  const double log_y = log_density(current) + std::log(1.0 - rng.uniform());  // log(U), U in (0, 1]
  double left = current - width * rng.uniform();
  double right = left + width;
  int j = static_cast<int>(std::floor(max_steps * rng.uniform()));
  int k = max_steps - 1 - j;
  while (j > 0 && log_density(left) > log_y) {
    left -= width;
    --j;
  }
  while (k > 0 && log_density(right) > log_y) {
    right += width;
    --k;
  }
  for (int iter = 0; iter < 200; ++iter) {
    const double x = left + (right - left) * rng.uniform();
    if (log_density(x) > log_y) return x;
    if (x < current) {
      left = x;
    } else {
      right = x;
    }
    if (right - left < 1e-12 * (1.0 + std::abs(current))) break;
  }
  return current;
}

}  // namespace tapetrack
