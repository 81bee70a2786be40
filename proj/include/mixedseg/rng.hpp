#ifndef MIXEDSEG_RNG_HPP_
#define MIXEDSEG_RNG_HPP_

#include <cstdint>
#include <random>
#include <vector>

namespace mixedseg {

// splitmix64 step; used to derive independent subsystem seeds from one root.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Named per-subsystem seed streams derived from the single root seed.
// Stream ids are fixed so runs are reproducible across builds.
enum class SeedStream : std::uint64_t {
  kData = 1,
  kSampler = 2,
  kInit = 3,
  kFolds = 4,
  kExperiment = 5,
};

inline std::uint64_t derive_seed(std::uint64_t root, SeedStream stream) {
  return splitmix64(root + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(stream));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(root + 0x9E3779B97F4A7C15ULL * (index + 17));
}

// mt19937_64 with portable value derivations. The std:: distributions are not
// bit-stable across standard libraries, so uniform/normal/bounded draws are
// implemented here directly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return x % n;
  }

  // Standard normal via Box-Muller; caches the second value.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace mixedseg

#endif  // MIXEDSEG_RNG_HPP_
