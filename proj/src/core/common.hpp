#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace convrec {

// Error taxonomy. The process exit code mapping lives in the C API:
// config 2, data 3, numeric/runtime 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Shape violations are a species of numeric error so they map to exit code 4.
struct ShapeError : NumericError {
  using NumericError::NumericError;
};

uint64_t fnv1a64(const void* data, size_t n,
                 uint64_t h = 1469598103934665603ull);
uint64_t fnv1a64(const std::string& s, uint64_t h = 1469598103934665603ull);
std::string hex64(uint64_t v);

// Deterministic RNG used everywhere. mt19937_64 is fully specified by the
// standard; uniform/normal draws are derived with explicit arithmetic so a
// fixed seed gives one bit-exact stream per build.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds, unbiased via rejection.
  int uniform_int(int lo, int hi) {
    if (hi < lo) throw NumericError("uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return lo + static_cast<int>(x % span);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from {0, ..., n-1}, order random.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Independent deterministic sub-streams keyed by purpose.
uint64_t derive_seed(uint64_t base, const std::string& stream);

}  // namespace convrec
