#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace nestseg {

// Thrown for invalid configuration or arguments (CLI exit code 1).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for failures at run time: I/O, missing files, numeric trouble (CLI exit code 2).
struct RuntimeError : std::runtime_error {
  explicit RuntimeError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string format_msg(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

template <typename... Args>
void check_config(bool cond, const Args&... args) {
  if (!cond) throw ConfigError(format_msg(args...));
}

template <typename... Args>
void check_runtime(bool cond, const Args&... args) {
  if (!cond) throw RuntimeError(format_msg(args...));
}

// Logistic sigmoid. The negative branch is computed as 1 - sigmoid(|z|); the
// subtraction is exact (Sterbenz) for sigmoid(|z|) in [1/2, 1], which makes
// sigmoid(z) + sigmoid(-z) == 1 hold bitwise. The multi-level activation
// relies on this to hit m/2 exactly at x = 0.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  return 1.0 - 1.0 / (1.0 + std::exp(z));
}

inline double sigmoid_deriv(double z) {
  double p = sigmoid(z);
  return p * (1.0 - p);
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and an index path,
// e.g. derive_seed(master, step, slot). Order-sensitive.
inline uint64_t derive_seed(uint64_t base) { return splitmix64(base); }
template <typename... Rest>
uint64_t derive_seed(uint64_t base, uint64_t head, Rest... rest) {
  return derive_seed(splitmix64(base ^ (head + 0x51ed2701ab55aa1dULL)), rest...);
}

// Deterministic RNG: the engine sequence is fixed by the standard and the
// distributions are hand-rolled, so streams are reproducible across
// standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    // xorshift* would do; splitmix64 counter mode keeps the state trivial.
    return splitmix64(state_ += 0x9e3779b97f4a7c15ULL);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return lo + static_cast<int64_t>(x % span);
  }

  bool coin() { return (next_u64() & 1) != 0; }

  // Box-Muller; the second value of the pair is discarded to keep the
  // stream position a pure function of call count.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  uint64_t state_;
};

}  // namespace nestseg
