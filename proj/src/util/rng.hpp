#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fedlt::util {

// splitmix64 finalizer; used to turn (seed, purpose, args...) into stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent stream seed from the root seed, a purpose tag
/// ("data", "partition", "augment", "sampling", "init", "client", ...) and
/// optional integer arguments (round, client id, ...).
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose,
                                 std::initializer_list<std::uint64_t> args = {}) {
  std::uint64_t h = mix64(root ^ hash_tag(purpose));
  for (std::uint64_t a : args) h = mix64(h ^ a);
  return h;
}

/// Deterministic RNG stream. Confined to one execution context; every client
/// and every purpose gets its own instance so parallel and serial schedules
/// draw identical values.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(eng_);
  }

  double normal(double mean = 0.0, double sigma = 1.0) {
    std::normal_distribution<double> d(mean, sigma);
    return d(eng_);
  }

  double gamma(double shape, double scale = 1.0) {
    std::gamma_distribution<double> d(shape, scale);
    return d(eng_);
  }

  std::size_t index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(eng_);
  }

  bool bernoulli(double p) {
    std::bernoulli_distribution d(p);
    return d(eng_);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace fedlt::util
