#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fskd {

// Deterministic stream generator (splitmix64). Every randomized component
// draws from its own named stream derived from the master seed, so reruns
// of any single component reproduce its output exactly.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), n > 0. Multiply-shift; bias is < 2^-32 per draw.
  int uniform_int(int n) {
    return static_cast<int>((static_cast<unsigned __int128>(next()) *
                             static_cast<unsigned __int128>(n)) >> 64);
  }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + uniform_int(hi_inclusive - lo + 1);
  }

  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(xs[i - 1], xs[j]);
    }
  }

  // k distinct values out of [0, n), in draw order.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    std::vector<int> out;
    out.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k && !pool.empty(); ++i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(pool.size())));
      out.push_back(pool[j]);
      pool.erase(pool.begin() + static_cast<long>(j));
    }
    return out;
  }

 private:
  uint64_t state_;
};

namespace detail {
inline uint64_t fnv1a_step(uint64_t h, uint64_t x) {
  for (int i = 0; i < 8; ++i) {
    h ^= (x >> (8 * i)) & 0xffULL;
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

// Named sub-stream seeds: master seed + tag + up to two indices.
inline uint64_t derive_seed(uint64_t master, std::string_view tag,
                            uint64_t a = 0, uint64_t b = 0) {
  uint64_t h = 0xcbf29ce484222325ULL;
  h = detail::fnv1a_step(h, master);
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  h = detail::fnv1a_step(h, a);
  h = detail::fnv1a_step(h, b);
  // one splitmix finalization round to spread low-entropy inputs
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

}  // namespace fskd
