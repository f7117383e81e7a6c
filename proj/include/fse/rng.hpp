#pragma once

#include <cstdint>
#include <string_view>

namespace fse {

// Counter-based random streams. Every consumer of randomness (binarization,
// projection entries, weight init, shuffling, pair sampling) draws from a key
// derived from the master seed and a stream name, so regenerating any one
// stream never disturbs the others and nothing random has to be stored.

inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t stream_key(uint64_t master_seed, std::string_view name) {
  return mix64(master_seed ^ mix64(fnv1a64(name)));
}

inline uint64_t stream_key(uint64_t master_seed, std::string_view name, uint64_t index) {
  return mix64(stream_key(master_seed, name) ^ mix64(index * 0x9e3779b97f4a7c15ull + 0x7f4a7c15ull));
}

// Stateless hash for matrix entries: independent of traversal order, so the
// same (key, i, j) always yields the same value regardless of chunking.
inline uint64_t entry_hash(uint64_t key, uint64_t i, uint64_t j) {
  return mix64(key ^ mix64(i ^ 0xd1b54a32d192ed03ull) ^ (mix64(j) * 0x2545f4914f6cdd1dull));
}

inline double u64_to_unit_double(uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

class CounterRng {
 public:
  explicit CounterRng(uint64_t key) : key_(key) {}

  uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ull * ++ctr_); }

  double next_double() { return u64_to_unit_double(next_u64()); }  // [0,1)

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // uniform in [0, n); modulo bias is < n / 2^64, irrelevant at our scales
  int64_t next_below(int64_t n) { return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n)); }

  uint64_t counter() const { return ctr_; }

 private:
  uint64_t key_;
  uint64_t ctr_ = 0;
};

}  // namespace fse
