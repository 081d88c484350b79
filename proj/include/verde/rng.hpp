#pragma once

#include <cstdint>
#include <limits>
#include <span>

namespace verde {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: draw i of stream (seed, stream) is mix64(key + i * gamma).
///
/// Every module derives its randomness from one of these, so any stage can be
/// replayed from its seed alone. Distinct streams of one seed are independent
/// for all practical purposes, which is how per-matrix and per-query
/// randomness is split without sharing mutable state.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(mix64(mix64(seed) ^ mix64(stream * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return mix64(key_ + kGamma * counter_++); }

  /// Independent child stream, e.g. one per matrix or per query.
  [[nodiscard]] CounterRng substream(std::uint64_t id) const noexcept { return CounterRng(key_, id + 1); }

  [[nodiscard]] std::uint64_t position() const noexcept { return counter_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// FNV-1a over 64-bit words; used to key per-query streams and artifact stamps.
inline std::uint64_t hash_words(std::span<const std::int64_t> words, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept {
  std::uint64_t h = basis;
  for (std::int64_t w : words) {
    auto u = static_cast<std::uint64_t>(w);
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (u >> (8 * byte)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline std::uint64_t hash_bytes(std::span<const char> bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept {
  std::uint64_t h = basis;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace verde
