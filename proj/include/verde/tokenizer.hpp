#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

#include "verde/io.hpp"
#include "verde/lwe.hpp"

namespace verde {

/// Two-token integer encoding: hi = v / B, lo = (v mod B) / r.
class TokenScheme {
 public:
  static constexpr std::int64_t kMaxLoTokens = 2000;

  TokenScheme(std::int64_t q, std::int64_t base, std::int64_t bucket) : q_(q), base_(base), bucket_(bucket) {
    if (q < 2) throw std::invalid_argument("TokenScheme: q must be >= 2");
    if (base < 1 || base > q) throw std::invalid_argument("TokenScheme: base must lie in [1, q]");
    if (bucket < 1 || bucket > base) throw std::invalid_argument("TokenScheme: bucket size must lie in [1, B]");
    if (lo_tokens() > kMaxLoTokens)
      throw std::invalid_argument("TokenScheme: ceil(B/r) = " + std::to_string(lo_tokens()) + " exceeds the vocabulary bound");
  }

  /// Default base: ceil(q/8), or ceil(q/16) once log2 q > 30.
  static std::int64_t default_base(std::int64_t q) {
    const int divisor = std::bit_width(static_cast<std::uint64_t>(q - 1)) > 30 ? 16 : 8;
    return (q + divisor - 1) / divisor;
  }

  static TokenScheme for_modulus(std::int64_t q, std::int64_t bucket = 1, std::optional<std::int64_t> base = std::nullopt) {
    return TokenScheme(q, base.value_or(default_base(q)), bucket);
  }

  [[nodiscard]] std::int64_t q() const noexcept { return q_; }
  [[nodiscard]] std::int64_t base() const noexcept { return base_; }
  [[nodiscard]] std::int64_t bucket() const noexcept { return bucket_; }
  [[nodiscard]] std::int64_t hi_tokens() const noexcept { return (q_ + base_ - 1) / base_; }
  [[nodiscard]] std::int64_t lo_tokens() const noexcept { return (base_ + bucket_ - 1) / bucket_; }
  [[nodiscard]] std::int64_t vocab_size() const noexcept { return hi_tokens() + lo_tokens(); }

  struct Tokens {
    std::int64_t hi;
    std::int64_t lo;
    friend bool operator==(const Tokens&, const Tokens&) = default;
  };

  [[nodiscard]] Tokens encode(std::int64_t v) const {
    if (v < 0 || v >= q_) throw std::invalid_argument("TokenScheme::encode: value " + std::to_string(v) + " outside [0,q)");
    return {v / base_, (v % base_) / bucket_};
  }

  /// Lower edge of the bucket: within r of the encoded value.
  [[nodiscard]] std::int64_t decode(Tokens t) const noexcept { return base_ * t.hi + bucket_ * t.lo; }

  [[nodiscard]] std::int64_t lo_token(std::int64_t v) const { return encode(v).lo; }

 private:
  std::int64_t q_;
  std::int64_t base_;
  std::int64_t bucket_;
};

/// Token file: header "q=.. B=.. r=.. n=..", then per sample 2n input tokens and 2 target tokens.
inline void write_token_file(std::ostream& os, const SampleSet& set, const TokenScheme& scheme) {
  if (scheme.q() != set.params.q()) throw std::invalid_argument("export_dataset: token scheme modulus differs from the samples");
  os << "q=" << scheme.q() << " B=" << scheme.base() << " r=" << scheme.bucket() << " n=" << set.params.n() << '\n';
  for (const auto& s : set.samples) {
    for (std::int64_t v : s.a) {
      auto t = scheme.encode(v);
      os << t.hi << ' ' << t.lo << ' ';
    }
    auto t = scheme.encode(s.b);
    os << t.hi << ' ' << t.lo << '\n';
  }
}

inline void export_dataset(const SampleSet& set, const TokenScheme& scheme, const std::filesystem::path& path) {
  if (scheme.q() != set.params.q()) throw std::invalid_argument("export_dataset: token scheme modulus differs from the samples");
  io::write_file(path, [&](std::ostream& os) { write_token_file(os, set, scheme); });
}

}  // namespace verde
