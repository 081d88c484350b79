#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "verde/lwe.hpp"
#include "verde/rng.hpp"

namespace verde {

/// Column permutation: entry j of the permuted vector is entry pi[j] of the original.
class Permutation {
 public:
  explicit Permutation(std::vector<int> pi) : pi_(std::move(pi)) {
    std::vector<char> seen(pi_.size(), 0);
    for (int v : pi_) {
      if (v < 0 || v >= static_cast<int>(pi_.size()) || seen[v]) throw std::invalid_argument("Permutation: not a bijection");
      seen[v] = 1;
    }
  }

  static Permutation identity(int n) {
    std::vector<int> pi(static_cast<std::size_t>(n));
    std::iota(pi.begin(), pi.end(), 0);
    return Permutation(std::move(pi));
  }

  static Permutation random(int n, std::uint64_t seed) {
    std::vector<int> pi(static_cast<std::size_t>(n));
    std::iota(pi.begin(), pi.end(), 0);
    CounterRng rng(seed, 0x9e47);
    std::shuffle(pi.begin(), pi.end(), rng);
    return Permutation(std::move(pi));
  }

  [[nodiscard]] int size() const noexcept { return static_cast<int>(pi_.size()); }
  [[nodiscard]] const std::vector<int>& indices() const noexcept { return pi_; }

  [[nodiscard]] Permutation inverse() const {
    std::vector<int> inv(pi_.size());
    for (std::size_t j = 0; j < pi_.size(); ++j) inv[pi_[j]] = static_cast<int>(j);
    return Permutation(std::move(inv));
  }

  [[nodiscard]] IntVec apply(const IntVec& v) const {
    if (v.size() != pi_.size()) throw std::invalid_argument("Permutation::apply: length mismatch");
    IntVec out(v.size());
    for (std::size_t j = 0; j < pi_.size(); ++j) out[j] = v[pi_[j]];
    return out;
  }

  [[nodiscard]] Secret apply(const Secret& s) const { return Secret(s.dist(), apply(s.entries())); }

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> pi_;
};

/// Permutes the columns of every a; b is untouched, so the implied secret is pi(s).
inline SampleSet permute_vectors(const SampleSet& set, const Permutation& pi) {
  if (pi.size() != set.params.n()) throw std::invalid_argument("permute: permutation size differs from n");
  SampleSet out{set.params, {}, set.kind, set.seed};
  out.samples.reserve(set.size());
  for (const auto& s : set.samples) out.samples.push_back({pi.apply(s.a), s.b});
  return out;
}

inline SampleSet permute_instance(const SampleSet& originals, const Permutation& pi) {
  if (originals.kind != SampleKind::Original) throw std::invalid_argument("permute_instance: expects the original samples");
  return permute_vectors(originals, pi);
}

namespace detail {

inline std::vector<char> index_mask(int n, const std::vector<int>& idx, const char* who) {
  std::vector<char> mask(static_cast<std::size_t>(n), 0);
  for (int i : idx) {
    if (i < 0 || i >= n) throw std::invalid_argument(std::string(who) + ": index " + std::to_string(i) + " out of range");
    if (mask[i]) throw std::invalid_argument(std::string(who) + ": index " + std::to_string(i) + " repeated");
    mask[i] = 1;
  }
  return mask;
}

}  // namespace detail

/// Removes the listed coordinates from every a. Valid when those secret entries are zero.
inline SampleSet dimension_reduce(const SampleSet& set, const std::vector<int>& drop) {
  const int n = set.params.n();
  const auto mask = detail::index_mask(n, drop, "dimension_reduce");
  const int kept = n - static_cast<int>(drop.size());
  if (kept < 1) throw std::invalid_argument("dimension_reduce: nothing left");
  SampleSet out{LweParams(kept, set.params.q(), set.params.sigma_e()), {}, set.kind, set.seed};
  out.samples.reserve(set.size());
  for (const auto& s : set.samples) {
    LweSample r;
    r.a.reserve(static_cast<std::size_t>(kept));
    for (int i = 0; i < n; ++i)
      if (!mask[i]) r.a.push_back(s.a[i]);
    r.b = s.b;
    out.samples.push_back(std::move(r));
  }
  return out;
}

inline Secret dimension_reduce(const Secret& s, const std::vector<int>& drop) {
  const auto mask = detail::index_mask(s.n(), drop, "dimension_reduce");
  IntVec e;
  for (int i = 0; i < s.n(); ++i)
    if (!mask[i]) e.push_back(s.entries()[i]);
  return Secret(s.dist(), std::move(e));
}

/// Inverse of dimension_reduce on secrets: zeros go back at the dropped positions.
inline Secret lift_secret(const Secret& reduced, const std::vector<int>& drop, int n) {
  const auto mask = detail::index_mask(n, drop, "lift_secret");
  if (reduced.n() + static_cast<int>(drop.size()) != n) throw std::invalid_argument("lift_secret: sizes do not add up");
  IntVec e(static_cast<std::size_t>(n), 0);
  for (int i = 0, k = 0; i < n; ++i)
    if (!mask[i]) e[i] = reduced.entries()[k++];
  return Secret(reduced.dist(), std::move(e));
}

/// a'_i = -a_i on S, b' = b - sum_{i in S} a_i. For binary s the implied secret flips to 1 - s_i on S.
inline SampleSet hamming_reduce(const SampleSet& set, const std::vector<int>& S, SecretDist context = SecretDist::Binary,
                                std::vector<std::string>* warnings = nullptr) {
  const auto q = set.params.q();
  detail::index_mask(set.params.n(), S, "hamming_reduce");
  if (context != SecretDist::Binary && warnings)
    warnings->push_back("hamming_reduce: the flipped-secret identity only holds for binary secrets");
  SampleSet out{set.params, {}, set.kind, set.seed};
  out.samples.reserve(set.size());
  for (const auto& s : set.samples) {
    LweSample r{s.a, s.b};
    __int128 shift = 0;
    for (int i : S) {
      shift += s.a[i];
      r.a[i] = mod_q(-s.a[i], q);
    }
    r.b = mod_q(static_cast<__int128>(s.b) - shift, q);
    out.samples.push_back(std::move(r));
  }
  return out;
}

inline Secret hamming_flip(const Secret& s, const std::vector<int>& S) {
  if (s.dist() != SecretDist::Binary) throw std::invalid_argument("hamming_flip: binary secrets only");
  detail::index_mask(s.n(), S, "hamming_flip");
  IntVec e = s.entries();
  for (int i : S) e[i] = 1 - e[i];
  return Secret(SecretDist::Binary, std::move(e));
}

}  // namespace verde
