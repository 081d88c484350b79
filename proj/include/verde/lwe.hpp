#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "verde/rng.hpp"

namespace verde {

using IntVec = std::vector<std::int64_t>;

/// Standard deviation of narrow Gaussian secrets.
inline constexpr double kGaussianSecretSigma = 3.0;
/// Gaussian secret entries are clipped to |s_i| <= 6 * sigma.
inline constexpr std::int64_t kGaussianSecretBound = 18;

// ---------------------------------------------------------------------------
// Modular helpers

/// Representative of v in [0, q).
constexpr std::int64_t mod_q(std::int64_t v, std::int64_t q) noexcept {
  std::int64_t r = v % q;
  return r < 0 ? r + q : r;
}

constexpr std::int64_t mod_q(__int128 v, std::int64_t q) noexcept {
  auto r = static_cast<std::int64_t>(v % q);
  return r < 0 ? r + q : r;
}

/// Centered representative of v in (-q/2, q/2].
constexpr std::int64_t center(std::int64_t v, std::int64_t q) noexcept {
  std::int64_t r = mod_q(v, q);
  return r > q / 2 ? r - q : r;
}

constexpr std::int64_t center(__int128 v, std::int64_t q) noexcept {
  std::int64_t r = mod_q(v, q);
  return r > q / 2 ? r - q : r;
}

/// Exact integer inner product (no reduction).
inline __int128 dot_exact(std::span<const std::int64_t> x, std::span<const std::int64_t> y) noexcept {
  __int128 acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += static_cast<__int128>(x[i]) * y[i];
  return acc;
}

inline std::int64_t dot_mod(std::span<const std::int64_t> x, std::span<const std::int64_t> y, std::int64_t q) noexcept {
  return mod_q(dot_exact(x, y), q);
}

/// Circular distance between two residues mod q.
constexpr std::int64_t circ_diff(std::int64_t u, std::int64_t v, std::int64_t q) noexcept {
  std::int64_t d = mod_q(u - v, q);
  return std::min(d, q - d);
}

// ---------------------------------------------------------------------------
// Parameters and secrets

class LweParams {
 public:
  LweParams(int n, std::int64_t q, double sigma_e = 3.0) : n_(n), q_(q), sigma_e_(sigma_e) {
    if (n < 1) throw std::invalid_argument("LweParams: n must be >= 1");
    if (q < 2) throw std::invalid_argument("LweParams: q must be >= 2");
    if (q > (std::int64_t{1} << 62)) throw std::invalid_argument("LweParams: q exceeds 62 bits");
    if (!(sigma_e >= 0.0)) throw std::invalid_argument("LweParams: sigma_e must be non-negative");
    if (!(sigma_e < static_cast<double>(q) / 16.0)) throw std::invalid_argument("LweParams: sigma_e must be < q/16");
  }

  [[nodiscard]] int n() const noexcept { return n_; }
  [[nodiscard]] std::int64_t q() const noexcept { return q_; }
  [[nodiscard]] double sigma_e() const noexcept { return sigma_e_; }

  friend bool operator==(const LweParams&, const LweParams&) = default;

 private:
  int n_;
  std::int64_t q_;
  double sigma_e_;
};

enum class SecretDist { Binary, Ternary, Gaussian };

inline std::string_view to_string(SecretDist d) noexcept {
  switch (d) {
    case SecretDist::Binary: return "binary";
    case SecretDist::Ternary: return "ternary";
    case SecretDist::Gaussian: return "gaussian";
  }
  return "?";
}

inline SecretDist parse_secret_dist(std::string_view s) {
  if (s == "binary" || s == "b") return SecretDist::Binary;
  if (s == "ternary" || s == "t") return SecretDist::Ternary;
  if (s == "gaussian" || s == "g") return SecretDist::Gaussian;
  throw std::invalid_argument("unknown secret distribution '" + std::string(s) + "'");
}

class Secret {
 public:
  Secret(SecretDist dist, IntVec entries) : dist_(dist), entries_(std::move(entries)) {
    for (std::int64_t v : entries_) {
      bool ok = false;
      switch (dist_) {
        case SecretDist::Binary: ok = v == 0 || v == 1; break;
        case SecretDist::Ternary: ok = v >= -1 && v <= 1; break;
        case SecretDist::Gaussian: ok = v >= -kGaussianSecretBound && v <= kGaussianSecretBound; break;
      }
      if (!ok) {
        throw std::invalid_argument("Secret: entry " + std::to_string(v) + " not allowed for " +
                                    std::string(to_string(dist_)) + " secrets");
      }
    }
    h_ = static_cast<int>(std::count_if(entries_.begin(), entries_.end(), [](std::int64_t v) { return v != 0; }));
  }

  [[nodiscard]] SecretDist dist() const noexcept { return dist_; }
  [[nodiscard]] const IntVec& entries() const noexcept { return entries_; }
  [[nodiscard]] int n() const noexcept { return static_cast<int>(entries_.size()); }
  [[nodiscard]] int h() const noexcept { return h_; }

  /// Sorted indices of nonzero entries.
  [[nodiscard]] std::vector<int> support() const {
    std::vector<int> idx;
    for (int i = 0; i < n(); ++i)
      if (entries_[i] != 0) idx.push_back(i);
    return idx;
  }

  friend bool operator==(const Secret& a, const Secret& b) { return a.entries_ == b.entries_; }

 private:
  SecretDist dist_;
  IntVec entries_;
  int h_ = 0;
};

/// Exactly h nonzero entries at uniformly chosen positions.
inline Secret sample_secret(const LweParams& params, SecretDist dist, int h, std::uint64_t seed) {
  const int n = params.n();
  if (h <= 0) throw std::invalid_argument("sample_secret: h must be positive");
  if (h > n) throw std::invalid_argument("sample_secret: h exceeds n");
  CounterRng rng(seed, 0x5ec7e7);
  std::vector<int> positions(n);
  std::iota(positions.begin(), positions.end(), 0);
  std::shuffle(positions.begin(), positions.end(), rng);
  positions.resize(h);

  IntVec entries(n, 0);
  std::normal_distribution<double> gauss(0.0, kGaussianSecretSigma);
  for (int pos : positions) {
    switch (dist) {
      case SecretDist::Binary: entries[pos] = 1; break;
      case SecretDist::Ternary: entries[pos] = (rng() & 1U) ? 1 : -1; break;
      case SecretDist::Gaussian: {
        std::int64_t v = 0;
        while (v == 0 || v < -kGaussianSecretBound || v > kGaussianSecretBound) v = std::llround(gauss(rng));
        entries[pos] = v;
        break;
      }
    }
  }
  return Secret(dist, std::move(entries));
}

// ---------------------------------------------------------------------------
// Samples

struct LweSample {
  IntVec a;
  std::int64_t b = 0;
  friend bool operator==(const LweSample&, const LweSample&) = default;
};

enum class SampleKind { Original, Reduced, HeldOut };

inline std::string_view to_string(SampleKind k) noexcept {
  switch (k) {
    case SampleKind::Original: return "original";
    case SampleKind::Reduced: return "reduced";
    case SampleKind::HeldOut: return "heldout";
  }
  return "?";
}

inline SampleKind parse_sample_kind(std::string_view s) {
  if (s == "original") return SampleKind::Original;
  if (s == "reduced") return SampleKind::Reduced;
  if (s == "heldout") return SampleKind::HeldOut;
  throw std::invalid_argument("unknown sample kind '" + std::string(s) + "'");
}

struct SampleSet {
  LweParams params;
  std::vector<LweSample> samples;
  SampleKind kind = SampleKind::Original;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
  [[nodiscard]] bool empty() const noexcept { return samples.empty(); }

  /// Throws if any sample has the wrong length or an entry outside [0, q).
  void validate() const {
    const auto q = params.q();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      if (static_cast<int>(s.a.size()) != params.n())
        throw std::invalid_argument("SampleSet: sample " + std::to_string(i) + " has wrong dimension");
      auto out_of_range = [q](std::int64_t v) { return v < 0 || v >= q; };
      if (out_of_range(s.b) || std::any_of(s.a.begin(), s.a.end(), out_of_range))
        throw std::invalid_argument("SampleSet: sample " + std::to_string(i) + " has an entry outside [0,q)");
    }
  }

  friend bool operator==(const SampleSet&, const SampleSet&) = default;
};

/// Rounded Gaussian error of width sigma (0 when sigma == 0).
template <class Rng>
std::int64_t sample_error(double sigma, Rng& rng) {
  if (sigma == 0.0) return 0;
  std::normal_distribution<double> gauss(0.0, sigma);
  return std::llround(gauss(rng));
}

/// b = a.s + e mod q with a uniform and e rounded Gaussian; the drawn errors go to `error_log` when given.
inline SampleSet gen_samples(const LweParams& params, const Secret& secret, std::size_t count, std::uint64_t seed,
                             IntVec* error_log = nullptr) {
  if (count == 0) throw std::invalid_argument("gen_samples: count must be >= 1");
  if (secret.n() != params.n()) throw std::invalid_argument("gen_samples: secret dimension mismatch");
  const int n = params.n();
  const auto q = params.q();
  CounterRng rng(seed, 0x5a3b1e);
  std::uniform_int_distribution<std::int64_t> uniform(0, q - 1);
  std::normal_distribution<double> gauss(0.0, params.sigma_e() > 0 ? params.sigma_e() : 1.0);

  SampleSet set{params, {}, SampleKind::Original, seed};
  set.samples.reserve(count);
  if (error_log) error_log->clear();
  for (std::size_t k = 0; k < count; ++k) {
    LweSample s;
    s.a.resize(n);
    for (auto& v : s.a) v = uniform(rng);
    const std::int64_t e = params.sigma_e() > 0 ? std::llround(gauss(rng)) : 0;
    s.b = mod_q(dot_exact(s.a, secret.entries()) + e, q);
    if (error_log) error_log->push_back(e);
    set.samples.push_back(std::move(s));
  }
  return set;
}

/// Default size of the original sample pool: 4n.
inline std::size_t default_original_count(const LweParams& p) { return 4 * static_cast<std::size_t>(p.n()); }

// ---------------------------------------------------------------------------
// Verification

/// Fraction of |a.s' - b| < q/4 needed to accept a guess.
inline constexpr double kVerifyAcceptFraction = 0.99;

struct Verification {
  bool accepted = false;
  double residual_std = 0.0;
  double frac_small = 0.0;
};

/// Residual test on the original samples: a correct guess leaves only the small LWE error.
inline Verification verify_secret(const Secret& guess, const SampleSet& originals) {
  if (originals.kind != SampleKind::Original) throw std::invalid_argument("verify_secret: expects the original samples");
  if (originals.empty()) throw std::invalid_argument("verify_secret: empty sample set");
  if (guess.n() != originals.params.n()) throw std::invalid_argument("verify_secret: dimension mismatch");
  const auto q = originals.params.q();
  std::size_t small = 0;
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& s : originals.samples) {
    const std::int64_t x = center(dot_exact(s.a, guess.entries()) - s.b, q);
    if (4 * static_cast<__int128>(x < 0 ? -x : x) < q) ++small;
    sum += static_cast<double>(x);
    sum_sq += static_cast<double>(x) * static_cast<double>(x);
  }
  const auto m = static_cast<double>(originals.size());
  Verification v;
  v.frac_small = static_cast<double>(small) / m;
  const double mean = sum / m;
  v.residual_std = std::sqrt(std::max(0.0, sum_sq / m - mean * mean));
  v.accepted = v.frac_small >= kVerifyAcceptFraction;
  return v;
}

}  // namespace verde
