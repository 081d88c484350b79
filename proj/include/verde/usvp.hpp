#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "verde/lattice/reducer.hpp"
#include "verde/lwe.hpp"

namespace verde {

struct UsvpConfig {
  int blocksize = 20;
  int max_loops = 20;
  std::int64_t embedding_factor = 1;
  bool check_each_loop = true;
  double delta = 0.99;
  std::vector<int> precision_bits{53, 106, 212};
  /// Samples used for the embedding; 0 means m = n.
  int samples = 0;
};

struct UsvpResult {
  std::optional<Secret> secret;
  int loops_used = 0;
  double wall_seconds = 0.0;
  double best_norm = 0.0;
  int precision_bits = 0;
};

/// Kannan embedding with the q-rows first:
///   [ q I_m   0    0 ]
///   [ A^T     I_n  0 ]
///   [ b       0    M ]
/// (-e, s, -M) is a short lattice vector.
inline lattice::Basis kannan_embedding(const SampleSet& originals, int m, std::int64_t M) {
  const int n = originals.params.n();
  const auto q = originals.params.q();
  if (m < 1 || m > static_cast<int>(originals.size())) throw std::invalid_argument("kannan_embedding: not enough samples");
  if (M < 1) throw std::invalid_argument("kannan_embedding: embedding factor must be positive");
  const int d = m + n + 1;
  lattice::Basis B(static_cast<std::size_t>(d), IntVec(static_cast<std::size_t>(d), 0));
  for (int i = 0; i < m; ++i) B[i][i] = q;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < m; ++i) B[m + j][i] = originals.samples[i].a[j];
    B[m + j][m + j] = 1;
  }
  for (int i = 0; i < m; ++i) B[m + n][i] = originals.samples[i].b;
  B[m + n][m + n] = M;
  return B;
}

/// Reads a secret off a row whose last coordinate is +-M; nullopt if the entries fit no known distribution.
inline std::optional<Secret> secret_from_row(const IntVec& row, int m, int n, std::int64_t M) {
  const auto last = row[static_cast<std::size_t>(m + n)];
  if (last != M && last != -M) return std::nullopt;
  const std::int64_t sign = last == -M ? 1 : -1;
  IntVec s(static_cast<std::size_t>(n));
  std::int64_t lo = 0, hi = 0;
  for (int j = 0; j < n; ++j) {
    s[j] = sign * row[static_cast<std::size_t>(m + j)];
    lo = std::min(lo, s[j]);
    hi = std::max(hi, s[j]);
  }
  SecretDist dist;
  if (lo >= 0 && hi <= 1) {
    dist = SecretDist::Binary;
  } else if (lo >= -1 && hi <= 1) {
    dist = SecretDist::Ternary;
  } else if (lo >= -kGaussianSecretBound && hi <= kGaussianSecretBound) {
    dist = SecretDist::Gaussian;
  } else {
    return std::nullopt;
  }
  return Secret(dist, std::move(s));
}

/// LLL, then BKZ tours; after each loop every +-M row is turned into a guess and verified.
inline UsvpResult usvp_attack(const SampleSet& originals, const UsvpConfig& cfg) {
  if (originals.kind != SampleKind::Original) throw std::invalid_argument("usvp_attack: expects the original samples");
  const int n = originals.params.n();
  const int m = cfg.samples > 0 ? cfg.samples : n;
  const int d = m + n + 1;
  if (cfg.blocksize < 2 || cfg.blocksize > d) throw std::invalid_argument("usvp_attack: blocksize must lie in [2, dimension]");
  if (cfg.max_loops < 1) throw std::invalid_argument("usvp_attack: max_loops must be >= 1");
  const auto start = std::chrono::steady_clock::now();

  lattice::AdaptiveReducer red(kannan_embedding(originals, m, cfg.embedding_factor), cfg.precision_bits);
  UsvpResult out;
  out.best_norm = INFINITY;

  auto check = [&]() -> bool {
    for (const auto& row : red.basis()) {
      const double norm = std::sqrt(static_cast<double>(dot_exact(row, row)));
      if (norm > 0.0) out.best_norm = std::min(out.best_norm, norm);
      auto guess = secret_from_row(row, m, n, cfg.embedding_factor);
      if (guess && verify_secret(*guess, originals).accepted) {
        out.secret = std::move(guess);
        return true;
      }
    }
    return false;
  };

  red.lll(cfg.delta);
  const bool done = cfg.check_each_loop && check();
  for (int loop = 1; !done && loop <= cfg.max_loops; ++loop) {
    const bool changed = red.bkz_tour(cfg.blocksize, cfg.delta);
    out.loops_used = loop;
    if ((cfg.check_each_loop || !changed || loop == cfg.max_loops) && check()) break;
    if (!changed) break;
  }
  out.precision_bits = red.precision_bits();
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace verde
