#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "verde/lwe.hpp"

namespace verde {

/// NoMod percentage at or above which recovery is empirically expected.
inline constexpr double kNoModThreshold = 67.0;

struct NoModReport {
  double percentage = 0.0;
  std::size_t sample_count = 0;
  bool threshold_hit = false;
};

/// x = a_c . s - b_c over the integers, with a and b centered into (-q/2, q/2].
inline std::int64_t nomod_residual(const LweSample& s, const Secret& secret, std::int64_t q) {
  __int128 acc = 0;
  for (std::size_t i = 0; i < s.a.size(); ++i) acc += static_cast<__int128>(center(s.a[i], q)) * secret.entries()[i];
  return static_cast<std::int64_t>(acc - center(s.b, q));
}

/// Share of samples whose b needed no modular wrap given the (known) secret.
inline NoModReport nomod(const SampleSet& set, const Secret& secret) {
  if (secret.n() != set.params.n()) throw std::invalid_argument("nomod: secret dimension mismatch");
  const auto q = set.params.q();
  std::size_t hits = 0;
  for (const auto& s : set.samples) {
    if (static_cast<int>(s.a.size()) != secret.n()) throw std::invalid_argument("nomod: sample dimension mismatch");
    const std::int64_t x = nomod_residual(s, secret, q);
    if (2 * static_cast<__int128>(x < 0 ? -x : x) < q) ++hits;
  }
  NoModReport r;
  r.sample_count = set.size();
  r.percentage = set.empty() ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(set.size());
  r.threshold_hit = r.percentage >= kNoModThreshold;
  return r;
}

/// Histogram of the NoMod residuals in bins of `bin_width`, keyed by bin lower edge.
inline std::map<std::int64_t, std::size_t> nomod_histogram(const SampleSet& set, const Secret& secret, std::int64_t bin_width) {
  if (bin_width < 1) throw std::invalid_argument("nomod_histogram: bin width must be positive");
  std::map<std::int64_t, std::size_t> hist;
  for (const auto& s : set.samples) {
    const std::int64_t x = nomod_residual(s, secret, set.params.q());
    std::int64_t bin = x >= 0 ? x / bin_width : -((-x + bin_width - 1) / bin_width);
    ++hist[bin * bin_width];
  }
  return hist;
}

struct ScalingPrediction {
  double sigma_a = 0.0;
  double sigma_x = 0.0;
  int max_h = 0;
  bool recoverable = false;
};

/// sigma_x ~ sqrt(h) sigma_a + sigma_e; recoverable while sigma_x <= q/2.
inline ScalingPrediction scaling_predict(const LweParams& params, double sigma_a, int h) {
  if (!(sigma_a > 0.0)) throw std::invalid_argument("scaling_predict: sigma_a must be positive");
  if (h < 0) throw std::invalid_argument("scaling_predict: h must be non-negative");
  const auto q = static_cast<double>(params.q());
  ScalingPrediction p;
  p.sigma_a = sigma_a;
  p.sigma_x = std::sqrt(static_cast<double>(h)) * sigma_a + params.sigma_e();
  // The bounds are often met exactly (h = 3 for uniform data); absorb rounding there.
  p.recoverable = p.sigma_x <= q / 2.0 * (1.0 + 1e-12);
  const double ratio = q / (2.0 * sigma_a);
  p.max_h = static_cast<int>(std::floor(ratio * ratio * (1.0 + 1e-12)));
  return p;
}

/// Reduction factor to sigma_a: alpha * q / sqrt(12).
inline double sigma_a_for_factor(std::int64_t q, double factor) {
  return factor * static_cast<double>(q) / std::sqrt(12.0);
}

/// Probability that k coordinates chosen at random are all zero: ((n - h)/n)^k.
inline double kickout_probability(int n, int h, int k) {
  if (n < 1 || h < 0 || h > n) throw std::invalid_argument("kickout_probability: need 0 <= h <= n");
  if (k < 0) throw std::invalid_argument("kickout_probability: k must be non-negative");
  if (k > n - h) throw std::invalid_argument("kickout_probability: cannot kick out more zeros than exist");
  if (k == 0) return 1.0;
  return std::pow(static_cast<double>(n - h) / static_cast<double>(n), k);
}

/// Expected cost of the kick-out loop: base_cost / p.
inline double kickout_expected_cost(double base_cost, int n, int h, int k) {
  const double p = kickout_probability(n, h, k);
  return p > 0.0 ? base_cost / p : INFINITY;
}

}  // namespace verde
