#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "verde/error.hpp"
#include "verde/lwe.hpp"
#include "verde/oracle.hpp"
#include "verde/rng.hpp"

namespace verde {

/// Number of test vectors the distinguishers draw from the held-out set.
inline constexpr std::size_t kTestVectors = 128;

/// Two-bit probe offsets as fractions of q.
inline constexpr std::array<std::pair<int, int>, 3> kTwoBitShifts{{{1, 7}, {1, 3}, {2, 5}}};

/// Classification margin: scores within this fraction of the median reference are ties.
inline constexpr double kTieTolerance = 0.05;

struct BitScores {
  std::vector<double> scores;
  std::vector<std::string> diagnostics;
};

/// Oracle failure mid-scoring; carries the scores computed so far (unfinished bits are NaN).
class RecoveryAborted : public Error {
 public:
  RecoveryAborted(const std::string& what, BitScores partial) : Error(what), partial_(std::move(partial)) {}
  [[nodiscard]] const BitScores& partial() const noexcept { return partial_; }

 private:
  BitScores partial_;
};

namespace detail {

inline std::vector<IntVec> test_vectors(const SampleSet& heldout, std::vector<std::string>& diag) {
  if (heldout.empty()) throw std::invalid_argument("distinguisher: no held-out vectors");
  const std::size_t count = std::min(kTestVectors, heldout.size());
  if (count < kTestVectors)
    diag.push_back("only " + std::to_string(count) + " held-out vectors available, using all of them");
  std::vector<IntVec> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(heldout.samples[k].a);
  return out;
}

/// One K per test vector, uniform in the open interval (0.3q, 0.7q).
inline std::vector<std::int64_t> draw_offsets(std::size_t count, std::int64_t q, std::uint64_t seed) {
  const auto lo = static_cast<std::int64_t>(std::floor(0.3 * static_cast<double>(q))) + 1;
  const auto hi = static_cast<std::int64_t>(std::ceil(0.7 * static_cast<double>(q))) - 1;
  if (lo > hi) throw std::invalid_argument("distinguisher: q too small for the offset range");
  CounterRng rng(seed, 0xd157);
  std::uniform_int_distribution<std::int64_t> pick(lo, hi);
  std::vector<std::int64_t> ks(count);
  for (auto& k : ks) k = pick(rng);
  return ks;
}

/// Runs score(i) for every bit, threading when the oracle allows it.
inline void for_each_bit(int n, bool parallel, unsigned jobs, const std::function<void(int)>& score,
                         std::vector<double>& scores) {
  std::fill(scores.begin(), scores.end(), std::nan(""));
  if (jobs == 0) jobs = std::max(1U, std::thread::hardware_concurrency());
  if (!parallel || jobs <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) score(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < std::min<unsigned>(jobs, static_cast<unsigned>(n)); ++t) {
      pool.emplace_back([&] {
        for (int i = next++; i < n; i = next++) {
          try {
            score(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

template <class Fn>
BitScores guarded(int n, BitScores out, bool parallel, unsigned jobs, Fn&& per_bit) {
  out.scores.assign(static_cast<std::size_t>(n), 0.0);
  try {
    for_each_bit(n, parallel, jobs, [&](int i) { out.scores[static_cast<std::size_t>(i)] = per_bit(i); }, out.scores);
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception& e) {
    out.diagnostics.push_back(std::string("oracle failure: ") + e.what());
    throw RecoveryAborted(std::string("distinguisher aborted: ") + e.what(), std::move(out));
  }
  return out;
}

}  // namespace detail

/// Sum over test vectors of circ_diff(M(a), M(a + K e_i)).
inline BitScores one_bit_scores(PredictionOracle& oracle, const SampleSet& heldout, std::uint64_t seed, unsigned jobs = 1) {
  const auto q = oracle.modulus();
  if (q != heldout.params.q()) throw std::invalid_argument("one_bit_scores: oracle modulus differs from the samples");
  BitScores out;
  const auto tests = detail::test_vectors(heldout, out.diagnostics);
  const auto ks = detail::draw_offsets(tests.size(), q, seed);
  std::vector<std::int64_t> base;
  try {
    base = oracle.predict(tests);
  } catch (const std::exception& e) {
    out.scores.assign(static_cast<std::size_t>(heldout.params.n()), std::nan(""));
    throw RecoveryAborted(std::string("distinguisher aborted: ") + e.what(), std::move(out));
  }
  return detail::guarded(heldout.params.n(), std::move(out), oracle.concurrent_safe(), jobs, [&](int i) {
    std::vector<IntVec> moved = tests;
    for (std::size_t k = 0; k < moved.size(); ++k) moved[k][i] = mod_q(moved[k][i] + ks[k], q);
    const auto pred = oracle.predict(moved);
    double s = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) s += static_cast<double>(circ_diff(base[k], pred[k], q));
    return s;
  });
}

/// Earth mover's distance between two distributions on 0..k-1 with unit ground distance.
inline double emd_1d(const Distribution& p, const Distribution& r) {
  if (p.size() != r.size()) throw std::invalid_argument("emd_1d: length mismatch");
  double cp = 0.0, cr = 0.0, total = 0.0;
  for (std::size_t t = 0; t + 1 < p.size(); ++t) {
    cp += p[t];
    cr += r[t];
    total += std::abs(cp - cr);
  }
  return total;
}

/// Sum over test vectors of squared EMD between lo-token distributions; falls back to one_bit_scores.
inline BitScores emd_distinguisher_scores(PredictionOracle& oracle, const SampleSet& heldout, std::uint64_t seed,
                                          unsigned jobs = 1) {
  if (!oracle.supports_distribution()) {
    auto s = one_bit_scores(oracle, heldout, seed, jobs);
    s.diagnostics.push_back("oracle has no distributions; used the one-bit distinguisher");
    return s;
  }
  const auto q = oracle.modulus();
  if (q != heldout.params.q()) throw std::invalid_argument("emd_distinguisher_scores: oracle modulus differs from the samples");
  BitScores out;
  const auto tests = detail::test_vectors(heldout, out.diagnostics);
  const auto ks = detail::draw_offsets(tests.size(), q, seed);
  std::vector<Distribution> base;
  try {
    base = oracle.predict_distribution(tests);
  } catch (const std::exception& e) {
    out.scores.assign(static_cast<std::size_t>(heldout.params.n()), std::nan(""));
    throw RecoveryAborted(std::string("distinguisher aborted: ") + e.what(), std::move(out));
  }
  return detail::guarded(heldout.params.n(), std::move(out), oracle.concurrent_safe(), jobs, [&](int i) {
    std::vector<IntVec> moved = tests;
    for (std::size_t k = 0; k < moved.size(); ++k) moved[k][i] = mod_q(moved[k][i] + ks[k], q);
    const auto pred = oracle.predict_distribution(moved);
    double s = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const double d = emd_1d(base[k], pred[k]);
      s += d * d;
    }
    return s;
  });
}

/// Uniform test vectors in place of reduced held-out ones.
inline SampleSet random_test_vectors(const LweParams& params, std::size_t count, std::uint64_t seed) {
  CounterRng rng(seed, 0x7e57);
  std::uniform_int_distribution<std::int64_t> uniform(0, params.q() - 1);
  SampleSet out{params, {}, SampleKind::HeldOut, seed};
  out.samples.resize(count);
  for (auto& s : out.samples) {
    s.a.resize(static_cast<std::size_t>(params.n()));
    for (auto& v : s.a) v = uniform(rng);
  }
  return out;
}

/// Indices of the h largest scores; equal scores resolve to the lower index.
inline std::vector<int> top_h(const std::vector<double>& scores, int h, std::vector<std::string>* diag = nullptr) {
  const int n = static_cast<int>(scores.size());
  if (h < 0 || h > n) throw std::invalid_argument("top_h: h out of range");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  if (diag && h > 0 && h < n && scores[idx[h - 1]] == scores[idx[h]]) {
    diag->push_back("tie at rank " + std::to_string(h) + ": bits " + std::to_string(idx[h - 1]) + " and " +
                    std::to_string(idx[h]) + " share score " + io::format_double(scores[idx[h]]));
  }
  idx.resize(h);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---------------------------------------------------------------------------
// Two-bit distinguisher

struct SignClasses {
  std::vector<int> same;      // shares the sign of the anchor (lowest support index)
  std::vector<int> opposite;
  Secret plus;                // same = +1, opposite = -1
  Secret minus;               // -plus
  bool low_confidence = false;
  std::vector<std::pair<Secret, Secret>> alternatives;  // other partitions when ties were seen
  std::vector<std::string> diagnostics;
};

namespace detail {

inline Secret signed_guess(int n, const std::vector<int>& same, const std::vector<int>& opposite) {
  IntVec e(static_cast<std::size_t>(n), 0);
  for (int i : same) e[i] = 1;
  for (int j : opposite) e[j] = -1;
  return Secret(SecretDist::Ternary, std::move(e));
}

inline Secret negated(const Secret& s) {
  IntVec e = s.entries();
  for (auto& v : e) v = -v;
  return Secret(SecretDist::Ternary, std::move(e));
}

}  // namespace detail

/// Splits the support into same-sign and opposite-sign classes relative to its lowest index.
///
/// Disagreement of (i, j) averages a swap probe and three (+c, -c) probes; each
/// is compared against the change caused by shifting a_i alone, and j joins the
/// anchor's class when the disagreement is under half that reference.
inline SignClasses two_bit_classes(PredictionOracle& oracle, const SampleSet& heldout, const std::vector<int>& support) {
  if (support.empty()) throw std::invalid_argument("two_bit_classes: empty support");
  const int n = heldout.params.n();
  const auto q = oracle.modulus();
  for (int i : support)
    if (i < 0 || i >= n) throw std::invalid_argument("two_bit_classes: support index out of range");
  std::vector<std::string> diag;
  const auto tests = detail::test_vectors(heldout, diag);
  const auto base = oracle.predict(tests);

  auto total_change = [&](const std::function<void(IntVec&)>& edit) {
    std::vector<IntVec> moved = tests;
    for (auto& a : moved) edit(a);
    const auto pred = oracle.predict(moved);
    double s = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) s += static_cast<double>(circ_diff(base[k], pred[k], q));
    return s;
  };

  std::vector<std::int64_t> shifts;
  for (auto [num, den] : kTwoBitShifts) shifts.push_back(q * num / den);

  const int anchor = support.front();
  // Reference: how much the prediction moves when only the anchor coordinate moves.
  double reference = 0.0;
  for (auto c : shifts) reference += total_change([&](IntVec& a) { a[anchor] = mod_q(a[anchor] + c, q); });
  reference /= static_cast<double>(shifts.size());

  SignClasses out{{anchor}, {}, Secret(SecretDist::Ternary, IntVec(n, 0)), Secret(SecretDist::Ternary, IntVec(n, 0)), false, {}, {}};
  const double threshold = 0.5 * reference;
  const double tie_band = kTieTolerance * reference;
  std::vector<int> ambiguous;
  for (std::size_t t = 1; t < support.size(); ++t) {
    const int j = support[t];
    double d = total_change([&](IntVec& a) { std::swap(a[anchor], a[j]); });
    for (auto c : shifts) {
      d += total_change([&](IntVec& a) {
        a[anchor] = mod_q(a[anchor] + c, q);
        a[j] = mod_q(a[j] - c, q);
      });
    }
    d /= static_cast<double>(shifts.size() + 1);
    if (std::abs(d - threshold) <= tie_band) {
      ambiguous.push_back(j);
      diag.push_back("bit " + std::to_string(j) + " disagreement " + io::format_double(d) + " within tie band of " +
                     io::format_double(threshold));
    }
    (d < threshold ? out.same : out.opposite).push_back(j);
  }
  out.plus = detail::signed_guess(n, out.same, out.opposite);
  out.minus = detail::negated(out.plus);
  if (!ambiguous.empty()) {
    out.low_confidence = true;
    // Offer the partition with every ambiguous bit moved to the other class.
    std::vector<int> same, opposite;
    for (int i : out.same) {
      const bool flip = std::find(ambiguous.begin(), ambiguous.end(), i) != ambiguous.end();
      (flip ? opposite : same).push_back(i);
    }
    for (int i : out.opposite) {
      const bool flip = std::find(ambiguous.begin(), ambiguous.end(), i) != ambiguous.end();
      (flip ? same : opposite).push_back(i);
    }
    auto alt = detail::signed_guess(n, same, opposite);
    out.alternatives.emplace_back(alt, detail::negated(alt));
  }
  out.diagnostics = std::move(diag);
  return out;
}

// ---------------------------------------------------------------------------
// Recovery driver

enum class RecoveryStatus { FullRecovery, PartialRecovery, Failure };

inline std::string_view to_string(RecoveryStatus s) noexcept {
  switch (s) {
    case RecoveryStatus::FullRecovery: return "full";
    case RecoveryStatus::PartialRecovery: return "partial";
    case RecoveryStatus::Failure: return "failure";
  }
  return "?";
}

enum class Distinguisher { OneBit, Emd };

struct RecoveryOptions {
  SecretDist dist = SecretDist::Binary;
  int h_min = 1;
  int h_max = 0;  // 0: n/20, at least 1
  /// Known secret used only to validate Gaussian partial recovery.
  std::optional<Secret> lab_secret;
  std::uint64_t seed = 0;
  Distinguisher distinguisher = Distinguisher::OneBit;
  unsigned jobs = 1;
};

struct RecoveryResult {
  RecoveryStatus status = RecoveryStatus::Failure;
  std::optional<Secret> guess;
  int h_used = 0;
  std::vector<double> scores;
  std::optional<SignClasses> classes;
  std::vector<std::string> diagnostics;
};

inline int default_h_max(int n) { return std::max(1, n / 20); }

/// Scores once, then tries each candidate h in turn and returns the first verified guess.
inline RecoveryResult recover(PredictionOracle& oracle, const SampleSet& heldout, const SampleSet& originals,
                              const RecoveryOptions& opt) {
  const int n = originals.params.n();
  if (heldout.params.n() != n || heldout.params.q() != originals.params.q())
    throw std::invalid_argument("recover: held-out and original parameters differ");
  const int h_max = std::min(n, opt.h_max > 0 ? opt.h_max : default_h_max(n));
  if (opt.h_min < 1 || opt.h_min > h_max) throw std::invalid_argument("recover: empty h range");
  if (opt.lab_secret && opt.lab_secret->n() != n) throw std::invalid_argument("recover: lab secret dimension mismatch");

  RecoveryResult res;
  BitScores bits;
  try {
    bits = opt.distinguisher == Distinguisher::Emd ? emd_distinguisher_scores(oracle, heldout, opt.seed, opt.jobs)
                                                   : one_bit_scores(oracle, heldout, opt.seed, opt.jobs);
  } catch (const RecoveryAborted& e) {
    res.scores = e.partial().scores;
    res.diagnostics = e.partial().diagnostics;
    res.diagnostics.emplace_back(e.what());
    return res;
  }
  res.scores = bits.scores;
  res.diagnostics = std::move(bits.diagnostics);

  for (int h = opt.h_min; h <= h_max; ++h) {
    const auto support = top_h(res.scores, h, &res.diagnostics);
    switch (opt.dist) {
      case SecretDist::Binary: {
        IntVec e(static_cast<std::size_t>(n), 0);
        for (int i : support) e[i] = 1;
        Secret guess(SecretDist::Binary, std::move(e));
        if (verify_secret(guess, originals).accepted) {
          res.status = RecoveryStatus::FullRecovery;
          res.guess = std::move(guess);
          res.h_used = h;
          return res;
        }
        break;
      }
      case SecretDist::Ternary: {
        auto classes = two_bit_classes(oracle, heldout, support);
        std::vector<Secret> candidates{classes.plus, classes.minus};
        for (auto& [p, m] : classes.alternatives) {
          candidates.push_back(p);
          candidates.push_back(m);
        }
        for (const auto& d : classes.diagnostics) res.diagnostics.push_back("h=" + std::to_string(h) + ": " + d);
        for (auto& c : candidates) {
          if (verify_secret(c, originals).accepted) {
            res.status = RecoveryStatus::FullRecovery;
            res.guess = c;
            res.h_used = h;
            res.classes = std::move(classes);
            return res;
          }
        }
        break;
      }
      case SecretDist::Gaussian: {
        if (!opt.lab_secret) {
          res.diagnostics.push_back("gaussian secrets need a lab secret to validate the support; none given");
          return res;
        }
        if (support == opt.lab_secret->support()) {
          IntVec e(static_cast<std::size_t>(n), 0);
          for (int i : support) e[i] = opt.lab_secret->entries()[i];
          res.status = RecoveryStatus::PartialRecovery;
          res.guess = Secret(SecretDist::Gaussian, std::move(e));
          res.h_used = h;
          return res;
        }
        break;
      }
    }
  }
  res.diagnostics.push_back("no candidate h in [" + std::to_string(opt.h_min) + ", " + std::to_string(h_max) + "] verified");
  return res;
}

/// First epochs at which the support, and then the full secret, were recovered.
struct EpochSweep {
  std::optional<int> first_partial;
  std::optional<int> first_full;
  std::vector<RecoveryStatus> per_epoch;
};

/// Runs recover against the oracle of each epoch. Support matches are judged against `truth`.
inline EpochSweep epoch_sweep(const std::function<std::unique_ptr<PredictionOracle>(int)>& oracle_at, int epochs,
                              const SampleSet& heldout, const SampleSet& originals, const Secret& truth,
                              RecoveryOptions opt) {
  EpochSweep out;
  opt.lab_secret = truth;
  for (int ep = 0; ep < epochs; ++ep) {
    auto oracle = oracle_at(ep);
    const auto r = recover(*oracle, heldout, originals, opt);
    const bool full = r.status == RecoveryStatus::FullRecovery;
    const bool support_ok = full || top_h(r.scores, truth.h()) == truth.support();
    if (support_ok && !out.first_partial) out.first_partial = ep;
    if (full && !out.first_full) out.first_full = ep;
    out.per_epoch.push_back(r.status);
  }
  return out;
}

}  // namespace verde
