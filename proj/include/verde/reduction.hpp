#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "verde/error.hpp"
#include "verde/io.hpp"
#include "verde/lattice/reducer.hpp"
#include "verde/lwe.hpp"
#include "verde/rng.hpp"

namespace verde {

struct StopRule {
  double min_improvement = 0.01;  ///< relative stddev improvement per tour
  int max_tours = 50;
};

struct ReductionConfig {
  int omega = 10;
  int beta1 = 10;
  int beta2 = 16;
  double delta1 = 0.96;
  double delta2 = 0.99;
  /// Mantissa bits tried in order; see lattice::kSupportedPrecisions.
  std::vector<int> precision_bits{53, 106, 212};
  StopRule stop;
  /// Improvement below which the schedule moves from (beta1, delta1) to (beta2, delta2).
  double upgrade_threshold = 0.05;
  /// Rows sampled per matrix; 0 means n.
  int rows_per_matrix = 0;

  [[nodiscard]] int rows(int n) const noexcept { return rows_per_matrix > 0 ? rows_per_matrix : n; }

  void validate(int n) const {
    const int m = rows(n);
    const int dim = m + n;
    if (omega < 1) throw std::invalid_argument("ReductionConfig: omega must be >= 1");
    if (m < 1 || m > n) throw std::invalid_argument("ReductionConfig: rows_per_matrix must lie in [1, n]");
    if (beta1 < 2 || beta1 > beta2 || beta2 > dim)
      throw std::invalid_argument("ReductionConfig: need 2 <= beta1 <= beta2 <= lattice dimension");
    for (double d : {delta1, delta2})
      if (!(d > 0.25 && d <= 1.0)) throw std::invalid_argument("ReductionConfig: LLL delta must lie in (0.25, 1]");
    if (precision_bits.empty()) throw std::invalid_argument("ReductionConfig: empty precision schedule");
    for (int b : precision_bits)
      if (!lattice::is_supported_precision(b)) throw std::invalid_argument("ReductionConfig: unsupported precision " + std::to_string(b));
    if (stop.max_tours < 1) throw std::invalid_argument("ReductionConfig: max_tours must be >= 1");
  }
};

/// Rows sampled from the original pool: A is m x n, b has length m.
struct MatrixBlock {
  std::vector<int> source_rows;
  std::vector<IntVec> a;
  IntVec b;
  std::int64_t q = 0;

  [[nodiscard]] int m() const noexcept { return static_cast<int>(a.size()); }
  [[nodiscard]] int n() const noexcept { return a.empty() ? 0 : static_cast<int>(a.front().size()); }
};

inline std::vector<MatrixBlock> assemble_matrices(const SampleSet& originals, const ReductionConfig& cfg, int count,
                                                  std::uint64_t seed) {
  const int n = originals.params.n();
  const int m = cfg.rows(n);
  if (count < 1) throw std::invalid_argument("assemble_matrices: count must be >= 1");
  if (m > static_cast<int>(originals.size()))
    throw std::invalid_argument("assemble_matrices: rows_per_matrix exceeds the available samples");
  const CounterRng root(seed, 0xb10c);
  std::vector<MatrixBlock> blocks;
  blocks.reserve(count);
  std::vector<int> idx(originals.size());
  for (int k = 0; k < count; ++k) {
    auto rng = root.substream(static_cast<std::uint64_t>(k));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    MatrixBlock blk;
    blk.q = originals.params.q();
    blk.source_rows.assign(idx.begin(), idx.begin() + m);
    for (int r : blk.source_rows) {
      blk.a.push_back(originals.samples[r].a);
      blk.b.push_back(originals.samples[r].b);
    }
    blocks.push_back(std::move(blk));
  }
  return blocks;
}

/// Rearranged embedding [[0, q I_n], [omega I_m, A]], of dimension (n + m).
inline lattice::Basis build_embedding(const MatrixBlock& block, int omega) {
  const int m = block.m(), n = block.n();
  lattice::Basis basis(n + m, IntVec(m + n, 0));
  for (int j = 0; j < n; ++j) basis[j][m + j] = block.q;
  for (int i = 0; i < m; ++i) {
    basis[n + i][i] = omega;
    for (int j = 0; j < n; ++j) basis[n + i][m + j] = block.a[i][j];
  }
  return basis;
}

struct ReducedPairs {
  std::vector<IntVec> r_rows;    ///< transformation row per pair
  std::vector<LweSample> pairs;  ///< (R A mod q, R b mod q)
};

/// Reads R off the omega-scaled left block of each row and applies it to (A, b); rows with R = 0 or a' = 0 are dropped.
inline ReducedPairs extract_pairs(const lattice::Basis& basis, const MatrixBlock& block, int omega) {
  const int m = block.m(), n = block.n();
  const auto q = block.q;
  ReducedPairs out;
  for (const auto& row : basis) {
    IntVec r(m);
    bool nonzero = false;
    for (int i = 0; i < m; ++i) {
      if (row[i] % omega != 0) throw Error("reduced basis row has a left entry not divisible by omega");
      r[i] = row[i] / omega;
      nonzero = nonzero || r[i] != 0;
    }
    if (!nonzero) continue;
    LweSample s;
    s.a.resize(n);
    bool a_nonzero = false;
    for (int j = 0; j < n; ++j) {
      __int128 acc = 0;
      for (int i = 0; i < m; ++i) acc += static_cast<__int128>(r[i]) * block.a[i][j];
      s.a[j] = mod_q(acc, q);
      if (s.a[j] != mod_q(row[m + j], q)) throw Error("reduced basis row is inconsistent with R A mod q");
      a_nonzero = a_nonzero || s.a[j] != 0;
    }
    if (!a_nonzero) continue;
    s.b = mod_q(dot_exact(r, block.b), q);
    out.r_rows.push_back(std::move(r));
    out.pairs.push_back(std::move(s));
  }
  return out;
}

/// Standard deviation of the centered a' entries relative to the uniform q / sqrt(12).
inline double reduction_factor(const std::vector<LweSample>& pairs, std::int64_t q) {
  if (pairs.empty()) throw std::invalid_argument("reduction_factor: no pairs");
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  for (const auto& p : pairs) {
    for (std::int64_t v : p.a) {
      const auto c = static_cast<double>(center(v, q));
      sum += c;
      sum_sq += c * c;
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  const double var = std::max(0.0, sum_sq / static_cast<double>(count) - mean * mean);
  return std::sqrt(var) / (static_cast<double>(q) / std::sqrt(12.0));
}

struct TourRecord {
  int tour = 0;
  int beta = 0;
  double delta = 0.0;
  int precision_bits = 0;
  double factor = 0.0;
  bool accepted = false;
};

struct ReductionOutput {
  std::vector<IntVec> r_rows;
  std::vector<LweSample> pairs;
  double reduction_factor = 1.0;
  double initial_factor = 1.0;
  std::vector<TourRecord> tours;
  int precision_bits = 0;
  double wall_seconds = 0.0;

  /// Factors of accepted tours, in order.
  [[nodiscard]] std::vector<double> accepted_factors() const {
    std::vector<double> f;
    for (const auto& t : tours)
      if (t.accepted) f.push_back(t.factor);
    return f;
  }
};

/// Ran out of precision rungs; carries the best output reached before that.
class ReductionPrecisionError : public Error {
 public:
  ReductionPrecisionError(const std::string& what, ReductionOutput best) : Error(what), best_(std::move(best)) {}
  [[nodiscard]] const ReductionOutput& best_so_far() const noexcept { return best_; }

 private:
  ReductionOutput best_;
};

class DegenerateReduction : public Error {
 public:
  using Error::Error;
};

/// Interleaved LLL/BKZ tours on the rearranged embedding with an adaptive (beta, delta, precision) schedule.
///
/// Each tour is an LLL pass at the stronger delta followed by a BKZ tour at
/// the current (beta, delta). The schedule starts at (beta1, delta1) and moves
/// to (beta2, delta2) once a tour improves the reduction factor by less than
/// `upgrade_threshold`; after that, a tour improving by less than
/// `stop.min_improvement` ends the run. The output is the best accepted basis.
inline ReductionOutput reduce_matrix(const MatrixBlock& block, const ReductionConfig& cfg) {
  cfg.validate(block.n());
  if (block.m() != cfg.rows(block.n())) throw std::invalid_argument("reduce_matrix: block row count differs from config");
  const auto start = std::chrono::steady_clock::now();
  const double strong_delta = std::max(cfg.delta1, cfg.delta2);

  auto snapshot = [&](const lattice::Basis& basis, ReductionOutput& out) {
    auto rp = extract_pairs(basis, block, cfg.omega);
    out.r_rows = std::move(rp.r_rows);
    out.pairs = std::move(rp.pairs);
    out.reduction_factor = out.pairs.empty() ? 1.0 : reduction_factor(out.pairs, block.q);
  };

  lattice::AdaptiveReducer reducer(build_embedding(block, cfg.omega), cfg.precision_bits);
  ReductionOutput best;
  snapshot(reducer.basis(), best);
  best.initial_factor = best.reduction_factor;
  best.precision_bits = reducer.precision_bits();

  bool upgraded = cfg.beta1 == cfg.beta2 && cfg.delta1 == cfg.delta2;
  double previous = best.reduction_factor;
  std::vector<TourRecord> history;

  for (int tour = 1; tour <= cfg.stop.max_tours; ++tour) {
    const int beta = upgraded ? cfg.beta2 : cfg.beta1;
    const double delta = upgraded ? cfg.delta2 : cfg.delta1;
    try {
      reducer.lll(strong_delta);
      reducer.bkz_tour(beta, delta);
    } catch (const lattice::PrecisionExhausted& e) {
      best.tours = history;
      best.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      throw ReductionPrecisionError(e.what(), std::move(best));
    }
    ReductionOutput current;
    snapshot(reducer.basis(), current);
    const double factor = current.reduction_factor;
    const bool accepted = !current.pairs.empty() && factor <= best.reduction_factor;
    history.push_back({tour, beta, delta, reducer.precision_bits(), factor, accepted});
    if (accepted) {
      current.initial_factor = best.initial_factor;
      best = std::move(current);
    }
    const double improvement = previous > 0.0 ? (previous - factor) / previous : 0.0;
    previous = factor;
    if (!upgraded) {
      if (improvement < cfg.upgrade_threshold) upgraded = true;
    } else if (improvement < cfg.stop.min_improvement) {
      break;
    }
  }

  best.tours = std::move(history);
  best.precision_bits = reducer.precision_bits();
  best.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (static_cast<int>(best.pairs.size()) * 2 < block.m())
    throw DegenerateReduction("reduction left " + std::to_string(best.pairs.size()) + " usable rows (need m/2)");
  return best;
}

// ---------------------------------------------------------------------------
// Training-set construction

/// Size of the held-out distinguisher set.
inline constexpr std::size_t kHeldOutCount = 128;

struct MatrixMetrics {
  int index = 0;
  int tours = 0;
  double final_factor = 0.0;
  double wall_seconds = 0.0;
  bool ok = false;
  std::string error;
};

struct TrainingSet {
  SampleSet train;
  SampleSet heldout;
  std::vector<MatrixMetrics> metrics;
};

/// Sidecar: "matrix,tours,factor,seconds" lines.
inline void write_metrics_csv(std::ostream& os, const std::vector<MatrixMetrics>& metrics) {
  os << "matrix,tours,factor,seconds\n";
  for (const auto& m : metrics)
    os << m.index << ',' << m.tours << ',' << io::format_double(m.final_factor) << ',' << io::format_double(m.wall_seconds) << '\n';
}

/// Reduces ceil(target / (m + n)) matrices on `jobs` worker threads and splits off the held-out set.
///
/// Results are merged by matrix index, so the output does not depend on
/// scheduling. Failed matrices are skipped; fewer than half succeeding is an error.
inline TrainingSet build_training_set(const SampleSet& originals, const ReductionConfig& cfg, std::size_t target_count,
                                      std::uint64_t seed, unsigned jobs = 0) {
  if (target_count < 2 * kHeldOutCount) throw std::invalid_argument("build_training_set: target_count must be >= 256");
  const int n = originals.params.n();
  cfg.validate(n);
  const auto per_matrix = static_cast<std::size_t>(cfg.rows(n) + n);
  const int count = static_cast<int>((target_count + per_matrix - 1) / per_matrix);
  const auto blocks = assemble_matrices(originals, cfg, count, seed);

  std::vector<std::optional<ReductionOutput>> results(count);
  std::vector<MatrixMetrics> metrics(count);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      metrics[i].index = i;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        results[i] = reduce_matrix(blocks[i], cfg);
        metrics[i].ok = true;
        metrics[i].tours = static_cast<int>(results[i]->tours.size());
        metrics[i].final_factor = results[i]->reduction_factor;
      } catch (const Error& e) {
        metrics[i].error = e.what();
      }
      metrics[i].wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  };
  if (jobs == 0) jobs = std::max(1U, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(count));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
  }

  const auto survivors = std::count_if(metrics.begin(), metrics.end(), [](const MatrixMetrics& m) { return m.ok; });
  if (survivors * 2 < count)
    throw Error("build_training_set: only " + std::to_string(survivors) + " of " + std::to_string(count) + " matrices reduced");

  std::vector<LweSample> all;
  for (auto& r : results)
    if (r) std::move(r->pairs.begin(), r->pairs.end(), std::back_inserter(all));
  if (all.size() <= kHeldOutCount) throw Error("build_training_set: not enough reduced pairs for a held-out set");

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(seed, 0x4e1d);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> held(all.size(), false);
  for (std::size_t i = 0; i < kHeldOutCount; ++i) held[order[i]] = true;

  TrainingSet ts{SampleSet{originals.params, {}, SampleKind::Reduced, seed},
                 SampleSet{originals.params, {}, SampleKind::HeldOut, seed}, std::move(metrics)};
  for (std::size_t i = 0; i < all.size(); ++i) (held[i] ? ts.heldout : ts.train).samples.push_back(std::move(all[i]));
  return ts;
}

}  // namespace verde
