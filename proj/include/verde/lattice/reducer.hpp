#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "verde/error.hpp"
#include "verde/lattice/enumeration.hpp"
#include "verde/lattice/precision.hpp"
#include "verde/lwe.hpp"

namespace verde::lattice {

/// Row-major integer basis; row i is basis vector b_i.
using Basis = std::vector<IntVec>;

/// Floating-point Gram–Schmidt data became unreliable at the current precision.
class PrecisionFailure : public Error {
 public:
  using Error::Error;
};

/// Every rung of the precision ladder failed.
class PrecisionExhausted : public Error {
 public:
  using Error::Error;
};

/// Size-reduction target |mu_ij| <= eta.
inline constexpr double kSizeReductionEta = 0.51;
/// A size-reduced row that still has |mu_ij| above this after repeated passes means the GSO is numerically lost.
inline constexpr double kPrecisionFailureBound = 0.75;
/// BKZ only inserts a block solution that beats b*_kappa by this factor.
inline constexpr double kBkzImprovement = 0.99;
/// Unpruned enumeration is capped at this block dimension.
inline constexpr int kMaxEnumerationBlock = 24;

/// (g, p, r) with p*a + r*b = g = gcd(a, b) > 0; requires (a, b) != (0, 0).
inline std::tuple<std::int64_t, std::int64_t, std::int64_t> ext_gcd(std::int64_t a, std::int64_t b) {
  std::int64_t old_r = a, r = b, old_s = 1, s = 0, old_t = 0, t = 1;
  while (r != 0) {
    const std::int64_t quot = old_r / r;
    std::tie(old_r, r) = std::make_pair(r, old_r - quot * r);
    std::tie(old_s, s) = std::make_pair(s, old_s - quot * s);
    std::tie(old_t, t) = std::make_pair(t, old_t - quot * t);
  }
  if (old_r < 0) return {-old_r, -old_s, -old_t};
  return {old_r, old_s, old_t};
}

namespace detail {

inline std::int64_t mul_add_checked(std::int64_t acc, std::int64_t x, std::int64_t y) {
  std::int64_t prod = 0, out = 0;
  if (__builtin_mul_overflow(x, y, &prod) || __builtin_add_overflow(acc, prod, &out))
    throw Error("lattice basis entry overflows 64 bits");
  return out;
}

}  // namespace detail

struct LllStats {
  std::uint64_t swaps = 0;
  bool converged = true;
};

/// LLL and BKZ on an integer basis with Gram–Schmidt data held in FT.
///
/// GSO rows are recomputed from exact integer inner products whenever a row
/// is revisited, so the floating-point state never drifts across many
/// updates; only the recurrences themselves are subject to FT rounding.
/// Rows [0, valid_) always carry current GSO data.
template <class FT>
class GsoReducer {
 public:
  explicit GsoReducer(Basis& basis)
      : b_(basis),
        d_(static_cast<int>(basis.size())),
        mu_(d_, std::vector<FT>(d_, FT(0))),
        rkj_(d_, std::vector<FT>(d_, FT(0))),
        r_(d_, FT(0)) {}

  [[nodiscard]] int dim() const noexcept { return d_; }

  /// LLL on rows [0, stop), assuming rows before `start` are already reduced.
  LllStats lll(int start, int stop, double delta, std::uint64_t max_swaps = 0) {
    LllStats stats;
    stop = std::min(stop, d_);
    if (stop <= 0) return stats;
    // delta = 1 has no termination guarantee, so it gets a much tighter budget.
    if (max_swaps == 0)
      max_swaps = delta < 1.0 ? 200ULL * static_cast<std::uint64_t>(d_) * d_ + 100000ULL
                              : 10ULL * static_cast<std::uint64_t>(d_) * d_ + 1000ULL;
    const FT fdelta(delta);
    int k = std::max(start, 0);
    ensure_valid(k);
    if (k == 0) {
      compute_row(0);
      valid_ = std::max(valid_, 1);
      k = 1;
    }
    while (k < stop) {
      ensure_valid(k);
      const bool changed = size_reduce(k);
      const FT lhs = fdelta * r_[k - 1];
      const FT rhs = r_[k] + mu_[k][k - 1] * mu_[k][k - 1] * r_[k - 1];
      if (lhs > rhs) {
        std::swap(b_[k - 1], b_[k]);
        valid_ = std::min(valid_, k - 1);
        if (++stats.swaps > max_swaps) {
          if (delta < 1.0) throw PrecisionFailure("LLL exceeded its swap budget");
          stats.converged = false;
          ensure_valid(k + 1);
          break;
        }
        k = std::max(k - 1, 1);
      } else {
        valid_ = changed ? k + 1 : std::max(valid_, k + 1);
        ++k;
      }
    }
    return stats;
  }

  /// One BKZ tour with block size beta; returns whether any block solution was inserted.
  bool bkz_tour(int beta, double delta) {
    beta = std::min({beta, d_, kMaxEnumerationBlock});
    lll(0, d_, delta);
    bool changed = false;
    std::vector<std::vector<double>> mu_loc;
    std::vector<double> r_loc;
    for (int kappa = 0; kappa + 1 < d_; ++kappa) {
      const int end = std::min(kappa + beta, d_);
      const int len = end - kappa;
      ensure_valid(end);
      mu_loc.assign(len, std::vector<double>(len, 0.0));
      r_loc.assign(len, 0.0);
      for (int i = 0; i < len; ++i) {
        r_loc[i] = static_cast<double>(r_[kappa + i]);
        for (int j = 0; j < i; ++j) mu_loc[i][j] = static_cast<double>(mu_[kappa + i][kappa + j]);
      }
      BlockEnumerator enumerator(mu_loc, r_loc);
      auto sol = enumerator.shortest(kBkzImprovement * r_loc[0]);
      nodes_ += enumerator.nodes();
      if (!sol) continue;
      insert(kappa, sol->coeffs);
      valid_ = std::min(valid_, kappa);
      lll(kappa, end, delta);
      changed = true;
    }
    lll(0, d_, delta);
    return changed;
  }

  void ensure_valid(int upto) {
    upto = std::min(upto, d_);
    for (int i = valid_; i < upto; ++i) {
      compute_row(i);
      valid_ = i + 1;
    }
  }

  /// Squared Gram–Schmidt norms (valid after a full LLL call).
  [[nodiscard]] std::vector<double> gso_norms() {
    ensure_valid(d_);
    std::vector<double> out(d_);
    for (int i = 0; i < d_; ++i) out[i] = static_cast<double>(r_[i]);
    return out;
  }

  [[nodiscard]] std::uint64_t enumeration_nodes() const noexcept { return nodes_; }

 private:
  static FT to_ft(__int128 v) { return from_int128<FT>(v); }

  void compute_row(int k) {
    const IntVec& bk = b_[k];
    for (int j = 0; j < k; ++j) {
      FT acc = to_ft(dot_exact(bk, b_[j]));
      for (int i = 0; i < j; ++i) acc -= mu_[j][i] * rkj_[k][i];
      rkj_[k][j] = acc;
      mu_[k][j] = acc / r_[j];
    }
    FT rk = to_ft(dot_exact(bk, bk));
    for (int j = 0; j < k; ++j) rk -= mu_[k][j] * rkj_[k][j];
    if (!(rk > FT(0))) throw PrecisionFailure("non-positive Gram-Schmidt norm at row " + std::to_string(k));
    r_[k] = rk;
  }

  /// Returns whether b_k was modified.
  bool size_reduce(int k) {
    constexpr int kMaxPasses = 10;
    const FT eta(kSizeReductionEta);
    const FT limit(static_cast<double>(std::int64_t{1} << 62));
    bool changed = false;
    for (int pass = 0;; ++pass) {
      compute_row(k);
      FT max_mu(0);
      for (int j = 0; j < k; ++j) max_mu = std::max(max_mu, ft_abs(mu_[k][j]));
      if (max_mu <= eta) return changed;
      if (pass >= kMaxPasses) {
        if (max_mu > FT(kPrecisionFailureBound))
          throw PrecisionFailure("size reduction stalled at row " + std::to_string(k));
        return changed;
      }
      for (int j = k - 1; j >= 0; --j) {
        const FT x = ft_round(mu_[k][j]);
        if (x == FT(0)) continue;
        if (ft_abs(x) > limit) throw PrecisionFailure("size-reduction coefficient out of range");
        const auto xi = static_cast<std::int64_t>(static_cast<long long>(x));
        IntVec& bk = b_[k];
        const IntVec& bj = b_[j];
        for (std::size_t t = 0; t < bk.size(); ++t) bk[t] = detail::mul_add_checked(bk[t], -xi, bj[t]);
        for (int i = 0; i < j; ++i) mu_[k][i] -= x * mu_[j][i];
        mu_[k][j] -= x;
        changed = true;
      }
    }
  }

  /// Replaces the block starting at kappa by a basis whose first vector is sum_i coeffs[i] * b_{kappa+i}.
  /// Pairwise extended-gcd folding keeps every step unimodular, so no dependency removal is needed.
  void insert(int kappa, const std::vector<std::int64_t>& coeffs) {
    const int len = static_cast<int>(coeffs.size());
    int cur = -1;
    std::int64_t g = 0;
    for (int i = len - 1; i >= 0; --i) {
      if (coeffs[i] == 0) continue;
      if (cur < 0) {
        cur = i;
        g = coeffs[i];
        continue;
      }
      auto [gg, p, r] = ext_gcd(coeffs[i], g);
      const std::int64_t u1 = coeffs[i] / gg;
      const std::int64_t w1 = g / gg;
      IntVec& bi = b_[kappa + i];
      IntVec& bc = b_[kappa + cur];
      for (std::size_t t = 0; t < bi.size(); ++t) {
        const std::int64_t vi = bi[t], vc = bc[t];
        bi[t] = detail::mul_add_checked(detail::mul_add_checked(0, u1, vi), w1, vc);
        bc[t] = detail::mul_add_checked(detail::mul_add_checked(0, -r, vi), p, vc);
      }
      g = gg;
      cur = i;
    }
    if (cur < 0) return;
    if (g < 0)
      for (auto& v : b_[kappa + cur]) v = -v;
    std::rotate(b_.begin() + kappa, b_.begin() + kappa + cur, b_.begin() + kappa + cur + 1);
  }

  Basis& b_;
  int d_;
  std::vector<std::vector<FT>> mu_;
  std::vector<std::vector<FT>> rkj_;
  std::vector<FT> r_;
  int valid_ = 0;
  std::uint64_t nodes_ = 0;
};

/// Owns a basis and runs LLL/BKZ on it, climbing a precision ladder on failure.
///
/// A failed operation is rolled back to the basis it started from and retried
/// one rung up. The rung reached is kept for later calls.
class AdaptiveReducer {
 public:
  AdaptiveReducer(Basis basis, std::vector<int> precision_schedule)
      : basis_(std::move(basis)), schedule_(std::move(precision_schedule)) {
    if (schedule_.empty()) throw std::invalid_argument("precision schedule must not be empty");
    for (int bits : schedule_)
      if (!is_supported_precision(bits)) throw std::invalid_argument("unsupported precision " + std::to_string(bits));
  }

  LllStats lll(double delta) {
    return run<LllStats>([&](auto& red) { return red.lll(0, red.dim(), delta); });
  }

  bool bkz_tour(int beta, double delta) {
    return run<bool>([&](auto& red) { return red.bkz_tour(beta, delta); });
  }

  [[nodiscard]] const Basis& basis() const noexcept { return basis_; }
  [[nodiscard]] Basis release() && { return std::move(basis_); }
  [[nodiscard]] int precision_bits() const noexcept { return schedule_[level_]; }
  [[nodiscard]] int upgrades() const noexcept { return static_cast<int>(level_); }

 private:
  template <class R, class Op>
  R run(Op&& op) {
    for (;;) {
      Basis snapshot = basis_;
      try {
        return with_precision(schedule_[level_], [&](auto tag) -> R {
          using FT = typename decltype(tag)::type;
          GsoReducer<FT> red(basis_);
          return op(red);
        });
      } catch (const PrecisionFailure& e) {
        basis_ = std::move(snapshot);
        if (level_ + 1 >= schedule_.size())
          throw PrecisionExhausted(std::string("precision ladder exhausted: ") + e.what());
        ++level_;
      }
    }
  }

  Basis basis_;
  std::vector<int> schedule_;
  std::size_t level_ = 0;
};

}  // namespace verde::lattice
