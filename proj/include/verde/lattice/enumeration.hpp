#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace verde::lattice {

/// Shortest nonzero vector of a projected block, by Schnorr–Euchner enumeration without pruning.
///
/// `mu` is the block's lower-triangular Gram–Schmidt coefficient matrix
/// (mu[i][j] for j < i) and `r` the squared Gram–Schmidt norms. Returns the
/// integer coefficients of a combination whose projected squared norm is
/// strictly below `radius_sq`, minimal among such, or nullopt.
class BlockEnumerator {
 public:
  BlockEnumerator(const std::vector<std::vector<double>>& mu, const std::vector<double>& r)
      : mu_(mu), r_(r), dim_(static_cast<int>(r.size())), x_(dim_, 0) {}

  struct Solution {
    std::vector<std::int64_t> coeffs;
    double norm_sq;
  };

  std::optional<Solution> shortest(double radius_sq) {
    best_.reset();
    best_norm_ = radius_sq;
    nodes_ = 0;
    if (dim_ == 0) return std::nullopt;
    std::fill(x_.begin(), x_.end(), 0);
    search(dim_ - 1, 0.0, true);
    return best_;
  }

  [[nodiscard]] std::uint64_t nodes() const noexcept { return nodes_; }

 private:
  // Depth-first over levels dim-1 .. 0; candidates at each level visited in
  // order of increasing distance to the projected center.
  void search(int level, double partial, bool all_zero_above) {
    double c = 0.0;
    for (int j = level + 1; j < dim_; ++j) c -= static_cast<double>(x_[j]) * mu_[j][level];

    if (all_zero_above) {
      // Sign symmetry: the topmost nonzero coefficient is positive.
      for (std::int64_t xi = 0;; ++xi) {
        const double len = partial + static_cast<double>(xi) * static_cast<double>(xi) * r_[level];
        ++nodes_;
        if (len >= best_norm_) break;
        x_[level] = xi;
        if (level == 0) {
          if (xi != 0) record(len);
        } else {
          search(level - 1, len, xi == 0);
        }
      }
      x_[level] = 0;
      return;
    }

    const auto x0 = static_cast<std::int64_t>(std::llround(c));
    const std::int64_t dir = c >= static_cast<double>(x0) ? 1 : -1;
    bool up_open = true, down_open = true;
    // Zig-zag: x0, x0+dir, x0-dir, x0+2dir, ...
    for (std::int64_t step = 0; up_open || down_open; ++step) {
      for (int side = 0; side < (step == 0 ? 1 : 2); ++side) {
        const bool up = side == 0;
        if (step > 0 && ((up && !up_open) || (!up && !down_open))) continue;
        const std::int64_t xi = step == 0 ? x0 : (up ? x0 + dir * step : x0 - dir * step);
        const double diff = static_cast<double>(xi) - c;
        const double len = partial + diff * diff * r_[level];
        ++nodes_;
        if (len >= best_norm_) {
          if (step == 0) {
            up_open = down_open = false;
          } else if (up) {
            up_open = false;
          } else {
            down_open = false;
          }
          continue;
        }
        x_[level] = xi;
        if (level == 0) {
          record(len);
        } else {
          search(level - 1, len, false);
        }
      }
    }
    x_[level] = 0;
  }

  void record(double len) {
    if (len <= 0.0) return;
    best_norm_ = len;
    best_ = Solution{x_, len};
  }

  const std::vector<std::vector<double>>& mu_;
  const std::vector<double>& r_;
  int dim_;
  std::vector<std::int64_t> x_;
  std::optional<Solution> best_;
  double best_norm_ = 0.0;
  std::uint64_t nodes_ = 0;
};

}  // namespace verde::lattice
