#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>

#include "verde/lattice/enumeration.hpp"
#include "verde/lattice/reducer.hpp"
#include "verde/rng.hpp"

using namespace verde;
using namespace verde::lattice;
using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

namespace {

struct ExactGso {
  std::vector<std::vector<Rational>> mu;
  std::vector<Rational> r;
};

ExactGso exact_gso(const Basis& b) {
  const auto d = b.size();
  ExactGso g{std::vector<std::vector<Rational>>(d, std::vector<Rational>(d)), std::vector<Rational>(d)};
  std::vector<std::vector<Rational>> star(d);
  for (std::size_t i = 0; i < d; ++i) {
    star[i].assign(b[i].begin(), b[i].end());
    for (std::size_t j = 0; j < i; ++j) {
      Rational num = 0;
      for (std::size_t t = 0; t < b[i].size(); ++t) num += Rational(b[i][t]) * star[j][t];
      g.mu[i][j] = num / g.r[j];
      for (std::size_t t = 0; t < b[i].size(); ++t) star[i][t] -= g.mu[i][j] * star[j][t];
    }
    Rational n2 = 0;
    for (auto& v : star[i]) n2 += v * v;
    g.r[i] = n2;
  }
  return g;
}

/// |det| of a square integer matrix, by fraction-free elimination.
BigInt abs_det(const Basis& b) {
  const auto d = b.size();
  std::vector<std::vector<Rational>> m(d);
  for (std::size_t i = 0; i < d; ++i) m[i].assign(b[i].begin(), b[i].end());
  Rational det = 1;
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t p = c;
    while (p < d && m[p][c] == 0) ++p;
    if (p == d) return 0;
    if (p != c) std::swap(m[p], m[c]);
    det *= m[c][c];
    for (std::size_t r = c + 1; r < d; ++r) {
      const Rational f = m[r][c] / m[c][c];
      for (std::size_t t = c; t < d; ++t) m[r][t] -= f * m[c][t];
    }
  }
  BigInt v = boost::multiprecision::numerator(det);
  return v < 0 ? BigInt(-v) : v;
}

/// Knapsack-style basis: q e_i rows followed by (a_j, e_j) rows, square of size 2k.
Basis qary_basis(int k, std::int64_t q, std::uint64_t seed) {
  CounterRng rng(seed);
  Basis b(2 * k, IntVec(2 * k, 0));
  for (int i = 0; i < k; ++i) b[i][i] = q;
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < k; ++i) b[k + j][i] = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(q));
    b[k + j][k + j] = 1;
  }
  return b;
}

void expect_lll_reduced(const Basis& b, double delta) {
  const auto g = exact_gso(b);
  const Rational eta(51, 100);
  const Rational del(static_cast<long long>(std::llround(delta * 1000)), 1000);
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) EXPECT_LE(abs(g.mu[i][j]), eta) << i << "," << j;
    if (i == 0) continue;
    EXPECT_GE(g.r[i] + g.mu[i][i - 1] * g.mu[i][i - 1] * g.r[i - 1], del * g.r[i - 1]) << "Lovasz at " << i;
  }
}

}  // namespace

TEST(ExtGcd, Bezout) {
  for (std::int64_t a : {-91, -7, 0, 3, 12, 35, 1000003})
    for (std::int64_t b : {-12, -1, 1, 5, 21, 999983}) {
      auto [g, p, r] = ext_gcd(a, b);
      EXPECT_GT(g, 0);
      EXPECT_EQ(p * a + r * b, g);
      EXPECT_EQ(a % g, 0);
      EXPECT_EQ(b % g, 0);
    }
}

TEST(Lll, MatchesExactGsoConditions) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto b = qary_basis(6, 10007, seed);
    const auto det = abs_det(b);
    GsoReducer<double> red(b);
    auto stats = red.lll(0, red.dim(), 0.99);
    EXPECT_TRUE(stats.converged);
    expect_lll_reduced(b, 0.99);
    EXPECT_EQ(abs_det(b), det);
  }
}

TEST(Lll, FloatGsoAgreesWithExact) {
  auto b = qary_basis(5, 1009, 4);
  GsoReducer<double> red(b);
  red.lll(0, red.dim(), 0.99);
  const auto g = exact_gso(b);
  const auto r = red.gso_norms();
  for (std::size_t i = 0; i < b.size(); ++i)
    EXPECT_NEAR(static_cast<double>(r[i]), g.r[i].convert_to<double>(), 1e-9 * g.r[i].convert_to<double>());
}

TEST(Lll, AllPrecisionsReduce) {
  for (int bits : {24, 53, 64, 106, 212}) {
    auto b = qary_basis(4, 97, 3);
    with_precision(bits, [&](auto tag) {
      using FT = typename decltype(tag)::type;
      Basis work = b;
      GsoReducer<FT> red(work);
      red.lll(0, red.dim(), 0.99);
      expect_lll_reduced(work, 0.99);
      EXPECT_EQ(abs_det(work), abs_det(b));
    });
  }
}

TEST(Lll, DeltaOneTerminates) {
  auto b = qary_basis(6, 3329, 9);
  GsoReducer<double> red(b);
  auto stats = red.lll(0, red.dim(), 1.0);
  EXPECT_GT(stats.swaps, 0u);
  expect_lll_reduced(b, 0.999);
}

TEST(AdaptiveReducer, ClimbsLadderWhenFloatFails) {
  // 2^40-sized entries are far beyond a 24-bit mantissa.
  auto b = qary_basis(8, (1LL << 40) - 87, 5);
  const auto det = abs_det(b);
  AdaptiveReducer red(b, {24, 53, 106});
  red.lll(0.99);
  EXPECT_GE(red.precision_bits(), 53);
  EXPECT_GE(red.upgrades(), 1);
  expect_lll_reduced(red.basis(), 0.99);
  EXPECT_EQ(abs_det(red.basis()), det);
}

TEST(AdaptiveReducer, RejectsUnsupportedPrecision) {
  EXPECT_THROW(AdaptiveReducer(Basis{{1}}, {53, 80}), std::invalid_argument);
  EXPECT_THROW(AdaptiveReducer(Basis{{1}}, {}), std::invalid_argument);
  EXPECT_THROW(with_precision(80, [](auto) {}), std::invalid_argument);
}

TEST(Enumeration, MatchesBruteForce) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    // Small random full-rank basis in dimension 5.
    CounterRng rng(seed);
    const int d = 5;
    Basis b(d, IntVec(d));
    for (auto& row : b)
      for (auto& v : row) v = static_cast<std::int64_t>(rng() % 21) - 10;
    if (abs_det(b) == 0) continue;
    const auto g = exact_gso(b);
    std::vector<std::vector<double>> mu(d, std::vector<double>(d, 0.0));
    std::vector<double> r(d);
    for (int i = 0; i < d; ++i) {
      r[i] = g.r[i].convert_to<double>();
      for (int j = 0; j < i; ++j) mu[i][j] = g.mu[i][j].convert_to<double>();
    }
    BlockEnumerator en(mu, r);
    auto sol = en.shortest(INFINITY);
    ASSERT_TRUE(sol);

    // Exhaustive search over coefficients in [-6, 6]^5.
    double best = INFINITY;
    std::vector<int> x(d, -6);
    for (;;) {
      bool nonzero = false;
      IntVec v(d, 0);
      for (int i = 0; i < d; ++i) {
        nonzero |= x[i] != 0;
        for (int t = 0; t < d; ++t) v[t] += x[i] * b[i][t];
      }
      if (nonzero) best = std::min(best, static_cast<double>(dot_exact(v, v)));
      int k = 0;
      while (k < d && ++x[k] > 6) x[k++] = -6;
      if (k == d) break;
    }
    EXPECT_NEAR(sol->norm_sq, best, 1e-6 * best) << "seed " << seed;

    IntVec v(d, 0);
    for (int i = 0; i < d; ++i)
      for (int t = 0; t < d; ++t) v[t] += sol->coeffs[i] * b[i][t];
    EXPECT_NEAR(static_cast<double>(dot_exact(v, v)), sol->norm_sq, 1e-6 * best);
  }
}

TEST(Enumeration, RadiusIsStrict) {
  std::vector<std::vector<double>> mu{{0, 0}, {0, 0}};
  std::vector<double> r{4.0, 9.0};
  BlockEnumerator en(mu, r);
  EXPECT_FALSE(en.shortest(4.0));
  auto s = en.shortest(4.5);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->norm_sq, 4.0);
}

TEST(Bkz, TourPreservesLatticeAndShortens) {
  auto b = qary_basis(10, 3329, 2);
  const auto det = abs_det(b);
  GsoReducer<double> red(b);
  red.lll(0, red.dim(), 0.99);
  const double before = static_cast<double>(dot_exact(b[0], b[0]));
  for (int t = 0; t < 3; ++t) red.bkz_tour(10, 0.99);
  EXPECT_EQ(abs_det(b), det);
  expect_lll_reduced(b, 0.99);
  EXPECT_LE(static_cast<double>(dot_exact(b[0], b[0])), before);

  // After BKZ-20 the first vector is the shortest in the whole (dimension 20) lattice.
  GsoReducer<double> full(b);
  full.bkz_tour(20, 0.99);
  const auto g = exact_gso(b);
  std::vector<std::vector<double>> mu(b.size(), std::vector<double>(b.size(), 0.0));
  std::vector<double> r(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    r[i] = g.r[i].convert_to<double>();
    for (std::size_t j = 0; j < i; ++j) mu[i][j] = g.mu[i][j].convert_to<double>();
  }
  BlockEnumerator en(mu, r);
  auto sv = en.shortest(INFINITY);
  ASSERT_TRUE(sv);
  EXPECT_LE(static_cast<double>(dot_exact(b[0], b[0])), sv->norm_sq / 0.99 + 1e-6);
}
