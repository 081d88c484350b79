#include <gtest/gtest.h>

#include "verde/analysis.hpp"
#include "verde/tricks.hpp"

using namespace verde;

TEST(Permutation, InverseAndIdentity) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = Permutation::random(17, seed);
    IntVec v(17);
    std::iota(v.begin(), v.end(), 100);
    EXPECT_EQ(p.inverse().apply(p.apply(v)), v);
    EXPECT_EQ(p.apply(p.inverse().apply(v)), v);
    EXPECT_EQ(p.inverse().inverse(), p);
  }
  auto id = Permutation::identity(5);
  EXPECT_EQ(id.apply(IntVec{5, 4, 3, 2, 1}), (IntVec{5, 4, 3, 2, 1}));
  EXPECT_THROW(Permutation({0, 0, 1}), std::invalid_argument);
  EXPECT_THROW(Permutation({0, 3}), std::invalid_argument);
  EXPECT_THROW(id.apply(IntVec{1}), std::invalid_argument);
}

TEST(Permutation, InstanceKeepsResiduals) {
  LweParams p(24, 3329, 3.0);
  auto s = sample_secret(p, SecretDist::Ternary, 5, 1);
  auto set = gen_samples(p, s, 300, 2);
  auto pi = Permutation::random(24, 3);
  auto moved = permute_instance(set, pi);
  auto ps = pi.apply(s);
  EXPECT_TRUE(verify_secret(ps, moved).accepted);
  EXPECT_FALSE(verify_secret(s, moved).accepted);
  for (std::size_t k = 0; k < set.size(); ++k)
    EXPECT_EQ(nomod_residual(moved.samples[k], ps, p.q()), nomod_residual(set.samples[k], s, p.q()));
  EXPECT_EQ(nomod(moved, ps).percentage, nomod(set, s).percentage);
  EXPECT_EQ(pi.inverse().apply(ps), s);

  SampleSet reduced = set;
  reduced.kind = SampleKind::Reduced;
  EXPECT_THROW(permute_instance(reduced, pi), std::invalid_argument);
}

TEST(DimensionReduce, DroppingZerosKeepsResiduals) {
  LweParams p(20, 967, 3.0);
  auto s = sample_secret(p, SecretDist::Binary, 3, 4);
  auto set = gen_samples(p, s, 100, 5);
  std::vector<int> zeros;
  for (int i = 0; i < 20 && zeros.size() < 6; ++i)
    if (s.entries()[i] == 0) zeros.push_back(i);
  auto small = dimension_reduce(set, zeros);
  auto ss = dimension_reduce(s, zeros);
  EXPECT_EQ(small.params.n(), 14);
  for (std::size_t k = 0; k < set.size(); ++k)
    EXPECT_EQ(center(small.samples[k].b - dot_mod(small.samples[k].a, ss.entries(), 967), 967),
              center(set.samples[k].b - dot_mod(set.samples[k].a, s.entries(), 967), 967));
  EXPECT_TRUE(verify_secret(ss, small).accepted);
  EXPECT_EQ(lift_secret(ss, zeros, 20), s);

  std::vector<int> bad{s.support().front()};
  EXPECT_FALSE(verify_secret(dimension_reduce(s, bad), dimension_reduce(set, bad)).accepted);
  EXPECT_THROW(dimension_reduce(set, {3, 3}), std::invalid_argument);
  EXPECT_THROW(dimension_reduce(set, {20}), std::invalid_argument);
  EXPECT_THROW(lift_secret(ss, zeros, 21), std::invalid_argument);
}

namespace {

/// Invariant of the transform: b' - a'.s' == b - a.s (mod q) with s' the flipped secret.
void expect_hamming_invariant(const SampleSet& set, const Secret& s, const std::vector<int>& S) {
  const auto q = set.params.q();
  const auto out = hamming_reduce(set, S);
  const auto flipped = hamming_flip(s, S);
  for (std::size_t k = 0; k < set.size(); ++k) {
    const auto& x = set.samples[k];
    const auto& y = out.samples[k];
    ASSERT_EQ(mod_q(static_cast<__int128>(y.b) - dot_exact(y.a, flipped.entries()), q),
              mod_q(static_cast<__int128>(x.b) - dot_exact(x.a, s.entries()), q));
    __int128 sa = 0;
    for (int i : S) sa += x.a[i];
    ASSERT_EQ(dot_mod(y.a, flipped.entries(), q), mod_q(dot_exact(x.a, s.entries()) - sa, q));
  }
}

}  // namespace

TEST(Hamming, ExhaustiveSmallDimension) {
  for (int n = 1; n <= 8; ++n) {
    LweParams p(n, 97, 1.0);
    for (std::uint32_t smask = 0; smask < (1U << n); ++smask) {
      IntVec e(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) e[i] = (smask >> i) & 1U;
      Secret s(SecretDist::Binary, e);
      const auto set = gen_samples(p, sample_secret(p, SecretDist::Binary, 1, smask), 3, smask + 7u * n);
      for (std::uint32_t Smask = 0; Smask < (1U << n); Smask += 1 + (n > 6 ? 2 : 0)) {
        std::vector<int> S;
        for (int i = 0; i < n; ++i)
          if ((Smask >> i) & 1U) S.push_back(i);
        expect_hamming_invariant(set, s, S);
      }
    }
  }
}

TEST(Hamming, Involution) {
  LweParams p(40, 3329, 3.0);
  auto s = sample_secret(p, SecretDist::Binary, 6, 1);
  auto set = gen_samples(p, s, 50, 2);
  std::vector<int> S{0, 3, 7, 11, 39};
  EXPECT_EQ(hamming_reduce(hamming_reduce(set, S), S), set);
  EXPECT_EQ(hamming_flip(hamming_flip(s, S), S), s);
}

TEST(Hamming, FlippingTheSupportLeavesTheError) {
  LweParams p(16, 967, 3.0);
  auto s = sample_secret(p, SecretDist::Binary, 5, 3);
  IntVec errs;
  auto set = gen_samples(p, s, 40, 4, &errs);
  auto out = hamming_reduce(set, s.support());
  EXPECT_EQ(hamming_flip(s, s.support()).h(), 0);
  for (std::size_t k = 0; k < set.size(); ++k) EXPECT_EQ(out.samples[k].b, mod_q(errs[k], 967));
}

TEST(Hamming, NonBinaryContextWarns) {
  LweParams p(4, 97);
  auto s = sample_secret(p, SecretDist::Ternary, 2, 1);
  auto set = gen_samples(p, s, 3, 2);
  std::vector<std::string> warn;
  hamming_reduce(set, {1}, SecretDist::Ternary, &warn);
  EXPECT_EQ(warn.size(), 1u);
  EXPECT_THROW(hamming_flip(s, {1}), std::invalid_argument);
}
