#include <gtest/gtest.h>

#include "verde/usvp.hpp"

using namespace verde;

TEST(Kannan, ContainsErrorSecretVector) {
  LweParams p(8, 521, 1.0);
  auto s = sample_secret(p, SecretDist::Ternary, 3, 1);
  IntVec errs;
  auto set = gen_samples(p, s, 8, 2, &errs);
  const std::int64_t M = 1;
  auto B = kannan_embedding(set, 8, M);
  ASSERT_EQ(B.size(), 17u);

  // (-e, s, -M) = sum_j s_j * row(8+j) - row(16) + sum_i k_i * row(i) with k_i chosen to cancel the multiple of q.
  IntVec v(17, 0);
  for (int j = 0; j < 8; ++j)
    for (int t = 0; t < 17; ++t) v[t] += s.entries()[j] * B[8 + j][t];
  for (int t = 0; t < 17; ++t) v[t] -= B[16][t];
  for (int i = 0; i < 8; ++i) {
    ASSERT_EQ(mod_q(v[i] + errs[i], 521), 0);
    v[i] = -errs[i];
  }
  for (int j = 0; j < 8; ++j) EXPECT_EQ(v[8 + j], s.entries()[j]);
  EXPECT_EQ(v[16], -M);
  EXPECT_EQ(*secret_from_row(v, 8, 8, M), s);

  IntVec neg = v;
  for (auto& x : neg) x = -x;
  EXPECT_EQ(*secret_from_row(neg, 8, 8, M), s);
  EXPECT_THROW(kannan_embedding(set, 9, M), std::invalid_argument);
}

TEST(SecretFromRow, RejectsRowsWithoutEmbeddingCoordinate) {
  EXPECT_FALSE(secret_from_row({1, 0, 1, 0}, 1, 2, 1));
  EXPECT_FALSE(secret_from_row({1, 40, 1, 1}, 1, 2, 1));
  auto g = secret_from_row({1, -5, 2, -1}, 1, 2, 1);
  ASSERT_TRUE(g);
  EXPECT_EQ(g->dist(), SecretDist::Gaussian);
}

TEST(Usvp, RecoversSmallInstance) {
  LweParams p(16, 521, 1.0);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto s = sample_secret(p, SecretDist::Binary, 2, seed);
    auto set = gen_samples(p, s, 64, seed + 10);
    UsvpConfig cfg;
    cfg.blocksize = 10;
    auto r = usvp_attack(set, cfg);
    ASSERT_TRUE(r.secret) << "seed " << seed;
    EXPECT_EQ(*r.secret, s);
    EXPECT_LE(r.loops_used, cfg.max_loops);
    EXPECT_GT(r.best_norm, 0.0);
  }
}

TEST(Usvp, ZeroSecret) {
  LweParams p(16, 521, 1.0);
  Secret zero(SecretDist::Binary, IntVec(16, 0));
  auto set = gen_samples(p, zero, 64, 5);
  auto r = usvp_attack(set, UsvpConfig{});
  ASSERT_TRUE(r.secret);
  EXPECT_EQ(r.secret->h(), 0);
}

TEST(Usvp, ConfigChecks) {
  LweParams p(8, 521, 1.0);
  auto s = sample_secret(p, SecretDist::Binary, 1, 1);
  auto set = gen_samples(p, s, 16, 2);
  UsvpConfig cfg;
  cfg.blocksize = 1;
  EXPECT_THROW(usvp_attack(set, cfg), std::invalid_argument);
  cfg = UsvpConfig{};
  cfg.max_loops = 0;
  EXPECT_THROW(usvp_attack(set, cfg), std::invalid_argument);
  set.kind = SampleKind::Reduced;
  EXPECT_THROW(usvp_attack(set, UsvpConfig{}), std::invalid_argument);
}
