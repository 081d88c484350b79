#include <gtest/gtest.h>

#include <sstream>

#include "verde/rng.hpp"
#include "verde/tokenizer.hpp"

using namespace verde;

TEST(Tokenizer, ExhaustiveExactAtSmallModulus) {
  auto t = TokenScheme::for_modulus(3329);
  EXPECT_EQ(t.base(), 417);
  EXPECT_EQ(t.lo_tokens(), 417);
  EXPECT_EQ(t.hi_tokens(), 8);
  for (std::int64_t v = 0; v < 3329; ++v) EXPECT_EQ(t.decode(t.encode(v)), v);
}

TEST(Tokenizer, BucketedDecodeWithinBucket) {
  TokenScheme t(842779, 105348, 64);
  CounterRng rng(1);
  for (int k = 0; k < 100000; ++k) {
    const auto v = static_cast<std::int64_t>(rng() % 842779);
    const auto d = t.decode(t.encode(v));
    EXPECT_GE(v - d, 0);
    EXPECT_LT(v - d, 64);
  }
  EXPECT_EQ(t.encode(842778), (TokenScheme::Tokens{7, 1645}));
  EXPECT_EQ(t.lo_tokens(), 1647);
}

TEST(Tokenizer, DefaultBaseRule) {
  // Published (q, B) pairs; the 27-bit modulus is the one that departs from the ceil(q/8) rule.
  const std::vector<std::pair<std::int64_t, std::int64_t>> table{
      {3329, 417}, {11197, 1400}, {42899, 5363}, {222553, 27820}, {842779, 105348}, {1489513, 186190}, {2199023255531, 137438953471}};
  for (auto [q, b] : table) EXPECT_EQ(TokenScheme::default_base(q), b) << q;
  EXPECT_EQ(TokenScheme::default_base(94056013), 11757002);
  EXPECT_NO_THROW(TokenScheme(94056013, 5878501, 4096));
}

TEST(Tokenizer, RejectsOversizedVocabulary) {
  EXPECT_THROW(TokenScheme(842779, 105348, 1), std::invalid_argument);
  EXPECT_THROW(TokenScheme(100, 0, 1), std::invalid_argument);
  EXPECT_THROW(TokenScheme(100, 20, 21), std::invalid_argument);
  auto t = TokenScheme::for_modulus(3329);
  EXPECT_THROW((void)t.encode(3329), std::invalid_argument);
  EXPECT_THROW((void)t.encode(-1), std::invalid_argument);
}

TEST(TokenFile, Layout) {
  LweParams p(4, 3329);
  auto s = sample_secret(p, SecretDist::Binary, 2, 1);
  auto set = gen_samples(p, s, 5, 2);
  auto scheme = TokenScheme::for_modulus(3329);
  std::stringstream ss;
  write_token_file(ss, set, scheme);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "q=3329 B=417 r=1 n=4");
  int rows = 0;
  while (std::getline(ss, line)) {
    auto toks = io::split_spaces(line);
    ASSERT_EQ(toks.size(), 10u);
    const auto& smp = set.samples[rows];
    for (int i = 0; i < 4; ++i) {
      EXPECT_EQ(io::parse_int(toks[2 * i], 1) * 417 + io::parse_int(toks[2 * i + 1], 1), smp.a[i]);
    }
    EXPECT_EQ(io::parse_int(toks[8], 1) * 417 + io::parse_int(toks[9], 1), smp.b);
    ++rows;
  }
  EXPECT_EQ(rows, 5);
  EXPECT_THROW(write_token_file(ss, set, TokenScheme::for_modulus(3331)), std::invalid_argument);
}
