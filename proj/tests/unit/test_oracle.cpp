#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <thread>

#include "verde/oracle.hpp"

using namespace verde;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  LweParams params{16, 967, 3.0};
  Secret secret = sample_secret(params, SecretDist::Binary, 3, 1);
  SampleSet set = gen_samples(params, secret, 64, 2);
};

CheatingOracleConfig exact(const Fixture& f) { return {f.secret, f.params.q(), 0.0, 0.0, 7, false, std::nullopt, 0.0}; }

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(CheatingOracle, ExactWhenClean) {
  Fixture f;
  CheatingOracle o(exact(f));
  for (const auto& s : f.set.samples) EXPECT_EQ(o.query(s.a), dot_mod(s.a, f.secret.entries(), 967));
}

TEST(CheatingOracle, ZeroBitsInvisible) {
  Fixture f;
  CheatingOracle o(exact(f));
  for (const auto& s : f.set.samples) {
    for (int i = 0; i < f.params.n(); ++i) {
      if (f.secret.entries()[i] != 0) continue;
      IntVec moved = s.a;
      moved[i] = mod_q(moved[i] + 400, 967);
      EXPECT_EQ(circ_diff(o.query(moved), o.query(s.a), 967), 0);
    }
  }
}

TEST(CheatingOracle, DeterministicPerQuery) {
  Fixture f;
  auto cfg = exact(f);
  cfg.noise_std = 3.0;
  cfg.confusion = 0.5;
  CheatingOracle a(cfg), b(cfg);
  auto pa = a.predict(std::vector<IntVec>{f.set.samples[0].a, f.set.samples[1].a});
  auto pb = b.predict(std::vector<IntVec>{f.set.samples[1].a, f.set.samples[0].a});
  EXPECT_EQ(pa[0], pb[1]);
  EXPECT_EQ(pa[1], pb[0]);
  EXPECT_TRUE(a.concurrent_safe());
}

TEST(CheatingOracle, FullConfusionLooksUniform) {
  Fixture f;
  auto cfg = exact(f);
  cfg.confusion = 1.0;
  CheatingOracle o(cfg);
  LweParams p = f.params;
  auto many = gen_samples(p, f.secret, 20000, 3);
  std::vector<double> bins(10, 0.0);
  std::size_t exact_hits = 0;
  for (const auto& s : many.samples) {
    const auto v = o.query(s.a);
    bins[static_cast<std::size_t>(v * 10 / 967)] += 1;
    exact_hits += v == dot_mod(s.a, f.secret.entries(), 967);
  }
  for (double b : bins) EXPECT_NEAR(b / 20000.0, 0.1, 0.015);
  EXPECT_LT(exact_hits, 60u);
}

TEST(CheatingOracle, WrapLimited) {
  Fixture f;
  auto cfg = exact(f);
  cfg.wrap_limited = true;
  CheatingOracle o(cfg);
  IntVec small(16, 0);
  for (int i : f.secret.support()) small[i] = 5;
  EXPECT_EQ(o.query(small), 15);
}

TEST(CheatingOracle, SmearedDistribution) {
  Fixture f;
  auto cfg = exact(f);
  cfg.tokens = TokenScheme::for_modulus(967);
  cfg.smear = 2.0;
  CheatingOracle o(cfg);
  ASSERT_TRUE(o.supports_distribution());
  auto d = o.predict_distribution(std::vector<IntVec>{f.set.samples[0].a})[0];
  EXPECT_EQ(d.size(), static_cast<std::size_t>(cfg.tokens->lo_tokens()));
  double total = 0.0;
  for (double p : d) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
  const auto peak = std::max_element(d.begin(), d.end()) - d.begin();
  EXPECT_EQ(peak, cfg.tokens->lo_token(o.query(f.set.samples[0].a)));
}

TEST(CheatingOracle, ConfigValidation) {
  Fixture f;
  auto cfg = exact(f);
  cfg.confusion = 1.5;
  EXPECT_THROW(CheatingOracle{cfg}, std::invalid_argument);
  cfg = exact(f);
  cfg.tokens = TokenScheme::for_modulus(3329);
  EXPECT_THROW(CheatingOracle{cfg}, std::invalid_argument);
}

TEST(ReplyProtocol, RoundTripProperty) {
  CounterRng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t q = 2 + static_cast<std::int64_t>(rng() % 100000);
    const std::size_t k = 1 + rng() % 20;
    std::vector<ReplyLine> lines;
    const auto count = 1 + rng() % 10;
    for (std::size_t i = 0; i < count; ++i) {
      if (rng() % 2) {
        lines.push_back({static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(q)), {}});
      } else {
        Distribution d(k);
        double total = 0.0;
        for (auto& p : d) total += (p = static_cast<double>(rng() % 1000) + 1.0);
        for (auto& p : d) p /= total;
        lines.push_back({std::nullopt, d});
      }
    }
    std::ostringstream first;
    serialize_reply(first, lines);
    std::istringstream in(first.str());
    auto parsed = parse_reply(in, q, 0);
    ASSERT_EQ(parsed, lines);
    std::ostringstream second;
    serialize_reply(second, parsed);
    EXPECT_EQ(second.str(), first.str());
  }
}

TEST(ReplyProtocol, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text, std::int64_t q, std::size_t k) -> std::size_t {
    std::istringstream in(text);
    try {
      parse_reply(in, q, k);
    } catch (const ProtocolError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("1\n2\nx\n", 10, 0), 3u);
  EXPECT_EQ(line_of("1\n10\n", 10, 0), 2u);
  EXPECT_EQ(line_of("D 0.5 0.5\nD 0.5 0.4\n", 10, 2), 2u);
  EXPECT_EQ(line_of("D 0.5 0.5\nD 1\n", 10, 2), 2u);
  EXPECT_EQ(line_of("4\n\n", 10, 0), 2u);
  EXPECT_EQ(line_of("E model not loaded\n", 10, 0), 1u);
  EXPECT_EQ(line_of("3 4\n", 10, 0), 1u);
  EXPECT_EQ(line_of("3\n", 10, 0), 0u);
}

TEST(RequestFormat, RoundTrip) {
  std::vector<IntVec> qs{{1, 2, 3}, {4, 5, 6}};
  std::stringstream ss;
  write_request(ss, qs, 3, 7, RequestMode::Dist);
  auto r = read_request(ss);
  EXPECT_EQ(r.n, 3);
  EXPECT_EQ(r.q, 7);
  EXPECT_EQ(r.mode, RequestMode::Dist);
  EXPECT_EQ(r.queries, qs);
}

TEST(FileOracle, TalksToServingThread) {
  Fixture f;
  const auto req = fresh_dir("verde_oracle_req"), rep = fresh_dir("verde_oracle_rep");
  auto cfg = exact(f);
  cfg.tokens = TokenScheme::for_modulus(967);
  cfg.smear = 1.0;
  CheatingOracle model(cfg);
  std::jthread server([&](std::stop_token st) { serve_requests(model, req, rep, st); });

  FileOracle client(FileOracleConfig{req, rep, std::chrono::seconds(20), std::chrono::milliseconds(1), cfg.tokens}, 16, 967);
  std::vector<IntVec> qs;
  for (int k = 0; k < 10; ++k) qs.push_back(f.set.samples[k].a);
  EXPECT_EQ(client.predict(qs), model.predict(qs));
  auto dists = client.predict_distribution(qs);
  auto direct = model.predict_distribution(qs);
  ASSERT_EQ(dists.size(), direct.size());
  for (std::size_t k = 0; k < dists.size(); ++k) EXPECT_EQ(dists[k], direct[k]);
  EXPECT_EQ(client.requests_sent(), 2u);
  EXPECT_FALSE(client.concurrent_safe());
  server.request_stop();
  server.join();
  fs::remove_all(req);
  fs::remove_all(rep);
}

TEST(FileOracle, TimesOut) {
  const auto req = fresh_dir("verde_oracle_req2"), rep = fresh_dir("verde_oracle_rep2");
  FileOracle client(FileOracleConfig{req, rep, std::chrono::milliseconds(50), std::chrono::milliseconds(5), std::nullopt}, 2, 11);
  EXPECT_THROW(client.predict(std::vector<IntVec>{{1, 2}}), OracleUnavailable);
  EXPECT_TRUE(fs::exists(req / "request-0.txt"));
  fs::remove_all(req);
  fs::remove_all(rep);
}

TEST(FileOracle, ServerErrorBecomesProtocolError) {
  const auto req = fresh_dir("verde_oracle_req3"), rep = fresh_dir("verde_oracle_rep3");
  Fixture f;
  CheatingOracle model(exact(f));  // n = 16; the client below sends n = 3
  std::jthread server([&](std::stop_token st) { serve_requests(model, req, rep, st); });
  FileOracle client(FileOracleConfig{req, rep, std::chrono::seconds(20), std::chrono::milliseconds(1), std::nullopt}, 3, 967);
  try {
    client.predict(std::vector<IntVec>{{1, 2, 3}});
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
  }
  server.request_stop();
}

TEST(FunctionOracle, ConstantIsReduced) {
  FunctionOracle o(11, [](const IntVec&) { return std::int64_t{-1}; });
  EXPECT_EQ(o.predict(std::vector<IntVec>{{0}})[0], 10);
  EXPECT_FALSE(o.supports_distribution());
  EXPECT_THROW(o.predict_distribution(std::vector<IntVec>{{0}}), std::logic_error);
}
