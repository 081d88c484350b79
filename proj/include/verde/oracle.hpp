#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "verde/error.hpp"
#include "verde/io.hpp"
#include "verde/lwe.hpp"
#include "verde/rng.hpp"
#include "verde/tokenizer.hpp"

namespace verde {

using Distribution = std::vector<double>;

/// Batch interface to a trained model (or a stand-in for one).
class PredictionOracle {
 public:
  virtual ~PredictionOracle() = default;

  [[nodiscard]] virtual std::int64_t modulus() const = 0;

  /// Predicted b in [0, q) for each query vector.
  virtual std::vector<std::int64_t> predict(std::span<const IntVec> queries) = 0;

  [[nodiscard]] virtual bool supports_distribution() const { return false; }

  /// Probability vector over lo-tokens for each query.
  virtual std::vector<Distribution> predict_distribution(std::span<const IntVec> /*queries*/) {
    throw std::logic_error("oracle does not produce distributions");
  }

  /// True when predict may be called from several threads at once.
  [[nodiscard]] virtual bool concurrent_safe() const { return false; }
};

/// Wraps a plain function; handy for constant or hand-written predictors.
class FunctionOracle final : public PredictionOracle {
 public:
  using Fn = std::function<std::int64_t(const IntVec&)>;

  FunctionOracle(std::int64_t q, Fn fn, bool concurrent = true) : q_(q), fn_(std::move(fn)), concurrent_(concurrent) {}

  [[nodiscard]] std::int64_t modulus() const override { return q_; }
  std::vector<std::int64_t> predict(std::span<const IntVec> queries) override {
    std::vector<std::int64_t> out;
    out.reserve(queries.size());
    for (const auto& a : queries) out.push_back(mod_q(fn_(a), q_));
    return out;
  }
  [[nodiscard]] bool concurrent_safe() const override { return concurrent_; }

 private:
  std::int64_t q_;
  Fn fn_;
  bool concurrent_;
};

// ---------------------------------------------------------------------------
// Cheating oracle

struct CheatingOracleConfig {
  Secret secret;
  std::int64_t q = 0;
  double noise_std = 0.0;
  double confusion = 0.0;
  std::uint64_t seed = 0;
  /// Answer uniformly whenever the centered product a.s wraps mod q.
  bool wrap_limited = false;
  /// When set, distributions are Gaussian bumps of `smear` lo-tokens around the predicted lo-token.
  std::optional<TokenScheme> tokens;
  double smear = 0.0;

  void validate() const {
    if (q < 2) throw std::invalid_argument("CheatingOracleConfig: q must be >= 2");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("CheatingOracleConfig: noise_std must be >= 0");
    if (!(confusion >= 0.0 && confusion <= 1.0)) throw std::invalid_argument("CheatingOracleConfig: confusion must lie in [0,1]");
    if (!(smear >= 0.0)) throw std::invalid_argument("CheatingOracleConfig: smear must be >= 0");
    if (tokens && tokens->q() != q) throw std::invalid_argument("CheatingOracleConfig: token scheme modulus differs");
  }
};

/// Predictor computed from the true secret. Randomness is keyed by the query
/// itself, so repeated queries agree and threads never share state.
class CheatingOracle final : public PredictionOracle {
 public:
  explicit CheatingOracle(CheatingOracleConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  [[nodiscard]] const CheatingOracleConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] std::int64_t modulus() const override { return cfg_.q; }
  [[nodiscard]] bool concurrent_safe() const override { return true; }
  [[nodiscard]] bool supports_distribution() const override { return cfg_.tokens.has_value(); }

  [[nodiscard]] std::int64_t query(const IntVec& a) const {
    if (static_cast<int>(a.size()) != cfg_.secret.n()) throw std::invalid_argument("CheatingOracle: query dimension mismatch");
    const auto q = cfg_.q;
    CounterRng rng(hash_words(a), cfg_.seed);
    std::uniform_int_distribution<std::int64_t> uniform(0, q - 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    // Both draws are always taken so the stream layout does not depend on the config.
    const double u = coin(rng);
    const std::int64_t random_answer = uniform(rng);
    if (u < cfg_.confusion) return random_answer;
    if (cfg_.wrap_limited) {
      __int128 acc = 0;
      for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<__int128>(center(a[i], q)) * cfg_.secret.entries()[i];
      if (2 * (acc < 0 ? -acc : acc) >= q) return random_answer;
    }
    return mod_q(dot_exact(a, cfg_.secret.entries()) + sample_error(cfg_.noise_std, rng), q);
  }

  std::vector<std::int64_t> predict(std::span<const IntVec> queries) override {
    std::vector<std::int64_t> out;
    out.reserve(queries.size());
    for (const auto& a : queries) out.push_back(query(a));
    return out;
  }

  std::vector<Distribution> predict_distribution(std::span<const IntVec> queries) override {
    if (!cfg_.tokens) return PredictionOracle::predict_distribution(queries);
    std::vector<Distribution> out;
    out.reserve(queries.size());
    for (const auto& a : queries) out.push_back(bump(cfg_.tokens->lo_token(query(a))));
    return out;
  }

 private:
  [[nodiscard]] Distribution bump(std::int64_t centre) const {
    const auto k = static_cast<std::size_t>(cfg_.tokens->lo_tokens());
    Distribution p(k, 0.0);
    if (cfg_.smear == 0.0) {
      p[static_cast<std::size_t>(centre)] = 1.0;
      return p;
    }
    double total = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      const double d = (static_cast<double>(t) - static_cast<double>(centre)) / cfg_.smear;
      p[t] = std::exp(-0.5 * d * d);
      total += p[t];
    }
    for (auto& v : p) v /= total;
    return p;
  }

  CheatingOracleConfig cfg_;
};

// ---------------------------------------------------------------------------
// File protocol
//
// Request: header "n=.. q=.. count=.. mode=value|dist", then one a-vector per line.
// Reply: one line per query, either a decimal b or "D p_0 ... p_{k-1}".
// A trainer that cannot answer writes "E <message>" on the offending line.

struct ReplyLine {
  std::optional<std::int64_t> value;
  Distribution dist;
  friend bool operator==(const ReplyLine&, const ReplyLine&) = default;
};

enum class RequestMode { Value, Dist };

inline std::string_view to_string(RequestMode m) noexcept { return m == RequestMode::Value ? "value" : "dist"; }

inline void write_request(std::ostream& os, std::span<const IntVec> queries, int n, std::int64_t q, RequestMode mode) {
  os << "n=" << n << " q=" << q << " count=" << queries.size() << " mode=" << to_string(mode) << '\n';
  for (const auto& a : queries) {
    if (static_cast<int>(a.size()) != n) throw std::invalid_argument("write_request: query dimension mismatch");
    io::write_int_row(os, a);
    os << '\n';
  }
}

struct Request {
  int n = 0;
  std::int64_t q = 0;
  RequestMode mode = RequestMode::Value;
  std::vector<IntVec> queries;
};

inline Request read_request(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ProtocolError(1, "empty request");
  const auto h = io::parse_header(line, 1);
  Request r;
  r.n = static_cast<int>(io::parse_int(io::require(h, "n"), 1));
  r.q = io::parse_int(io::require(h, "q"), 1);
  const auto count = io::parse_int(io::require(h, "count"), 1);
  const auto& mode = io::require(h, "mode");
  if (mode == "value") {
    r.mode = RequestMode::Value;
  } else if (mode == "dist") {
    r.mode = RequestMode::Dist;
  } else {
    throw ProtocolError(1, "unknown mode '" + mode + "'");
  }
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    IntVec a;
    for (auto tok : io::split_spaces(line)) a.push_back(io::parse_int(tok, line_no));
    if (static_cast<int>(a.size()) != r.n) throw ProtocolError(line_no, "expected " + std::to_string(r.n) + " entries");
    r.queries.push_back(std::move(a));
  }
  if (static_cast<std::int64_t>(r.queries.size()) != count)
    throw ProtocolError(line_no, "count says " + std::to_string(count) + " queries, found " + std::to_string(r.queries.size()));
  return r;
}

/// Parses a reply; `q` bounds the values and `lo_tokens` (when nonzero) fixes distribution length.
inline std::vector<ReplyLine> parse_reply(std::istream& is, std::int64_t q, std::size_t lo_tokens = 0) {
  std::vector<ReplyLine> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto toks = io::split_spaces(line);
    if (toks.empty()) throw ProtocolError(line_no, "blank reply line");
    ReplyLine r;
    if (toks[0] == "E") {
      throw ProtocolError(line_no, "oracle reported an error:" + line.substr(1));
    } else if (toks[0] == "D") {
      if (toks.size() < 2) throw ProtocolError(line_no, "distribution line has no probabilities");
      if (lo_tokens != 0 && toks.size() - 1 != lo_tokens)
        throw ProtocolError(line_no, "expected " + std::to_string(lo_tokens) + " probabilities, got " + std::to_string(toks.size() - 1));
      double total = 0.0;
      for (std::size_t i = 1; i < toks.size(); ++i) {
        const double p = io::parse_double(toks[i], line_no);
        if (!(p >= 0.0 && p <= 1.0)) throw ProtocolError(line_no, "probability out of [0,1]");
        total += p;
        r.dist.push_back(p);
      }
      if (std::abs(total - 1.0) > 1e-6) throw ProtocolError(line_no, "probabilities sum to " + io::format_double(total));
    } else {
      if (toks.size() != 1) throw ProtocolError(line_no, "value line must hold a single integer");
      const auto v = io::parse_int(toks[0], line_no);
      if (v < 0 || v >= q) throw ProtocolError(line_no, "prediction " + std::to_string(v) + " outside [0,q)");
      r.value = v;
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline void serialize_reply(std::ostream& os, std::span<const ReplyLine> lines) {
  for (const auto& r : lines) {
    if (r.value) {
      os << *r.value << '\n';
    } else {
      os << 'D';
      for (double p : r.dist) os << ' ' << io::format_double(p);
      os << '\n';
    }
  }
}

/// Writes via a temporary name and renames, so a watcher never sees a partial file.
template <class Fn>
void write_atomically(const std::filesystem::path& path, Fn&& fn) {
  auto tmp = path;
  tmp += ".tmp";
  io::write_file(tmp, std::forward<Fn>(fn));
  std::filesystem::rename(tmp, path);
}

struct FileOracleConfig {
  std::filesystem::path request_dir;
  std::filesystem::path reply_dir;
  std::chrono::milliseconds timeout{std::chrono::seconds(60)};
  std::chrono::milliseconds poll{std::chrono::milliseconds(5)};
  std::optional<TokenScheme> tokens;
};

inline std::string request_name(std::uint64_t seq) { return "request-" + std::to_string(seq) + ".txt"; }
inline std::string reply_name(std::uint64_t seq) { return "reply-" + std::to_string(seq) + ".txt"; }

/// Writes one request, waits for the matching reply and parses it.
inline std::vector<ReplyLine> file_oracle_roundtrip(const std::filesystem::path& request_path,
                                                    const std::filesystem::path& reply_path,
                                                    std::chrono::milliseconds timeout, std::span<const IntVec> queries,
                                                    int n, std::int64_t q, RequestMode mode, std::size_t lo_tokens = 0,
                                                    std::chrono::milliseconds poll = std::chrono::milliseconds(5)) {
  write_atomically(request_path, [&](std::ostream& os) { write_request(os, queries, n, q, mode); });
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (!std::filesystem::exists(reply_path)) {
    if (std::chrono::steady_clock::now() >= deadline)
      throw OracleUnavailable("no reply at " + reply_path.string() + " within " + std::to_string(timeout.count()) + " ms");
    std::this_thread::sleep_for(poll);
  }
  auto lines = io::read_file(reply_path, [&](std::istream& is) { return parse_reply(is, q, lo_tokens); });
  if (lines.size() != queries.size())
    throw IoError(reply_path.string(), "expected " + std::to_string(queries.size()) + " reply lines, got " + std::to_string(lines.size()));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const bool ok = mode == RequestMode::Value ? lines[i].value.has_value() : !lines[i].dist.empty();
    if (!ok) throw IoError(reply_path.string(), "line " + std::to_string(i + 1) + ": reply kind does not match the request mode");
  }
  std::filesystem::remove(reply_path);
  return lines;
}

/// Client for an external model served over the file protocol. Strictly serial.
class FileOracle final : public PredictionOracle {
 public:
  FileOracle(FileOracleConfig cfg, int n, std::int64_t q) : cfg_(std::move(cfg)), n_(n), q_(q) {
    if (cfg_.tokens && cfg_.tokens->q() != q) throw std::invalid_argument("FileOracle: token scheme modulus differs");
    std::filesystem::create_directories(cfg_.request_dir);
    std::filesystem::create_directories(cfg_.reply_dir);
  }

  [[nodiscard]] std::int64_t modulus() const override { return q_; }
  [[nodiscard]] bool supports_distribution() const override { return cfg_.tokens.has_value(); }

  std::vector<std::int64_t> predict(std::span<const IntVec> queries) override {
    auto lines = roundtrip(queries, RequestMode::Value);
    std::vector<std::int64_t> out;
    out.reserve(lines.size());
    for (auto& l : lines) out.push_back(*l.value);
    return out;
  }

  std::vector<Distribution> predict_distribution(std::span<const IntVec> queries) override {
    if (!cfg_.tokens) return PredictionOracle::predict_distribution(queries);
    auto lines = roundtrip(queries, RequestMode::Dist);
    std::vector<Distribution> out;
    out.reserve(lines.size());
    for (auto& l : lines) out.push_back(std::move(l.dist));
    return out;
  }

  [[nodiscard]] std::uint64_t requests_sent() const noexcept { return seq_; }

 private:
  std::vector<ReplyLine> roundtrip(std::span<const IntVec> queries, RequestMode mode) {
    const auto seq = seq_++;
    const std::size_t lo = cfg_.tokens ? static_cast<std::size_t>(cfg_.tokens->lo_tokens()) : 0;
    return file_oracle_roundtrip(cfg_.request_dir / request_name(seq), cfg_.reply_dir / reply_name(seq), cfg_.timeout,
                                 queries, n_, q_, mode, lo, cfg_.poll);
  }

  FileOracleConfig cfg_;
  int n_;
  std::int64_t q_;
  std::uint64_t seq_ = 0;
};

/// Answers requests appearing in `request_dir` with `oracle` until `stop` is set. Test and demo helper.
inline void serve_requests(PredictionOracle& oracle, const std::filesystem::path& request_dir,
                           const std::filesystem::path& reply_dir, const std::stop_token& stop,
                           std::chrono::milliseconds poll = std::chrono::milliseconds(2)) {
  std::filesystem::create_directories(reply_dir);
  for (std::uint64_t seq = 0; !stop.stop_requested();) {
    const auto req_path = request_dir / request_name(seq);
    if (!std::filesystem::exists(req_path)) {
      std::this_thread::sleep_for(poll);
      continue;
    }
    std::vector<ReplyLine> lines;
    try {
      auto req = io::read_file(req_path, [](std::istream& is) { return read_request(is); });
      if (req.mode == RequestMode::Value) {
        for (auto v : oracle.predict(req.queries)) lines.push_back({v, {}});
      } else {
        for (auto& d : oracle.predict_distribution(req.queries)) lines.push_back({std::nullopt, std::move(d)});
      }
      write_atomically(reply_dir / reply_name(seq), [&](std::ostream& os) { serialize_reply(os, lines); });
    } catch (const std::exception& e) {
      write_atomically(reply_dir / reply_name(seq), [&](std::ostream& os) { os << "E " << e.what() << '\n'; });
    }
    std::filesystem::remove(req_path);
    ++seq;
  }
}

}  // namespace verde
