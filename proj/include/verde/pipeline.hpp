#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "verde/analysis.hpp"
#include "verde/error.hpp"
#include "verde/io.hpp"
#include "verde/lwe.hpp"
#include "verde/oracle.hpp"
#include "verde/recovery.hpp"
#include "verde/reduction.hpp"
#include "verde/rng.hpp"
#include "verde/tokenizer.hpp"

namespace verde {

// ---------------------------------------------------------------------------
// Moduli

inline bool is_prime(std::uint64_t n) {
  if (n < 2) return false;
  for (std::uint64_t p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    if (n % p == 0) return n == p;
  }
  auto mulmod = [n](std::uint64_t a, std::uint64_t b) {
    return static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) * b % n);
  };
  auto powmod = [&](std::uint64_t a, std::uint64_t e) {
    std::uint64_t r = 1;
    for (; e; e >>= 1, a = mulmod(a, a))
      if (e & 1) r = mulmod(r, a);
    return r;
  };
  std::uint64_t d = n - 1;
  int s = 0;
  for (; (d & 1) == 0; d >>= 1) ++s;
  // These bases are deterministic for all 64-bit n.
  for (std::uint64_t a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    std::uint64_t x = powmod(a, d);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int i = 1; i < s && composite; ++i) {
      x = mulmod(x, x);
      if (x == n - 1) composite = false;
    }
    if (composite) return false;
  }
  return true;
}

/// Moduli used by the published parameter sets, keyed by log2 q.
inline const std::map<int, std::int64_t>& known_moduli() {
  static const std::map<int, std::int64_t> m{{12, 3329},    {14, 11197},    {16, 42899},   {18, 222553},
                                              {20, 842779}, {21, 1489513}, {27, 94056013}, {41, 2199023255531}};
  return m;
}

/// Known modulus for log2 q, otherwise the largest prime below 2^logq.
inline std::int64_t modulus_for_logq(int logq) {
  if (logq < 2 || logq > 62) throw std::invalid_argument("logq must lie in [2, 62]");
  if (auto it = known_moduli().find(logq); it != known_moduli().end()) return it->second;
  for (std::uint64_t c = (1ULL << logq) - 1;; --c)
    if (is_prime(c)) return static_cast<std::int64_t>(c);
}

// ---------------------------------------------------------------------------
// Experiment configuration

enum class OracleKind { Cheat, File };

struct RecoverySettings {
  OracleKind oracle = OracleKind::Cheat;
  Distinguisher distinguisher = Distinguisher::OneBit;
  int h_min = 1;
  int h_max = 0;
  double noise = 0.0;
  double confusion = 0.0;
  double smear = 0.0;
  std::uint64_t seed = 0;
  /// Maximum oracle queries for the attack stage; 0 means unlimited.
  std::uint64_t query_budget = 0;
  std::filesystem::path request_dir;
  std::filesystem::path reply_dir;
  std::int64_t timeout_ms = 60000;
};

struct TokenSettings {
  bool export_tokens = false;
  std::optional<std::int64_t> q;
  std::optional<std::int64_t> base;
  std::int64_t bucket = 1;

  [[nodiscard]] TokenScheme scheme(std::int64_t modulus) const { return TokenScheme::for_modulus(modulus, bucket, base); }
};

struct ExperimentConfig {
  LweParams lwe{32, 967, 3.0};
  SecretDist dist = SecretDist::Binary;
  int h = 2;
  std::uint64_t secret_seed = 0;
  std::size_t sample_count = 0;  // 0: 4n
  std::uint64_t sample_seed = 0;
  ReductionConfig reduction;
  std::size_t target_count = 1024;
  unsigned jobs = 0;
  std::uint64_t reduction_seed = 0;
  TokenSettings tokens;
  RecoverySettings recovery;
  std::filesystem::path output_dir;

  [[nodiscard]] std::size_t originals() const {
    return sample_count > 0 ? sample_count : default_original_count(lwe);
  }

  void validate() const {
    if (h < 1 || h > lwe.n()) throw std::invalid_argument("config: secret.h must lie in [1, n]");
    if (originals() < static_cast<std::size_t>(reduction.rows(lwe.n())))
      throw std::invalid_argument("config: samples.count is smaller than the rows per matrix");
    reduction.validate(lwe.n());
    if (target_count < 2 * kHeldOutCount) throw std::invalid_argument("config: reduction.target_count must be >= 256");
    if (tokens.q && *tokens.q != lwe.q())
      throw std::invalid_argument("config: tokens.q = " + std::to_string(*tokens.q) + " does not match lwe.q = " +
                                  std::to_string(lwe.q()));
    if (tokens.export_tokens || recovery.distinguisher == Distinguisher::Emd) (void)tokens.scheme(lwe.q());
    if (recovery.h_min < 1) throw std::invalid_argument("config: recovery.h_min must be >= 1");
    if (recovery.h_max != 0 && recovery.h_max < recovery.h_min)
      throw std::invalid_argument("config: recovery.h_max is below recovery.h_min");
    if (!(recovery.confusion >= 0.0 && recovery.confusion <= 1.0))
      throw std::invalid_argument("config: recovery.confusion must lie in [0,1]");
    if (!(recovery.noise >= 0.0)) throw std::invalid_argument("config: recovery.noise must be >= 0");
    if (recovery.oracle == OracleKind::File && (recovery.request_dir.empty() || recovery.reply_dir.empty()))
      throw std::invalid_argument("config: the file oracle needs recovery.request_dir and recovery.reply_dir");
    if (recovery.timeout_ms < 1) throw std::invalid_argument("config: recovery.timeout_ms must be positive");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline bool parse_bool(const std::string& v, std::size_t line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ProtocolError(line, "expected a boolean, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& v, std::size_t line) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(static_cast<int>(io::parse_int(trim(tok), line)));
  if (out.empty()) throw ProtocolError(line, "empty list");
  return out;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace detail

/// Flat "section.key = value" lines; '#' starts a comment.
inline ExperimentConfig parse_config(std::istream& is) {
  std::map<std::string, std::pair<std::string, std::size_t>> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ProtocolError(line_no, "expected 'section.key = value'");
    auto key = detail::trim(std::string_view(body).substr(0, eq));
    auto value = detail::trim(std::string_view(body).substr(eq + 1));
    if (key.find('.') == std::string::npos) throw ProtocolError(line_no, "key '" + key + "' has no section prefix");
    if (!kv.emplace(key, std::make_pair(value, line_no)).second) throw ProtocolError(line_no, "duplicate key '" + key + "'");
  }

  auto take = [&](const std::string& key) -> std::optional<std::pair<std::string, std::size_t>> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  auto int_of = [&](const std::string& key, auto fallback) {
    using T = decltype(fallback);
    if (auto v = take(key)) return static_cast<T>(io::parse_int(v->first, v->second));
    return fallback;
  };
  auto real_of = [&](const std::string& key, double fallback) {
    if (auto v = take(key)) return io::parse_double(v->first, v->second);
    return fallback;
  };

  ExperimentConfig c;
  try {
    const int n = int_of("lwe.n", 32);
    auto q_entry = take("lwe.q");
    auto logq_entry = take("lwe.logq");
    std::int64_t q = 967;
    if (q_entry && logq_entry) throw ProtocolError(logq_entry->second, "give either lwe.q or lwe.logq, not both");
    if (q_entry) q = io::parse_int(q_entry->first, q_entry->second);
    if (logq_entry) q = modulus_for_logq(static_cast<int>(io::parse_int(logq_entry->first, logq_entry->second)));
    c.lwe = LweParams(n, q, real_of("lwe.sigma_e", 3.0));

    if (auto v = take("secret.dist")) c.dist = parse_secret_dist(v->first);
    c.h = int_of("secret.h", c.h);
    c.secret_seed = int_of("secret.seed", c.secret_seed);
    c.sample_count = int_of("samples.count", c.sample_count);
    c.sample_seed = int_of("samples.seed", c.sample_seed);

    auto& r = c.reduction;
    r.omega = int_of("reduction.omega", r.omega);
    r.beta1 = int_of("reduction.beta1", r.beta1);
    r.beta2 = int_of("reduction.beta2", r.beta2);
    r.delta1 = real_of("reduction.delta1", r.delta1);
    r.delta2 = real_of("reduction.delta2", r.delta2);
    r.stop.max_tours = int_of("reduction.max_tours", r.stop.max_tours);
    r.stop.min_improvement = real_of("reduction.min_improvement", r.stop.min_improvement);
    r.upgrade_threshold = real_of("reduction.upgrade_threshold", r.upgrade_threshold);
    r.rows_per_matrix = int_of("reduction.rows", r.rows_per_matrix);
    if (auto v = take("reduction.precision")) r.precision_bits = detail::parse_int_list(v->first, v->second);
    c.target_count = int_of("reduction.target_count", c.target_count);
    c.jobs = int_of("reduction.jobs", c.jobs);
    c.reduction_seed = int_of("reduction.seed", c.reduction_seed);

    if (auto v = take("tokens.export")) c.tokens.export_tokens = detail::parse_bool(v->first, v->second);
    if (auto v = take("tokens.q")) c.tokens.q = io::parse_int(v->first, v->second);
    if (auto v = take("tokens.base")) c.tokens.base = io::parse_int(v->first, v->second);
    c.tokens.bucket = int_of("tokens.bucket", c.tokens.bucket);

    auto& rec = c.recovery;
    if (auto v = take("recovery.oracle")) {
      if (v->first == "cheat") {
        rec.oracle = OracleKind::Cheat;
      } else if (v->first == "file") {
        rec.oracle = OracleKind::File;
      } else {
        throw ProtocolError(v->second, "recovery.oracle must be 'cheat' or 'file'");
      }
    }
    if (auto v = take("recovery.distinguisher")) {
      if (v->first == "onebit") {
        rec.distinguisher = Distinguisher::OneBit;
      } else if (v->first == "emd") {
        rec.distinguisher = Distinguisher::Emd;
      } else {
        throw ProtocolError(v->second, "recovery.distinguisher must be 'onebit' or 'emd'");
      }
    }
    rec.h_min = int_of("recovery.h_min", rec.h_min);
    rec.h_max = int_of("recovery.h_max", rec.h_max);
    rec.noise = real_of("recovery.noise", rec.noise);
    rec.confusion = real_of("recovery.confusion", rec.confusion);
    rec.smear = real_of("recovery.smear", rec.smear);
    rec.seed = int_of("recovery.seed", rec.seed);
    rec.query_budget = int_of("recovery.query_budget", rec.query_budget);
    if (auto v = take("recovery.request_dir")) rec.request_dir = v->first;
    if (auto v = take("recovery.reply_dir")) rec.reply_dir = v->first;
    rec.timeout_ms = int_of("recovery.timeout_ms", rec.timeout_ms);
    if (auto v = take("output.dir")) c.output_dir = v->first;
  } catch (const std::invalid_argument& e) {
    throw Error(std::string("config: ") + e.what());
  }
  if (!kv.empty()) throw ProtocolError(kv.begin()->second.second, "unknown key '" + kv.begin()->first + "'");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw Error(e.what());
  }
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return io::read_file(path, [](std::istream& is) { return parse_config(is); });
}

/// Canonical key/value form; parse_config(write_config(c)) reproduces c.
inline std::map<std::string, std::string> config_entries(const ExperimentConfig& c) {
  using io::format_double;
  std::map<std::string, std::string> m;
  m["lwe.n"] = std::to_string(c.lwe.n());
  m["lwe.q"] = std::to_string(c.lwe.q());
  m["lwe.sigma_e"] = format_double(c.lwe.sigma_e());
  m["secret.dist"] = std::string(to_string(c.dist));
  m["secret.h"] = std::to_string(c.h);
  m["secret.seed"] = std::to_string(c.secret_seed);
  m["samples.count"] = std::to_string(c.sample_count);
  m["samples.seed"] = std::to_string(c.sample_seed);
  const auto& r = c.reduction;
  m["reduction.omega"] = std::to_string(r.omega);
  m["reduction.beta1"] = std::to_string(r.beta1);
  m["reduction.beta2"] = std::to_string(r.beta2);
  m["reduction.delta1"] = format_double(r.delta1);
  m["reduction.delta2"] = format_double(r.delta2);
  m["reduction.max_tours"] = std::to_string(r.stop.max_tours);
  m["reduction.min_improvement"] = format_double(r.stop.min_improvement);
  m["reduction.upgrade_threshold"] = format_double(r.upgrade_threshold);
  m["reduction.rows"] = std::to_string(r.rows_per_matrix);
  m["reduction.precision"] = detail::join_ints(r.precision_bits);
  m["reduction.target_count"] = std::to_string(c.target_count);
  m["reduction.jobs"] = std::to_string(c.jobs);
  m["reduction.seed"] = std::to_string(c.reduction_seed);
  m["tokens.export"] = c.tokens.export_tokens ? "true" : "false";
  if (c.tokens.q) m["tokens.q"] = std::to_string(*c.tokens.q);
  if (c.tokens.base) m["tokens.base"] = std::to_string(*c.tokens.base);
  m["tokens.bucket"] = std::to_string(c.tokens.bucket);
  const auto& rec = c.recovery;
  m["recovery.oracle"] = rec.oracle == OracleKind::Cheat ? "cheat" : "file";
  m["recovery.distinguisher"] = rec.distinguisher == Distinguisher::OneBit ? "onebit" : "emd";
  m["recovery.h_min"] = std::to_string(rec.h_min);
  m["recovery.h_max"] = std::to_string(rec.h_max);
  m["recovery.noise"] = format_double(rec.noise);
  m["recovery.confusion"] = format_double(rec.confusion);
  m["recovery.smear"] = format_double(rec.smear);
  m["recovery.seed"] = std::to_string(rec.seed);
  m["recovery.query_budget"] = std::to_string(rec.query_budget);
  if (!rec.request_dir.empty()) m["recovery.request_dir"] = rec.request_dir.string();
  if (!rec.reply_dir.empty()) m["recovery.reply_dir"] = rec.reply_dir.string();
  m["recovery.timeout_ms"] = std::to_string(rec.timeout_ms);
  if (!c.output_dir.empty()) m["output.dir"] = c.output_dir.string();
  return m;
}

inline void write_config(std::ostream& os, const ExperimentConfig& c) {
  for (const auto& [k, v] : config_entries(c)) os << k << " = " << v << '\n';
}

// ---------------------------------------------------------------------------
// Published parameter bundles

struct Preset {
  int n;
  int logq;
  std::int64_t q;
  int beta1;
  double delta1;
  int beta2;
  double delta2;
  std::int64_t base;
  std::int64_t bucket;
};

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> p{
      {256, 12, 3329, 35, 0.99, 40, 1.0, 417, 1},
      {256, 14, 11197, 35, 0.99, 40, 1.0, 1400, 1},
      {256, 16, 42899, 35, 0.99, 40, 1.0, 5363, 4},
      {256, 18, 222553, 35, 0.99, 40, 0.99, 27820, 16},
      {256, 20, 842779, 35, 0.99, 40, 0.99, 105348, 64},
      {350, 21, 1489513, 30, 0.96, 40, 0.99, 186190, 128},
      {350, 27, 94056013, 30, 0.96, 40, 0.99, 5878501, 4096},
      {512, 41, 2199023255531, 18, 0.93, 22, 0.96, 137438953471, 134217728},
  };
  return p;
}

/// Full-scale configuration for (n, log2 q). Loads and validates; running it is a multi-week job.
inline ExperimentConfig preset_config(int n, int logq) {
  for (const auto& p : presets()) {
    if (p.n != n || p.logq != logq) continue;
    ExperimentConfig c;
    c.lwe = LweParams(p.n, p.q, 3.0);
    c.h = std::max(1, n / 20);
    c.reduction.omega = 10;
    c.reduction.beta1 = p.beta1;
    c.reduction.delta1 = p.delta1;
    c.reduction.beta2 = p.beta2;
    c.reduction.delta2 = p.delta2;
    if (n == 512) c.reduction.rows_per_matrix = 448;
    c.target_count = 4000000;
    c.tokens.q = p.q;
    c.tokens.base = p.base;
    c.tokens.bucket = p.bucket;
    c.validate();
    return c;
  }
  throw std::invalid_argument("no preset for n=" + std::to_string(n) + ", logq=" + std::to_string(logq));
}

// ---------------------------------------------------------------------------
// Running

/// Output root from VERDE_OUT, else ./verde-out.
inline std::filesystem::path default_output_root() {
  if (const char* env = std::getenv("VERDE_OUT"); env && *env) return env;
  return "verde-out";
}

enum class StageOutcome { Ran, Cached, Failed, Skipped };

inline std::string_view to_string(StageOutcome o) noexcept {
  switch (o) {
    case StageOutcome::Ran: return "ran";
    case StageOutcome::Cached: return "cached";
    case StageOutcome::Failed: return "failed";
    case StageOutcome::Skipped: return "skipped";
  }
  return "?";
}

struct StageReport {
  std::string name;
  StageOutcome outcome = StageOutcome::Skipped;
  double seconds = 0.0;
  std::string message;
};

struct RunReport {
  std::vector<StageReport> stages;
  std::optional<NoModReport> nomod;
  std::optional<double> reduction_factor;
  std::optional<RecoveryStatus> recovery;
  std::optional<Secret> guess;
  int h_used = 0;

  [[nodiscard]] double total_seconds() const {
    double t = 0.0;
    for (const auto& s : stages) t += s.seconds;
    return t;
  }
  [[nodiscard]] const StageReport* stage(std::string_view name) const {
    for (const auto& s : stages)
      if (s.name == name) return &s;
    return nullptr;
  }
  [[nodiscard]] bool ok() const {
    for (const auto& s : stages)
      if (s.outcome == StageOutcome::Failed || s.outcome == StageOutcome::Skipped) return false;
    return true;
  }
};

inline void write_report(std::ostream& os, const RunReport& r) {
  for (const auto& s : r.stages) {
    os << "stage " << s.name << ' ' << to_string(s.outcome) << ' ' << io::format_double(s.seconds) << 's';
    if (!s.message.empty()) os << "  " << s.message;
    os << '\n';
  }
  if (r.nomod) os << "nomod " << io::format_double(r.nomod->percentage) << "%\n";
  if (r.reduction_factor) os << "reduction_factor " << io::format_double(*r.reduction_factor) << '\n';
  if (r.recovery) os << "recovery " << to_string(*r.recovery) << " h=" << r.h_used << '\n';
  os << "total " << io::format_double(r.total_seconds()) << "s\n";
}

/// Counts queries and fails once a budget is spent.
class BudgetedOracle final : public PredictionOracle {
 public:
  BudgetedOracle(PredictionOracle& inner, std::uint64_t budget) : inner_(inner), budget_(budget) {}

  [[nodiscard]] std::int64_t modulus() const override { return inner_.modulus(); }
  [[nodiscard]] bool supports_distribution() const override { return inner_.supports_distribution(); }
  [[nodiscard]] bool concurrent_safe() const override { return false; }

  std::vector<std::int64_t> predict(std::span<const IntVec> queries) override {
    charge(queries.size());
    return inner_.predict(queries);
  }
  std::vector<Distribution> predict_distribution(std::span<const IntVec> queries) override {
    charge(queries.size());
    return inner_.predict_distribution(queries);
  }
  [[nodiscard]] std::uint64_t used() const noexcept { return used_; }

 private:
  void charge(std::size_t k) {
    if (budget_ != 0 && used_ + k > budget_)
      throw OracleUnavailable("query budget of " + std::to_string(budget_) + " exhausted");
    used_ += k;
  }

  PredictionOracle& inner_;
  std::uint64_t budget_;
  std::uint64_t used_ = 0;
};

namespace detail {

inline std::uint64_t stamp_of(const ExperimentConfig& c, std::initializer_list<std::string_view> sections,
                              std::uint64_t upstream) {
  std::string text;
  for (const auto& [k, v] : config_entries(c)) {
    if (k == "reduction.jobs") continue;
    for (auto s : sections) {
      if (k.size() > s.size() && k.compare(0, s.size(), s) == 0 && k[s.size()] == '.') {
        text += k + '=' + v + '\n';
        break;
      }
    }
  }
  return hash_bytes(text, upstream);
}

inline std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

inline void write_recovery(std::ostream& os, const RecoveryResult& r) {
  os << "status=" << to_string(r.status) << " h=" << r.h_used;
  if (r.guess) os << " dist=" << to_string(r.guess->dist());
  os << '\n';
  if (r.guess) {
    io::write_int_row(os, r.guess->entries());
    os << '\n';
  }
}

struct StoredRecovery {
  RecoveryStatus status = RecoveryStatus::Failure;
  int h = 0;
  std::optional<Secret> guess;
};

inline StoredRecovery read_recovery(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ProtocolError(1, "empty recovery file");
  const auto h = io::parse_header(line, 1);
  StoredRecovery out;
  const auto& st = io::require(h, "status");
  if (st == "full") {
    out.status = RecoveryStatus::FullRecovery;
  } else if (st == "partial") {
    out.status = RecoveryStatus::PartialRecovery;
  } else if (st == "failure") {
    out.status = RecoveryStatus::Failure;
  } else {
    throw ProtocolError(1, "unknown status '" + st + "'");
  }
  out.h = static_cast<int>(io::parse_int(io::require(h, "h"), 1));
  if (auto it = h.find("dist"); it != h.end()) {
    if (!std::getline(is, line)) throw ProtocolError(2, "missing secret entries");
    IntVec e;
    for (auto tok : io::split_spaces(line)) e.push_back(io::parse_int(tok, 2));
    out.guess = Secret(parse_secret_dist(it->second), std::move(e));
  }
  return out;
}

}  // namespace detail

/// Artifact layout under the output directory.
struct RunPaths {
  std::filesystem::path root;
  [[nodiscard]] std::filesystem::path secret() const { return root / "secret.txt"; }
  [[nodiscard]] std::filesystem::path originals() const { return root / "originals.txt"; }
  [[nodiscard]] std::filesystem::path train() const { return root / "train.txt"; }
  [[nodiscard]] std::filesystem::path heldout() const { return root / "heldout.txt"; }
  [[nodiscard]] std::filesystem::path metrics() const { return root / "metrics.csv"; }
  [[nodiscard]] std::filesystem::path tokens() const { return root / "tokens.txt"; }
  [[nodiscard]] std::filesystem::path analysis() const { return root / "analysis.txt"; }
  [[nodiscard]] std::filesystem::path recovery() const { return root / "recovery.txt"; }
  [[nodiscard]] std::filesystem::path report() const { return root / "report.txt"; }
  [[nodiscard]] std::filesystem::path stamp(std::string_view stage) const { return root / (std::string(stage) + ".stamp"); }
};

/// gen -> preprocess -> tokens (optional) -> analyze -> attack.
///
/// Each stage leaves a stamp hashing its inputs; a stage whose stamp and
/// artifacts are present is not rerun. A failed stage skips everything after it.
inline RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const RunPaths paths{cfg.output_dir.empty() ? default_output_root() : cfg.output_dir};
  std::filesystem::create_directories(paths.root);
  RunReport rep;
  bool blocked = false;

  auto stage = [&](std::string name, std::uint64_t stamp, std::vector<std::filesystem::path> artifacts,
                   const std::function<void()>& body, const std::function<void()>& load) {
    StageReport sr;
    sr.name = name;
    if (blocked) {
      sr.message = "upstream stage failed";
      rep.stages.push_back(std::move(sr));
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto stamp_path = paths.stamp(name);
    const auto want = detail::hex(stamp);
    bool cached = std::filesystem::exists(stamp_path);
    if (cached) {
      std::ifstream is(stamp_path);
      std::string have;
      std::getline(is, have);
      cached = have == want;
    }
    for (const auto& a : artifacts) cached = cached && std::filesystem::exists(a);
    try {
      if (cached) {
        load();
        sr.outcome = StageOutcome::Cached;
      } else {
        std::filesystem::remove(stamp_path);
        body();
        io::write_file(stamp_path, [&](std::ostream& os) { os << want << '\n'; });
        sr.outcome = StageOutcome::Ran;
      }
    } catch (const std::exception& e) {
      sr.outcome = StageOutcome::Failed;
      sr.message = e.what();
      blocked = true;
    }
    sr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.stages.push_back(std::move(sr));
  };

  std::optional<Secret> secret;
  std::optional<SampleSet> originals;
  std::optional<TrainingSet> ts;

  const auto gen_stamp = detail::stamp_of(cfg, {"lwe", "secret", "samples"}, 0);
  auto load_gen = [&] {
    secret = io::load_secret(paths.secret());
    originals = io::load_sample_set(paths.originals());
  };
  stage("gen", gen_stamp, {paths.secret(), paths.originals()}, [&] {
    secret = sample_secret(cfg.lwe, cfg.dist, cfg.h, cfg.secret_seed);
    originals = gen_samples(cfg.lwe, *secret, cfg.originals(), cfg.sample_seed);
    io::save(paths.secret(), *secret);
    io::save(paths.originals(), *originals);
  }, load_gen);

  const auto pre_stamp = detail::stamp_of(cfg, {"reduction"}, gen_stamp);
  auto load_pre = [&] {
    ts = TrainingSet{io::load_sample_set(paths.train()), io::load_sample_set(paths.heldout()), {}};
  };
  stage("preprocess", pre_stamp, {paths.train(), paths.heldout(), paths.metrics()}, [&] {
    ts = build_training_set(*originals, cfg.reduction, cfg.target_count, cfg.reduction_seed, cfg.jobs);
    io::save(paths.train(), ts->train);
    io::save(paths.heldout(), ts->heldout);
    io::write_file(paths.metrics(), [&](std::ostream& os) { write_metrics_csv(os, ts->metrics); });
  }, load_pre);
  if (ts) {
    std::vector<LweSample> all = ts->train.samples;
    all.insert(all.end(), ts->heldout.samples.begin(), ts->heldout.samples.end());
    if (!all.empty()) rep.reduction_factor = reduction_factor(all, cfg.lwe.q());
  }

  if (cfg.tokens.export_tokens) {
    const auto tok_stamp = detail::stamp_of(cfg, {"tokens"}, pre_stamp);
    stage("tokens", tok_stamp, {paths.tokens()}, [&] { export_dataset(ts->train, cfg.tokens.scheme(cfg.lwe.q()), paths.tokens()); },
          [] {});
  }

  const auto ana_stamp = detail::stamp_of(cfg, {}, pre_stamp);
  auto load_ana = [&] { rep.nomod = nomod(ts->train, *secret); };
  stage("analyze", ana_stamp, {paths.analysis()}, [&] {
    rep.nomod = nomod(ts->train, *secret);
    io::write_file(paths.analysis(), [&](std::ostream& os) {
      os << "nomod=" << io::format_double(rep.nomod->percentage) << " samples=" << rep.nomod->sample_count
         << " threshold_hit=" << (rep.nomod->threshold_hit ? "true" : "false") << '\n';
    });
  }, load_ana);

  const auto atk_stamp = detail::stamp_of(cfg, {"recovery"}, cfg.tokens.export_tokens ? detail::stamp_of(cfg, {"tokens"}, pre_stamp) : pre_stamp);
  auto load_atk = [&] {
    auto r = io::read_file(paths.recovery(), [](std::istream& is) { return detail::read_recovery(is); });
    rep.recovery = r.status;
    rep.guess = r.guess;
    rep.h_used = r.h;
  };
  stage("attack", atk_stamp, {paths.recovery()}, [&] {
    const auto& rc = cfg.recovery;
    std::optional<TokenScheme> scheme;
    if (rc.distinguisher == Distinguisher::Emd) scheme = cfg.tokens.scheme(cfg.lwe.q());
    std::unique_ptr<PredictionOracle> base;
    if (rc.oracle == OracleKind::Cheat) {
      base = std::make_unique<CheatingOracle>(
          CheatingOracleConfig{*secret, cfg.lwe.q(), rc.noise, rc.confusion, rc.seed, false, scheme, rc.smear});
    } else {
      base = std::make_unique<FileOracle>(
          FileOracleConfig{rc.request_dir, rc.reply_dir, std::chrono::milliseconds(rc.timeout_ms), std::chrono::milliseconds(5), scheme},
          cfg.lwe.n(), cfg.lwe.q());
    }
    BudgetedOracle oracle(*base, rc.query_budget);
    RecoveryOptions opt;
    opt.dist = cfg.dist;
    opt.h_min = rc.h_min;
    opt.h_max = rc.h_max;
    opt.seed = rc.seed;
    opt.distinguisher = rc.distinguisher;
    if (cfg.dist == SecretDist::Gaussian) opt.lab_secret = *secret;
    const auto r = recover(oracle, ts->heldout, *originals, opt);
    rep.recovery = r.status;
    rep.guess = r.guess;
    rep.h_used = r.h_used;
    io::write_file(paths.recovery(), [&](std::ostream& os) { detail::write_recovery(os, r); });
  }, load_atk);

  io::write_file(paths.report(), [&](std::ostream& os) { write_report(os, rep); });
  return rep;
}

}  // namespace verde
