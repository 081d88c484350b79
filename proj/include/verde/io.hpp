#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "verde/error.hpp"
#include "verde/lwe.hpp"

namespace verde::io {

using Header = std::map<std::string, std::string, std::less<>>;

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::int64_t parse_int(std::string_view tok, std::size_t line) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ProtocolError(line, "expected an integer, got '" + std::string(tok) + "'");
  return v;
}

inline double parse_double(std::string_view tok, std::size_t line) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ProtocolError(line, "expected a number, got '" + std::string(tok) + "'");
  return v;
}

/// Header lines are space-separated key=value pairs.
inline Header parse_header(std::string_view line, std::size_t line_no = 1) {
  Header h;
  for (auto tok : split_spaces(line)) {
    auto eq = tok.find('=');
    if (eq == std::string_view::npos || eq == 0) throw ProtocolError(line_no, "malformed header field '" + std::string(tok) + "'");
    h.emplace(std::string(tok.substr(0, eq)), std::string(tok.substr(eq + 1)));
  }
  return h;
}

inline const std::string& require(const Header& h, std::string_view key, std::size_t line_no = 1) {
  auto it = h.find(key);
  if (it == h.end()) throw ProtocolError(line_no, "header is missing '" + std::string(key) + "'");
  return it->second;
}

inline void write_int_row(std::ostream& os, std::span<const std::int64_t> row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) os << ' ';
    os << row[i];
  }
}

// ---------------------------------------------------------------------------
// SampleSet: header line, then one line "a_1 ... a_n b" per sample.

inline void write_sample_set(std::ostream& os, const SampleSet& set) {
  os << "n=" << set.params.n() << " q=" << set.params.q() << " sigma_e=" << format_double(set.params.sigma_e())
     << " kind=" << to_string(set.kind) << " seed=" << set.seed << " count=" << set.size() << '\n';
  for (const auto& s : set.samples) {
    write_int_row(os, s.a);
    os << ' ' << s.b << '\n';
  }
}

inline SampleSet read_sample_set(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ProtocolError(1, "missing header");
  const Header h = parse_header(line);
  const auto n = parse_int(require(h, "n"), 1);
  const auto q = parse_int(require(h, "q"), 1);
  const double sigma = parse_double(require(h, "sigma_e"), 1);
  const auto count = parse_int(require(h, "count"), 1);
  std::uint64_t seed = 0;
  {
    const auto& s = require(h, "seed");
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ProtocolError(1, "bad seed");
  }
  SampleSet set{LweParams(static_cast<int>(n), q, sigma), {}, parse_sample_kind(require(h, "kind")), seed};
  set.samples.reserve(static_cast<std::size_t>(count));
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto toks = split_spaces(line);
    if (static_cast<std::int64_t>(toks.size()) != n + 1)
      throw ProtocolError(line_no, "expected " + std::to_string(n + 1) + " integers, got " + std::to_string(toks.size()));
    LweSample s;
    s.a.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) s.a[i] = parse_int(toks[i], line_no);
    s.b = parse_int(toks[n], line_no);
    set.samples.push_back(std::move(s));
  }
  if (static_cast<std::int64_t>(set.size()) != count)
    throw ProtocolError(line_no, "header announces " + std::to_string(count) + " samples, found " + std::to_string(set.size()));
  set.validate();
  return set;
}

// ---------------------------------------------------------------------------
// Secret: header "n=.. dist=.. h=..", then one line of entries.

inline void write_secret(std::ostream& os, const Secret& s) {
  os << "n=" << s.n() << " dist=" << to_string(s.dist()) << " h=" << s.h() << '\n';
  write_int_row(os, s.entries());
  os << '\n';
}

inline Secret read_secret(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ProtocolError(1, "missing header");
  const Header h = parse_header(line);
  const auto n = parse_int(require(h, "n"), 1);
  const auto dist = parse_secret_dist(require(h, "dist"));
  if (!std::getline(is, line)) throw ProtocolError(2, "missing entries");
  auto toks = split_spaces(line);
  if (static_cast<std::int64_t>(toks.size()) != n) throw ProtocolError(2, "expected " + std::to_string(n) + " entries");
  IntVec e;
  for (auto t : toks) e.push_back(parse_int(t, 2));
  return Secret(dist, std::move(e));
}

// ---------------------------------------------------------------------------
// Path helpers that attach the path to every failure.

template <class Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError(path.string(), "cannot open for writing");
  fn(os);
  os.flush();
  if (!os) throw IoError(path.string(), "write failed");
}

template <class Fn>
auto read_file(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream is(path);
  if (!is) throw IoError(path.string(), "cannot open for reading");
  try {
    return fn(is);
  } catch (const ProtocolError& e) {
    throw IoError(path.string(), e.what());
  }
}

inline void save(const std::filesystem::path& path, const SampleSet& set) {
  write_file(path, [&](std::ostream& os) { write_sample_set(os, set); });
}
inline void save(const std::filesystem::path& path, const Secret& s) {
  write_file(path, [&](std::ostream& os) { write_secret(os, s); });
}
inline SampleSet load_sample_set(const std::filesystem::path& path) {
  return read_file(path, [](std::istream& is) { return read_sample_set(is); });
}
inline Secret load_secret(const std::filesystem::path& path) {
  return read_file(path, [](std::istream& is) { return read_secret(is); });
}

}  // namespace verde::io
