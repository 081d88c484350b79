// verde: command-line driver for the LWE attack lab.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "verde/verde.hpp"

namespace fs = std::filesystem;
using namespace verde;

namespace {

fs::path out_dir(const std::string& flag) { return flag.empty() ? default_output_root() : fs::path(flag); }

double centered_std(const SampleSet& set) {
  double sum = 0.0, sq = 0.0;
  std::size_t k = 0;
  for (const auto& s : set.samples)
    for (auto v : s.a) {
      const auto c = static_cast<double>(center(v, set.params.q()));
      sum += c;
      sq += c * c;
      ++k;
    }
  if (k == 0) return 0.0;
  const double mean = sum / static_cast<double>(k);
  return std::sqrt(std::max(0.0, sq / static_cast<double>(k) - mean * mean));
}

struct AttackArgs {
  std::string train, heldout, originals, secret, out;
  std::string oracle = "cheat";
  std::string dist = "binary";
  std::string distinguisher = "onebit";
  int h_min = 1;
  int h_max = 0;
  double noise = 0.0;
  double confusion = 0.0;
  double smear = 0.0;
  std::uint64_t seed = 0;
  std::string request_dir, reply_dir;
  long timeout_ms = 60000;
  std::optional<std::int64_t> base;
  std::int64_t bucket = 1;
  std::optional<std::uint64_t> permute_seed;
  int drop_lowest = 0;
  int flip_top = 0;
};

std::unique_ptr<PredictionOracle> make_oracle(const AttackArgs& a, const LweParams& p, const std::optional<Secret>& secret) {
  std::optional<TokenScheme> scheme;
  if (a.distinguisher == "emd") scheme = TokenScheme::for_modulus(p.q(), a.bucket, a.base);
  if (a.oracle == "cheat") {
    if (!secret) throw std::invalid_argument("the cheating oracle needs --secret");
    return std::make_unique<CheatingOracle>(CheatingOracleConfig{*secret, p.q(), a.noise, a.confusion, a.seed, false, scheme, a.smear});
  }
  return std::make_unique<FileOracle>(
      FileOracleConfig{a.request_dir, a.reply_dir, std::chrono::milliseconds(a.timeout_ms), std::chrono::milliseconds(5), scheme},
      p.n(), p.q());
}

int run_attack(const AttackArgs& a) {
  auto originals = io::load_sample_set(a.originals);
  auto heldout = io::load_sample_set(a.heldout);
  if (!a.train.empty()) (void)io::load_sample_set(a.train);  // only checked for consistency
  std::optional<Secret> secret;
  if (!a.secret.empty()) secret = io::load_secret(a.secret);
  const int n = originals.params.n();

  RecoveryOptions opt;
  opt.dist = parse_secret_dist(a.dist);
  opt.h_min = a.h_min;
  opt.h_max = a.h_max;
  opt.seed = a.seed;
  opt.distinguisher = a.distinguisher == "emd" ? Distinguisher::Emd : Distinguisher::OneBit;
  if (opt.dist == SecretDist::Gaussian) opt.lab_secret = secret;

  // Tricks transform the instance; the cheating oracle's secret follows the same transform.
  std::optional<Permutation> pi;
  std::vector<int> dropped, flipped;
  if (a.permute_seed) {
    pi = Permutation::random(n, *a.permute_seed);
    originals = permute_instance(originals, *pi);
    heldout = permute_vectors(heldout, *pi);
    if (secret) secret = pi->apply(*secret);
    std::cout << "permuted columns with seed " << *a.permute_seed << '\n';
  }
  if (a.drop_lowest > 0 || a.flip_top > 0) {
    auto scorer = make_oracle(a, originals.params, secret);
    const auto scores = one_bit_scores(*scorer, heldout, a.seed).scores;
    if (a.drop_lowest > 0) {
      if (a.drop_lowest >= n) throw std::invalid_argument("--drop-lowest must be below n");
      auto keep = top_h(scores, n - a.drop_lowest);
      std::vector<char> kept(n, 0);
      for (int i : keep) kept[i] = 1;
      for (int i = 0; i < n; ++i)
        if (!kept[i]) dropped.push_back(i);
      originals = dimension_reduce(originals, dropped);
      heldout = dimension_reduce(heldout, dropped);
      if (secret) secret = dimension_reduce(*secret, dropped);
      if (opt.lab_secret) opt.lab_secret = secret;
      std::cout << "dropped " << dropped.size() << " lowest-scoring coordinates\n";
    } else {
      if (opt.dist != SecretDist::Binary) throw std::invalid_argument("--flip-top needs a binary secret");
      flipped = top_h(scores, a.flip_top);
      originals = hamming_reduce(originals, flipped);
      heldout = hamming_reduce(heldout, flipped);
      if (secret) secret = hamming_flip(*secret, flipped);
      std::cout << "flipped the " << flipped.size() << " top-scoring coordinates\n";
    }
  }

  auto oracle = make_oracle(a, originals.params, secret);
  auto res = recover(*oracle, heldout, originals, opt);
  for (const auto& d : res.diagnostics) std::cerr << "note: " << d << '\n';

  std::optional<Secret> guess = res.guess;
  if (guess && !flipped.empty()) guess = hamming_flip(*guess, flipped);
  if (guess && !dropped.empty()) guess = lift_secret(*guess, dropped, n);
  if (guess && pi) guess = pi->inverse().apply(*guess);

  std::cout << "status " << to_string(res.status) << " h=" << res.h_used << '\n';
  if (guess) {
    const auto out = out_dir(a.out) / "guess.txt";
    io::save(out, *guess);
    std::cout << "guess written to " << out.string() << '\n';
  }
  return res.status == RecoveryStatus::Failure ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LWE attack lab: generation, preprocessing, analysis, recovery and a uSVP baseline"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print this help and exit");

  // gen
  int n = 32, logq = 0, h = 2;
  std::int64_t q = 0;
  double sigma_e = 3.0;
  std::string dist = "binary", out;
  std::uint64_t seed = 0;
  std::size_t count = 0;
  auto* gen = app.add_subcommand("gen", "sample a secret and the original LWE samples");
  gen->add_option("--n", n, "dimension")->required();
  auto* logq_opt = gen->add_option("--logq", logq, "log2 q (published moduli, else largest prime below 2^logq)");
  gen->add_option("--q", q, "explicit modulus")->excludes(logq_opt);
  gen->add_option("--sigma-e", sigma_e, "error width");
  gen->add_option("--dist", dist, "binary | ternary | gaussian");
  gen->add_option("--h", h, "Hamming weight")->required();
  gen->add_option("--seed", seed);
  gen->add_option("--count", count, "number of samples (default 4n)");
  gen->add_option("--out", out, "output directory (default $VERDE_OUT or ./verde-out)");

  // preprocess
  std::string in;
  ReductionConfig red;
  std::size_t target = 1024;
  unsigned jobs = 0;
  auto* pre = app.add_subcommand("preprocess", "reduce matrices of original samples into a training set");
  pre->add_option("--in", in, "original samples")->required()->check(CLI::ExistingFile);
  pre->add_option("--omega", red.omega);
  pre->add_option("--beta1", red.beta1);
  pre->add_option("--beta2", red.beta2);
  pre->add_option("--delta1", red.delta1);
  pre->add_option("--delta2", red.delta2);
  pre->add_option("--rows", red.rows_per_matrix, "rows per matrix (default n)");
  pre->add_option("--max-tours", red.stop.max_tours);
  pre->add_option("--target-count", target);
  pre->add_option("--jobs", jobs, "worker threads (default: all cores)");
  pre->add_option("--seed", seed);
  pre->add_option("--out", out);

  // analyze
  std::string secret_path;
  auto* ana = app.add_subcommand("analyze", "NoMod and scaling-law prediction for a sample set");
  ana->add_option("--in", in)->required()->check(CLI::ExistingFile);
  ana->add_option("--secret", secret_path)->required()->check(CLI::ExistingFile);

  // attack
  AttackArgs atk;
  auto* att = app.add_subcommand("attack", "score bits with an oracle and verify candidate secrets");
  att->add_option("--train", atk.train, "training set (consistency check only)");
  att->add_option("--heldout", atk.heldout)->required()->check(CLI::ExistingFile);
  att->add_option("--originals", atk.originals)->required()->check(CLI::ExistingFile);
  att->add_option("--oracle", atk.oracle)->check(CLI::IsMember({"cheat", "file"}));
  att->add_option("--secret", atk.secret, "true secret (cheating oracle, gaussian validation)");
  att->add_option("--dist", atk.dist);
  att->add_option("--distinguisher", atk.distinguisher)->check(CLI::IsMember({"onebit", "emd"}));
  att->add_option("--h-min", atk.h_min);
  att->add_option("--h-max", atk.h_max, "default n/20");
  att->add_option("--noise", atk.noise);
  att->add_option("--confusion", atk.confusion);
  att->add_option("--smear", atk.smear, "distribution width in lo-tokens");
  att->add_option("--seed", atk.seed);
  att->add_option("--request-dir", atk.request_dir);
  att->add_option("--reply-dir", atk.reply_dir);
  att->add_option("--timeout-ms", atk.timeout_ms);
  std::int64_t base_flag = 0;
  att->add_option("--base", base_flag);
  att->add_option("--bucket", atk.bucket);
  std::uint64_t permute_seed = 0;
  auto* perm_opt = att->add_option("--permute-seed", permute_seed, "attack a column-permuted copy");
  auto* drop_opt = att->add_option("--drop-lowest", atk.drop_lowest, "remove the k lowest-scoring coordinates");
  att->add_option("--flip-top", atk.flip_top, "flip the k top-scoring coordinates (binary)")->excludes(drop_opt);
  att->add_option("--out", atk.out);

  // usvp
  UsvpConfig ucfg;
  auto* usv = app.add_subcommand("usvp", "Kannan-embedding baseline");
  usv->add_option("--in", in)->required()->check(CLI::ExistingFile);
  usv->add_option("--beta", ucfg.blocksize);
  usv->add_option("--max-loops", ucfg.max_loops);
  usv->add_option("--m", ucfg.samples, "samples in the embedding (default n)");
  usv->add_option("--embedding-factor", ucfg.embedding_factor);
  usv->add_option("--out", out);

  // estimate
  int k = 0;
  double factor = 0.0, base_cost = 1.0;
  auto* est = app.add_subcommand("estimate", "kick-out probability and scaling-law bound");
  est->add_option("--n", n)->required();
  est->add_option("--h", h)->required();
  est->add_option("--k", k, "coordinates kicked out");
  est->add_option("--base-cost", base_cost);
  est->add_option("--q", q);
  est->add_option("--factor", factor, "reduction factor");

  // export-tokens
  std::int64_t bucket = 1;
  auto* tok = app.add_subcommand("export-tokens", "write a token file for training");
  tok->add_option("--in", in)->required()->check(CLI::ExistingFile);
  tok->add_option("--base", base_flag);
  tok->add_option("--bucket", bucket);
  tok->add_option("--out", out, "token file path");

  // run
  std::string config_path, preset;
  auto* run = app.add_subcommand("run", "execute a full experiment from a config file");
  auto* cfg_opt = run->add_option("--config", config_path)->check(CLI::ExistingFile);
  run->add_option("--preset", preset, "n:logq of a published parameter set (prints it)")->excludes(cfg_opt);
  run->add_option("--out", out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const std::int64_t modulus = q > 0 ? q : modulus_for_logq(logq > 0 ? logq : 10);
      LweParams p(n, modulus, sigma_e);
      auto s = sample_secret(p, parse_secret_dist(dist), h, seed);
      auto set = gen_samples(p, s, count > 0 ? count : default_original_count(p), seed);
      const auto dir = out_dir(out);
      io::save(dir / "secret.txt", s);
      io::save(dir / "originals.txt", set);
      std::cout << "n=" << n << " q=" << modulus << " h=" << s.h() << " samples=" << set.size() << " -> " << dir.string() << '\n';
    } else if (*pre) {
      auto originals = io::load_sample_set(in);
      auto ts = build_training_set(originals, red, target, seed, jobs);
      const auto dir = out_dir(out);
      io::save(dir / "train.txt", ts.train);
      io::save(dir / "heldout.txt", ts.heldout);
      io::write_file(dir / "metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, ts.metrics); });
      std::vector<LweSample> all = ts.train.samples;
      all.insert(all.end(), ts.heldout.samples.begin(), ts.heldout.samples.end());
      std::cout << "train=" << ts.train.size() << " heldout=" << ts.heldout.size()
                << " reduction_factor=" << reduction_factor(all, originals.params.q()) << '\n';
    } else if (*ana) {
      auto set = io::load_sample_set(in);
      auto s = io::load_secret(secret_path);
      auto r = nomod(set, s);
      const double sa = centered_std(set);
      std::cout << "nomod " << r.percentage << "% of " << r.sample_count << (r.threshold_hit ? " (above" : " (below")
                << " the " << kNoModThreshold << "% threshold)\n";
      if (sa > 0.0) {
        auto pred = scaling_predict(set.params, sa, s.h());
        std::cout << "sigma_a " << pred.sigma_a << " sigma_x " << pred.sigma_x << " max_h " << pred.max_h
                  << (pred.recoverable ? " recoverable" : " out of range") << '\n';
      }
    } else if (*att) {
      if (base_flag > 0) atk.base = base_flag;
      if (*perm_opt) atk.permute_seed = permute_seed;
      if (atk.oracle == "file" && (atk.request_dir.empty() || atk.reply_dir.empty()))
        throw std::invalid_argument("the file oracle needs --request-dir and --reply-dir");
      return run_attack(atk);
    } else if (*usv) {
      auto originals = io::load_sample_set(in);
      auto r = usvp_attack(originals, ucfg);
      const auto dir = out_dir(out);
      io::write_file(dir / "usvp-metrics.csv", [&](std::ostream& os) {
        os << "loops,best_norm,seconds,precision\n"
           << r.loops_used << ',' << io::format_double(r.best_norm) << ',' << io::format_double(r.wall_seconds) << ','
           << r.precision_bits << '\n';
      });
      if (!r.secret) {
        std::cout << "no secret after " << r.loops_used << " loops, best norm " << r.best_norm << '\n';
        return 2;
      }
      io::save(dir / "usvp-secret.txt", *r.secret);
      std::cout << "secret recovered after " << r.loops_used << " loops in " << r.wall_seconds << " s\n";
    } else if (*est) {
      const double p = kickout_probability(n, h, k);
      std::cout << "p_kickout " << p << " expected_cost " << kickout_expected_cost(base_cost, n, h, k) << '\n';
      if (q > 0 && factor > 0.0) {
        auto pred = scaling_predict(LweParams(n, q), sigma_a_for_factor(q, factor), h);
        std::cout << "max_h " << pred.max_h << " sigma_x " << pred.sigma_x << (pred.recoverable ? " recoverable" : " out of range")
                  << '\n';
      }
    } else if (*tok) {
      auto set = io::load_sample_set(in);
      auto scheme = TokenScheme::for_modulus(set.params.q(), bucket, base_flag > 0 ? std::optional(base_flag) : std::nullopt);
      const fs::path path = out.empty() ? default_output_root() / "tokens.txt" : fs::path(out);
      export_dataset(set, scheme, path);
      std::cout << "B=" << scheme.base() << " r=" << scheme.bucket() << " vocab=" << scheme.vocab_size() << " -> " << path.string()
                << '\n';
    } else if (*run) {
      if (!preset.empty()) {
        const auto colon = preset.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("--preset expects n:logq");
        write_config(std::cout, preset_config(std::stoi(preset.substr(0, colon)), std::stoi(preset.substr(colon + 1))));
        return 0;
      }
      if (config_path.empty()) throw std::invalid_argument("run needs --config or --preset");
      auto cfg = load_config(config_path);
      if (!out.empty()) cfg.output_dir = out;
      auto rep = run_experiment(cfg);
      write_report(std::cout, rep);
      return rep.ok() && rep.recovery != RecoveryStatus::Failure ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
