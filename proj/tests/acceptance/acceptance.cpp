// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: bfn_acceptance [work_dir] [--only N]...

#include "bfn/cli/app.hpp"  // first: brings in httplib ahead of Eigen

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bfn/chem/selfies.hpp"
#include "bfn/eval/validity.hpp"
#include "support/oracles.hpp"

using namespace bfn;
using namespace bfn::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bfn");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

// ---------------------------------------------------------------------------
// 1. ODE sampler trace and injected noise.

Outcome sampler_fidelity() {
  const auto start = Clock::now();
  ConstantModel net{shape(3, 1), kConstantLogits, kConstantLogits};
  sample::SamplerConfig cfg;
  cfg.steps = 3;
  cfg.tau = 0.0;
  auto rngs = streams(1, 1);
  sample::Trace<double> trace;
  const auto out = sample::sample_ode<double>(net, cfg, rngs, &trace);
  double trace_err = trace.states.size() == 3 ? 0.0 : 1.0;
  for (std::size_t i = 0; i < trace.states.size() && i < 3; ++i) {
    for (int k = 0; k < 3; ++k) trace_err = std::max(trace_err, std::abs(trace.states[i](0, k) - kConstantTrace[i][k]));
  }
  const bool final_ok = out == std::vector<std::vector<int>>{{2}};

  // Noise: per step and component, sample variance against K beta(s) tau.
  const int K = 3, n = 4, draws = 100000, per = 1000;
  const double tau = 0.7;
  cfg.steps = n;
  cfg.tau = tau;
  std::vector<std::vector<double>> sum(n, std::vector<double>(K, 0.0)), sq = sum;
  for (int batch = 0; batch < draws / per; ++batch) {
    auto r = streams(per, 500 + static_cast<std::uint64_t>(batch));
    sample::Trace<double> t;
    sample::sample_ode<double>(net, cfg, r, &t);
    for (int i = 0; i < n; ++i) {
      for (int b = 0; b < per; ++b) {
        for (int k = 0; k < K; ++k) {
          const double v = t.states[i](b, k);
          sum[i][k] += v;
          sq[i][k] += v * v;
        }
      }
    }
  }
  double worst_sigmas = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = static_cast<double>(i + 1) / n;
    const double expected = K * s * s * tau;
    for (int k = 0; k < K; ++k) {
      const double mean = sum[i][k] / draws;
      const double var = (sq[i][k] - draws * mean * mean) / (draws - 1);
      const double sigma = expected * std::sqrt(2.0 / (draws - 1));
      worst_sigmas = std::max(worst_sigmas, std::abs(var - expected) / sigma);
    }
  }
  const double secs = seconds_since(start);
  return {trace_err <= 1e-15 && final_ok && worst_sigmas <= 3.0 && secs < 60.0,
          "trace max |err| " + fmt(trace_err) + ", final argmax " + (final_ok ? "ok" : "wrong") +
              ", worst noise variance deviation " + fmt(worst_sigmas, 3) + " sigma over 1e5 draws, " +
              fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Validity term: closed-form cases and a 60%-invalid decode stream.

Outcome rl_correctness() {
  using M = core::Mat<double>;
  bool cases = true;
  M one(1, 2), two(2, 3);
  one << 0.9, 0.1;
  two << 0.8, 0.1, 0.1, 0.2, 0.6, 0.2;
  for (double eta : {0.0, 0.01, 1.0, 100.0}) {
    cases = cases && core::rl_loss<double>(one, true, eta).value == 0.0 && core::rl_loss<double>(two, true, eta).value == 0.0;
  }
  cases = cases && std::abs(core::rl_loss<double>(one, false, 0.01).value - 0.009) <= 1e-15;
  cases = cases && std::abs(core::rl_loss<double>(two, false, 0.01).value - 0.007) <= 1e-15;

  // Stream: 10 batches of 40 with exactly 24 invalid per batch.
  const int L = 8, K = 6, B = 40;
  model::Transformer<double> net(model::ModelConfig::desk(K, L));
  net.init(31);
  core::Rng rng(32);
  double worst = 0.0, total_rl = 0.0, total_brute = 0.0;
  long invalid_seen = 0, checked_seen = 0;
  for (int batch = 0; batch < 10; ++batch) {
    train::BatchInputs<double> in;
    in.theta = random_theta<double>(B * L, K, rng);
    std::uniform_real_distribution<double> ut(0.0, 1.0);
    for (int b = 0; b < B; ++b) in.t.push_back(ut(rng));
    in.cond = model::CondBatch<double>::none(B);
    std::vector<char> flags(B, 1);
    std::fill(flags.begin(), flags.begin() + 24, 0);
    std::shuffle(flags.begin(), flags.end(), rng);
    for (int b = 0; b < B; ++b) {
      std::vector<int> seq(L, token::kPad);
      const int len = 2 + static_cast<int>(rng() % (L - 1));
      seq[0] = token::kStart;
      for (int i = 1; i < len - 1; ++i) seq[i] = token::kReserved + static_cast<int>(rng() % (K - token::kReserved));
      seq[len - 1] = token::kEnd;
      in.target.push_back(seq);
    }
    auto index = std::make_shared<int>(0);
    const train::ValidityFn stream = [&flags, index](const std::vector<int>&) { return flags[(*index)++] != 0; };
    const auto loss = train::batch_loss<double>(net, in, 0.01, 1.0, stream, nullptr);

    // Brute force: eta times the mean max probability over non-pad
    // positions, averaged over every checked element.
    const M logits = net.forward(in.theta, in.t, in.cond, in.mask);
    long double acc = 0.0L;
    for (int b = 0; b < B; ++b) {
      if (flags[b]) continue;
      long double row_sum = 0.0L;
      int kept = 0;
      for (int i = 0; i < L; ++i) {
        if (in.target[b][i] == token::kPad) continue;
        const auto row = logits.row(static_cast<Eigen::Index>(b) * L + i);
        const double mx = row.maxCoeff();
        long double z = 0.0L;
        for (int k = 0; k < K; ++k) z += std::exp(static_cast<long double>(row(k) - mx));
        row_sum += 1.0L / z;  // softmax value at the argmax
        ++kept;
      }
      acc += 0.01L * row_sum / kept;
    }
    const double brute = static_cast<double>(acc / B);
    worst = std::max(worst, std::abs(loss.rl - brute));
    total_rl += loss.rl;
    total_brute += brute;
    invalid_seen += loss.rl_invalid;
    checked_seen += loss.rl_checked;
  }
  const bool stream_ok = worst <= 1e-12 && invalid_seen == 240 && checked_seen == 400;
  return {cases && stream_ok,
          std::string("closed-form cases ") + (cases ? "exact" : "MISMATCH") + ", stream " +
              std::to_string(invalid_seen) + "/" + std::to_string(checked_seen) +
              " invalid, max |reported - brute force| " + fmt(worst, 3) + " per batch, mean loss " +
              fmt(total_rl / 10, 8) + " vs " + fmt(total_brute / 10, 8)};
}

// ---------------------------------------------------------------------------
// 3. Finite-difference gradient check through the 2-layer desk model.

Outcome gradient_check() {
  const auto start = Clock::now();
  const auto normal = check_gradients(model::MaskMode::kNormal, 30);
  const auto sar = check_gradients(model::MaskMode::kSar, 30);
  const double secs = seconds_since(start);
  const bool ok = normal.rl > 0 && sar.rl > 0 && normal.checked >= 20 && sar.checked >= 20 && normal.worst <= 1e-5 &&
                  sar.worst <= 1e-5 && secs < 300.0;
  return {ok, "worst relative error " + fmt(normal.worst, 3) + " (normal mask, " + std::to_string(normal.checked) +
                  " weights), " + fmt(sar.worst, 3) + " (SAR mask, " + std::to_string(sar.checked) +
                  " weights), validity term active, " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 4. SAR attention: earlier positions never see later ones.

Outcome sar_invariance() {
  const auto start = Clock::now();
  const int L = 16, K = 11;
  model::Transformer<float> net(model::ModelConfig::desk(K, L, 3));
  net.init(41);
  core::Rng rng(42);
  std::normal_distribution<double> noise(0.0, 5.0);
  std::uniform_real_distribution<double> ut(0.0, 1.0);
  int violations = 0, compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto theta = random_theta<float>(L, K, rng);
    const float t = static_cast<float>(ut(rng));
    const auto cond = model::CondBatch<float>::repeat({0.5, -1.0, 2.0}, 1);
    const auto base = net.forward(theta, {t}, cond, model::MaskMode::kSar);
    const int j = 1 + static_cast<int>(rng() % (L - 1));
    auto perturbed = theta;
    for (int jj = j; jj < L; ++jj) {
      if (jj > j && rng() % 2) continue;  // perturb j and a random subset after it
      for (int k = 0; k < K; ++k) perturbed(jj, k) = static_cast<float>(noise(rng));
    }
    const auto out = net.forward(perturbed, {t}, cond, model::MaskMode::kSar);
    for (int i = 0; i < j; ++i) {
      for (int k = 0; k < K; ++k) {
        ++compared;
        violations += out(i, k) != base(i, k);
      }
    }
  }
  const double secs = seconds_since(start);
  return {violations == 0 && secs < 60.0, std::to_string(violations) + " differing values among " +
                                              std::to_string(compared) + " compared over 100 inputs, " +
                                              fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// Desk training shared by criteria 5, 6, 7, 9 and 11.

constexpr int kDeskSteps = 3000;
constexpr int kValiditySamples = 300;

struct DeskRun {
  double eta = 0;
  std::uint64_t seed = 0;
  std::string checkpoint;
  double validity = 0;
  double untrained_validity = 0;
  double train_seconds = 0;
  double sample_seconds = 0;
};

struct Desk {
  fs::path dir;
  std::vector<std::string> corpus;
  token::Vocab vocab;
  model::ModelConfig mcfg;
  std::vector<DeskRun> runs;  // eta 0.01 seeds 1..5, then eta 0 seeds 1..5
  std::string error;
};

sample::SamplerConfig validity_sampler(std::uint64_t seed) {
  sample::SamplerConfig cfg;
  cfg.steps = 100;
  cfg.seed = seed;
  return cfg;
}

template <class Net>
double sampled_validity(const Net& net, const token::Vocab& vocab, const sample::SamplerConfig& cfg, long count) {
  const auto recs = sample::generate_batch<float>(net, vocab, cfg, count, 0);
  long valid = 0;
  for (const auto& r : recs) valid += r.valid;
  return static_cast<double>(valid) / count;
}

Desk& desk(const fs::path& work) {
  static Desk d;
  static bool built = false;
  if (built) return d;
  built = true;
  d.dir = work / "desk";
  fs::create_directories(d.dir);
  d.corpus = chem::desk_corpus(2000, 12, 2024);
  {
    std::ofstream out(d.dir / "corpus.txt");
    for (const auto& s : d.corpus) out << s << '\n';
  }
  d.vocab = token::build_vocab(d.corpus, token::Scheme::kSmiles);
  d.mcfg = model::ModelConfig::desk(d.vocab.size(), 16, 0);
  std::vector<token::Record> records;
  for (const auto& s : d.corpus) records.push_back({s, {}});
  for (double eta : {0.01, 0.0}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      DeskRun r;
      r.eta = eta;
      r.seed = seed;
      train::TrainConfig tc;
      tc.eta = eta;
      tc.lr_peak = 1e-3;
      tc.warmup_steps = 100;
      tc.batch_size = 32;
      tc.epochs = 1000;
      tc.max_steps = kDeskSteps;
      tc.seed = seed;
      tc.log_every = 100;
      const auto out = d.dir / ("eta" + fmt(eta) + "_seed" + std::to_string(seed));
      auto start = Clock::now();
      try {
        r.checkpoint = train::fit<float>(records, d.vocab, d.mcfg, tc, {out.string(), "", nullptr}).checkpoint;
      } catch (const std::exception& e) {
        d.error = std::string("training failed: ") + e.what();
        return d;
      }
      r.train_seconds = seconds_since(start);
      start = Clock::now();
      const auto net = model::load_checkpoint(r.checkpoint).model<float>();
      r.validity = sampled_validity(net, d.vocab, validity_sampler(1000 + seed), kValiditySamples);
      model::Transformer<float> fresh(d.mcfg);
      fresh.init(core::derive_seed(seed, 0x1417));
      r.untrained_validity = sampled_validity(fresh, d.vocab, validity_sampler(1000 + seed), kValiditySamples);
      r.sample_seconds = seconds_since(start);
      std::cerr << "  desk run eta=" << eta << " seed=" << seed << ": validity " << r.validity << " (untrained "
                << r.untrained_validity << "), " << fmt(r.train_seconds, 3) << " s training\n";
      d.runs.push_back(r);
    }
  }
  return d;
}

// 5. Training raises validity well above the untrained model.
Outcome desk_training(const fs::path& work) {
  const auto& d = desk(work);
  if (!d.error.empty()) return {false, d.error};
  double trained = 0, untrained = 0, secs = 0;
  std::string per;
  for (int i = 0; i < 3; ++i) {
    const auto& r = d.runs[i];
    trained += r.validity / 3;
    untrained += r.untrained_validity / 3;
    secs += r.train_seconds + r.sample_seconds;
    per += (i ? ", " : "") + fmt(r.validity, 3);
  }
  const bool ok = trained >= 10.0 * untrained && trained >= 0.5 && secs <= 1800.0;
  return {ok, "mean validity over 3 seeds " + fmt(trained) + " (" + per + ") vs untrained " + fmt(untrained) + ", " +
                  std::to_string(kDeskSteps) + " steps, " + std::to_string(kValiditySamples) +
                  " samples of 100 ODE steps per model, " + fmt(secs, 4) + " s"};
}

// 6. The validity term does not lower validity (paired seeds).
Outcome rl_direction(const fs::path& work) {
  const auto& d = desk(work);
  if (!d.error.empty()) return {false, d.error};
  double with = 0, without = 0;
  for (int i = 0; i < 5; ++i) {
    with += d.runs[i].validity / 5;
    without += d.runs[5 + i].validity / 5;
  }
  return {with >= without - 0.01, "mean validity eta=0.01 " + fmt(with) + " vs eta=0 " + fmt(without) +
                                      " over 5 paired seeds (tie margin 1 point)"};
}

// 7. Lower temperature trades uniqueness for validity.
Outcome tau_direction(const fs::path& work) {
  const auto& d = desk(work);
  if (!d.error.empty()) return {false, d.error};
  const auto net = model::load_checkpoint(d.runs[0].checkpoint).model<float>();
  auto measure = [&](double tau, double& validity, double& unique) {
    auto cfg = validity_sampler(77);
    cfg.tau = tau;
    const auto recs = sample::generate_batch<float>(net, d.vocab, cfg, 500, 0);
    std::vector<std::string> smiles;
    long valid = 0;
    for (const auto& r : recs) {
      valid += r.valid;
      smiles.push_back(r.valid ? r.smiles : std::string());
    }
    validity = valid / 500.0;
    unique = eval::unique_at_k(smiles, 500).value;
  };
  double v_lo, u_lo, v_hi, u_hi;
  measure(0.01, v_lo, u_lo);
  measure(1.0, v_hi, u_hi);
  return {v_lo >= v_hi && u_lo <= u_hi, "tau=0.01: validity " + fmt(v_lo) + ", unique@500 " + fmt(u_lo) +
                                            "; tau=1: validity " + fmt(v_hi) + ", unique@500 " + fmt(u_hi)};
}

// ---------------------------------------------------------------------------
// 8. Metrics against brute force; Frechet distance in one dimension.

Outcome metric_oracles() {
  int mismatches = 0, checks = 0;
  auto expect = [&](bool ok) {
    ++checks;
    mismatches += !ok;
  };
  std::mt19937_64 rng(88);
  for (std::uint64_t seed = 11; seed <= 20; ++seed) {
    const auto samples = toy_samples(seed);
    const std::vector<std::string> train(samples.begin() + 3, samples.begin() + 15);
    std::vector<std::string> train_valid;
    for (const auto& t : train) {
      if (try_parse(t)) train_valid.push_back(t);
    }
    expect(samples.size() <= 50);
    expect(eval::validity_ratio(samples) == brute_validity(samples));
    for (long k : {1L, 7L, 25L, 50L}) expect(eval::unique_at_k(samples, k).value == brute_unique(samples, k));
    expect(eval::novelty(samples, canon_set(train_valid)) == brute_novelty(samples, train_valid));

    std::vector<chem::Fingerprint> ref;
    for (const auto& t : train_valid) ref.push_back(chem::morgan_fingerprint(chem::parse_smiles(t)));
    std::vector<eval::ScoredSample> scored(samples.size());
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      scored[i].smiles = samples[i];
      const auto g = try_parse(samples[i]);
      if (!g) continue;
      scored[i].canonical = *eval::canonical_form(samples[i]);
      const auto fp = chem::morgan_fingerprint(*g);
      const double s = eval::snn(fp, ref);
      expect(s == brute_snn(fp, ref));
      scored[i].props = eval::PropertyRecord{std::round(u(rng) * 10) / 10, 1 + std::round(u(rng) * 8),
                                             -std::round(u(rng) * 12), s};
    }
    eval::FilterThresholds th;
    th.ds_max = -4;
    th.snn_max = 0.6;  // small toy molecules overlap heavily with the reference
    const auto oracle = brute_hits(scored, th);
    expect(eval::count_hits(scored, th) == oracle.hits);
    expect(eval::novel_hit_ratio(scored, th) == oracle.ratio);
    const auto top = eval::novel_top5_ds(scored, th);
    expect(top.has_value() == oracle.top5.has_value() && (!top || *top == *oracle.top5));
  }
  const std::vector<double> base{-1.5, -0.5, 0.0, 0.5, 1.5};
  std::vector<double> shifted;
  for (double v : base) shifted.push_back(v + 1.0);
  const double fd = eval::frechet_distance(column(base), column(shifted));
  const bool frechet_ok = std::abs(fd - 1.0) <= 1e-8;
  return {mismatches == 0 && frechet_ok, std::to_string(checks - mismatches) + "/" + std::to_string(checks) +
                                             " metric checks equal brute force on 10 sets of <= 50, Frechet 1-D " +
                                             fmt(fd, 12)};
}

// ---------------------------------------------------------------------------
// 9. Full protocol through the command line, recomputed from the JSON lines.

struct Recomputed {
  std::map<int, long> rows, hits;
  long flag_mismatches = 0;
};

Recomputed recompute_hits(const std::string& samples_path, const std::string& scored_path,
                          const eval::FilterThresholds& th, const std::vector<chem::Fingerprint>& ref) {
  Recomputed r;
  std::map<std::string, double> snn_cache;
  std::ifstream in(samples_path), scored(scored_path);
  std::string line, sline;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const int rep = j.at("repeat").get<int>();
    ++r.rows[rep];
    bool hit = false;
    const auto g = j.at("valid").get<bool>() ? try_parse(j.at("smiles").get<std::string>()) : std::nullopt;
    if (g) {
      const auto s = oracle::score_toy(*g);
      if (s.qed > th.qed_min && s.sa < th.sa_max && s.ds < th.ds_max) {
        const auto key = chem::canonical_smiles(*g);
        auto it = snn_cache.find(key);
        if (it == snn_cache.end()) it = snn_cache.emplace(key, brute_snn(chem::morgan_fingerprint(*g), ref)).first;
        hit = it->second < th.snn_max;
      }
    }
    r.hits[rep] += hit;
    if (!std::getline(scored, sline) || nlohmann::json::parse(sline).at("hit").get<bool>() != hit) ++r.flag_mismatches;
  }
  return r;
}

Outcome protocol_run(const fs::path& work) {
  const auto& d = desk(work);
  if (!d.error.empty()) return {false, d.error};
  const auto start = Clock::now();
  const auto dir = work / "protocol";
  fs::create_directories(dir);
  const std::string samples = (dir / "samples.jsonl").string();
  const std::string train = (d.dir / "corpus.txt").string();
  if (run_cli({"sample", "--ckpt", d.runs[0].checkpoint, "--count", "3000", "--repeats", "5", "--steps", "100",
               "--seed", "9", "--out", samples}) != 0) {
    return {false, "sample command failed"};
  }
  // Independent training-set DS median over distinct molecules.
  std::set<std::string> distinct;
  std::vector<chem::Fingerprint> ref;
  for (const auto& s : d.corpus) {
    const auto g = chem::parse_smiles(s);
    if (distinct.insert(chem::canonical_smiles(g)).second) ref.push_back(chem::morgan_fingerprint(g));
  }
  std::vector<double> ds;
  for (const auto& c : distinct) ds.push_back(oracle::score_toy(chem::parse_smiles(c)).ds);
  std::sort(ds.begin(), ds.end());
  const double median = ds.size() % 2 ? ds[ds.size() / 2] : 0.5 * (ds[ds.size() / 2 - 1] + ds[ds.size() / 2]);

  // Default filters give no hits with the toy QED on molecules this small, so
  // a second pass with a lower QED cut exercises non-zero hit counts.
  const std::string loose = (dir / "loose_thresholds.json").string();
  {
    std::ofstream out(loose);
    out << nlohmann::json{{"qed_min", 0.2}, {"sa_max", 5.0}, {"ds_max", median}, {"snn_max", 0.4}}.dump() << '\n';
  }
  std::string detail;
  bool ok = true;
  for (const std::string name : {"default", "loose"}) {
    const std::string report_path = (dir / ("report_" + name + ".json")).string();
    const std::string scored_path = (dir / ("scored_" + name + ".jsonl")).string();
    std::vector<std::string> args = {"eval", "--samples", samples, "--train", train, "--scorer", "toy",
                                     "--out", report_path, "--scored-out", scored_path};
    if (name == "loose") {
      args.push_back("--thresholds");
      args.push_back(loose);
    }
    if (run_cli(args) != 0) return {false, "eval command failed (" + name + ")"};
    const auto report = nlohmann::json::parse(read_file(report_path));
    const auto th = report.at("thresholds").get<eval::FilterThresholds>();
    eval::FilterThresholds expected_th;
    expected_th.ds_max = median;
    if (name == "loose") expected_th.qed_min = 0.2;
    const bool th_ok = th.qed_min == expected_th.qed_min && th.sa_max == expected_th.sa_max &&
                       th.ds_max == expected_th.ds_max && th.snn_max == expected_th.snn_max;
    const auto rc = recompute_hits(samples, scored_path, th, ref);
    std::vector<double> ratios;
    bool per_ok = rc.rows.size() == 5 && report.at("repeats").size() == 5;
    long total_hits = 0;
    for (const auto& rep : report.at("repeats")) {
      const int r = rep.at("repeat").get<int>();
      const double ratio = 100.0 * rc.hits.at(r) / rc.rows.at(r);
      ratios.push_back(ratio);
      total_hits += rc.hits.at(r);
      per_ok = per_ok && rc.rows.at(r) == 3000 && rep.at("samples").get<long>() == 3000 &&
               rep.at("hits").get<long>() == rc.hits.at(r) && rep.at("novel_hit_ratio").get<double>() == ratio;
    }
    double mean = 0, var = 0;
    for (double v : ratios) mean += v / ratios.size();
    for (double v : ratios) var += (v - mean) * (v - mean) / ratios.size();
    const auto& agg = report.at("aggregate").at("novel_hit_ratio");
    const bool agg_ok = std::abs(agg.at("mean").get<double>() - mean) <= 1e-12 &&
                        std::abs(agg.at("std").get<double>() - std::sqrt(var)) <= 1e-12;
    const bool this_ok = th_ok && per_ok && agg_ok && rc.flag_mismatches == 0;
    ok = ok && this_ok;
    detail += (detail.empty() ? "" : "; ") + name + " filters: hit ratio " + fmt(agg.at("mean").get<double>()) +
              " +- " + fmt(agg.at("std").get<double>()) + " (" + std::to_string(total_hits) +
              " hits) recomputed " + fmt(mean) + " +- " + fmt(std::sqrt(var)) + (this_ok ? " [match]" : " [MISMATCH]");
  }
  const double secs = seconds_since(start);
  return {ok && secs <= 1200.0, "3000 x 5 samples; " + detail + "; " + fmt(secs, 4) + " s"};
}

// ---------------------------------------------------------------------------
// 10. Random SELFIES token strings always decode to valid SMILES.

Outcome selfies_robustness() {
  std::vector<std::string> alphabet, atoms;
  for (const char* a : {"C", "N", "O", "F", "S", "P", "Cl", "Br", "I", "B"}) {
    for (const char* p : {"", "=", "#"}) atoms.push_back(std::string("[") + p + a + "]");
  }
  alphabet = atoms;
  for (const char* s : {"Branch1", "Branch2", "Branch3", "Ring1", "Ring2", "Ring3"}) {
    for (const char* p : {"", "=", "#"}) alphabet.push_back(std::string("[") + p + s + "]");
  }
  const std::set<std::string> atom_set(atoms.begin(), atoms.end());
  std::mt19937_64 rng(1010);
  int valid = 0, tested = 0, atomless = 0;
  std::string first_bad;
  while (tested < 10000) {
    const int len = 1 + static_cast<int>(rng() % 40);
    std::string s;
    bool has_atom = false;
    for (int i = 0; i < len; ++i) {
      const auto& tok = alphabet[rng() % alphabet.size()];
      has_atom = has_atom || atom_set.count(tok);
      s += tok;
    }
    if (!has_atom) {
      ++atomless;  // encodes no molecule at all
      continue;
    }
    ++tested;
    const auto out = chem::decode_selfies(s);
    if (chem::is_valid(out)) {
      ++valid;
    } else if (first_bad.empty()) {
      first_bad = s + " -> '" + out + "'";
    }
  }
  return {valid == tested, std::to_string(valid) + "/" + std::to_string(tested) +
                               " valid (length 1-40 over " + std::to_string(alphabet.size()) + " tokens; " +
                               std::to_string(atomless) + " draws without any atom token redrawn)" +
                               (first_bad.empty() ? "" : ", first failure " + first_bad)};
}

// ---------------------------------------------------------------------------
// 11. Fixed-seed sampling is byte-reproducible; tau = 0 ignores the seed.

Outcome determinism(const fs::path& work) {
  const auto& d = desk(work);
  if (!d.error.empty()) return {false, d.error};
  const auto dir = work / "determinism";
  fs::create_directories(dir);
  auto sample_to = [&](const std::string& name, std::vector<std::string> extra) {
    const std::string out = (dir / name).string();
    std::vector<std::string> args = {"sample", "--ckpt", d.runs[0].checkpoint, "--count", "200", "--steps", "50",
                                     "--out", out};
    args.insert(args.end(), extra.begin(), extra.end());
    if (run_cli(args) != 0) throw std::runtime_error("sample command failed");
    return out;
  };
  auto sequences = [](const std::string& path) {
    std::vector<std::string> seqs;
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);) seqs.push_back(nlohmann::json::parse(line).at("sequence").dump());
    return seqs;
  };
  try {
    int identical = 0, runs = 0;
    for (const char* method : {"ode", "native"}) {
      const std::vector<std::string> base = {"--seed", "11", "--tau", "0.5", "--method", method};
      // The same invocation twice, output and manifest included.
      const auto a = sample_to(std::string("a_") + method + ".jsonl", base);
      const std::string first = read_file(a), first_manifest = read_file(a + ".manifest.json");
      sample_to(std::string("a_") + method + ".jsonl", base);
      runs += 2;
      identical += first == read_file(a) && first_manifest == read_file(a + ".manifest.json");
      // Thread count and batch size are recorded in the manifest but must not change the samples.
      auto more = base;
      more.insert(more.end(), {"--threads", "2", "--batch-size", "17"});
      identical += first == read_file(sample_to(std::string("c_") + method + ".jsonl", more));
    }
    const auto t1 = sample_to("tau0_seed1.jsonl", {"--seed", "1", "--tau", "0"});
    const auto t2 = sample_to("tau0_seed2.jsonl", {"--seed", "2", "--tau", "0"});
    const auto t3 = sample_to("tau0_seed3_threads.jsonl", {"--seed", "3", "--tau", "0", "--threads", "2"});
    const bool seed_free = sequences(t1) == sequences(t2) && sequences(t1) == sequences(t3);
    const auto different = sample_to("tau05_seed12.jsonl", {"--seed", "12", "--tau", "0.5"});
    const bool seed_matters = sequences(different) != sequences((dir / "a_ode.jsonl").string());
    return {identical == runs && seed_free && seed_matters,
            std::to_string(identical) + "/" + std::to_string(runs) +
                " repeated invocations byte-identical (ode and native, varying threads and batch size); tau=0 "
                "sequences " + (seed_free ? "identical" : "DIFFER") + " across seeds 1, 2, 3; tau=0.5 seeds 11 and "
                "12 " + (seed_matters ? "differ" : "COINCIDE")};
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::current_path() / "acceptance_work";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only.insert(std::stoi(argv[++i]));
    } else {
      work = a;
    }
  }
  fs::create_directories(work);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"ODE sampler trace and noise variance", sampler_fidelity},
      {"validity term values and 60% invalid stream", rl_correctness},
      {"gradient check through the 2-layer desk model", gradient_check},
      {"SAR causal invariance", sar_invariance},
      {"desk-scale training effect", [&] { return desk_training(work); }},
      {"validity term direction", [&] { return rl_direction(work); }},
      {"temperature trade-off direction", [&] { return tau_direction(work); }},
      {"metrics against brute force", metric_oracles},
      {"protocol run recomputed from JSON lines", [&] { return protocol_run(work); }},
      {"SELFIES robustness", selfies_robustness},
      {"sampling determinism", [&] { return determinism(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed ? 1 : 0;
}
