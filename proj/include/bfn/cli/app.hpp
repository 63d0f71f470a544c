#pragma once

#include <glob.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bfn/oracle/http_scorer.hpp"
#include "bfn/chem/random_molecules.hpp"
#include "bfn/eval/protocol.hpp"
#include "bfn/model/checkpoint.hpp"
#include "bfn/sample/sampler.hpp"
#include "bfn/token/dataset.hpp"
#include "bfn/token/vocab.hpp"
#include "bfn/train/trainer.hpp"

namespace bfn::cli {

inline constexpr const char* kVersion = "0.1.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline nlohmann::json versions() {
  return {{"bfn", kVersion},
          {"compiler", __VERSION__},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"cxx", __cplusplus}};
}

/// Config snapshot, seeds and versions for replaying a run.
inline void write_manifest(const std::string& path, const std::string& command, const std::vector<std::string>& argv,
                           const nlohmann::json& config) {
  const nlohmann::json m = {{"command", command},
                            {"argv", argv},
                            {"config", config},
                            {"versions", versions()}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  out << m.dump(2) << '\n';
}

inline void require_file(const std::string& path, const std::string& what, const std::string& hint) {
  if (!std::filesystem::is_regular_file(path)) {
    throw std::runtime_error(what + " '" + path + "' not found" + (hint.empty() ? "" : "; " + hint));
  }
}

inline nlohmann::json read_json(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + what + " '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(what + " '" + path + "' is not valid JSON: " + e.what());
  }
}

inline std::vector<double> parse_condition(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string field; std::getline(ss, field, ',');) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(field, &used);
    } catch (const std::exception&) {
      throw UsageError("bad condition value '" + field + "'");
    }
    if (used != field.size() || !std::isfinite(v)) throw UsageError("bad condition value '" + field + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("empty condition");
  return out;
}

inline std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<std::string> out;
  if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  return out;
}

}  // namespace detail

struct BuildVocabArgs {
  std::string input, scheme = "smiles", out;
};

inline void build_vocab_cmd(const BuildVocabArgs& a, const std::vector<std::string>& argv) {
  detail::require_file(a.input, "input file", "");
  const auto scheme = token::parse_scheme(a.scheme);
  const auto records = token::read_dataset(a.input);
  if (records.empty()) throw std::runtime_error("input file '" + a.input + "' holds no records");
  const auto vocab = token::build_vocab(token::texts(records), scheme);
  vocab.save(a.out);
  detail::write_manifest(a.out + ".manifest.json", "build-vocab", argv,
                         {{"input", a.input}, {"scheme", a.scheme}, {"size", vocab.size()}, {"hash", vocab.hash()}});
  std::cerr << "vocabulary of " << vocab.size() << " tokens written to " << a.out << '\n';
}

struct TrainArgs {
  std::string config, data, vocab, out, resume;
};

/// Training config file: {"model": {...}, "train": {...}}. The model's K is
/// taken from the vocabulary and cond_dim from the data when omitted.
inline void train_cmd(const TrainArgs& a, const std::vector<std::string>& argv) {
  detail::require_file(a.vocab, "vocabulary", "run build-vocab first");
  detail::require_file(a.data, "data file", "");
  detail::require_file(a.config, "config file", "");
  if (!a.resume.empty()) detail::require_file(a.resume, "resume checkpoint", "");
  const auto vocab = token::Vocab::load(a.vocab);
  const auto records = token::read_dataset(a.data);
  if (records.empty()) throw std::runtime_error("data file '" + a.data + "' holds no records");
  const auto cfg_json = detail::read_json(a.config, "config file");
  nlohmann::json mj = cfg_json.value("model", nlohmann::json::object());
  if (mj.contains("K") && mj.at("K").get<int>() != vocab.size()) {
    throw std::runtime_error("config K = " + std::to_string(mj.at("K").get<int>()) + " but the vocabulary has " +
                             std::to_string(vocab.size()) + " tokens");
  }
  mj["K"] = vocab.size();
  if (!mj.contains("cond_dim")) mj["cond_dim"] = records.front().condition.size();
  const auto mcfg = mj.get<model::ModelConfig>();
  mcfg.validate();
  const auto tcfg = cfg_json.value("train", nlohmann::json::object()).get<train::TrainConfig>();
  std::filesystem::create_directories(a.out);
  detail::write_manifest((std::filesystem::path(a.out) / "manifest.json").string(), "train", argv,
                         {{"model", mcfg},
                          {"train", tcfg},
                          {"data", a.data},
                          {"records", records.size()},
                          {"vocab", a.vocab},
                          {"vocab_hash", vocab.hash()},
                          {"resume", a.resume},
                          {"seed", tcfg.seed}});
  train::FitOptions opts{a.out, a.resume, nullptr};
  const auto r = train::fit<float>(records, vocab, mcfg, tcfg, opts);
  std::cerr << "trained " << r.steps << " steps (" << r.epochs << " epochs), final loss " << r.last_total
            << "; checkpoint " << r.checkpoint << '\n';
}

struct SampleArgs {
  std::string ckpt, out, method = "ode", mask = "normal", condition;
  long count = 1000;
  int steps = 100;
  double tau = 0.5;
  double guidance = 0.5;
  std::uint64_t seed = 0;
  int repeats = 1;
  int threads = 1;
  int batch_size = 64;
};

inline void sample_cmd(const SampleArgs& a, const std::vector<std::string>& argv) {
  detail::require_file(a.ckpt, "checkpoint", "train a model first");
  const auto ckpt = model::load_checkpoint(a.ckpt);
  const auto net = ckpt.model<float>();
  sample::SamplerConfig cfg;
  cfg.steps = a.steps;
  cfg.tau = a.tau;
  cfg.method = sample::parse_method(a.method);
  cfg.mask = model::parse_mask(a.mask);
  cfg.train_mask = ckpt.train_mask;
  cfg.guidance = a.guidance;
  cfg.seed = a.seed;
  cfg.batch_size = a.batch_size;
  cfg.threads = a.threads;
  cfg.beta1 = ckpt.extra.contains("train_config") ? ckpt.extra.at("train_config").value("beta1", 1.0) : 1.0;
  if (!a.condition.empty()) {
    cfg.condition = detail::parse_condition(a.condition);
    if (static_cast<int>(cfg.condition->size()) != ckpt.config.cond_dim) {
      throw UsageError("condition has " + std::to_string(cfg.condition->size()) + " values, model expects " +
                       std::to_string(ckpt.config.cond_dim));
    }
  }
  if (a.count < 1 || a.repeats < 1) throw UsageError("count and repeats must be positive");
  cfg.validate();
  const std::string tmp = a.out + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write samples to " + a.out);
    for (int rep = 0; rep < a.repeats; ++rep) {
      for (const auto& r : sample::generate_batch<float>(net, ckpt.vocab, cfg, a.count, rep)) {
        out << sample::to_json(r, cfg).dump() << '\n';
      }
    }
  }
  std::filesystem::rename(tmp, a.out);
  detail::write_manifest(a.out + ".manifest.json", "sample", argv,
                         {{"checkpoint", a.ckpt},
                          {"checkpoint_step", ckpt.step},
                          {"vocab_hash", ckpt.vocab.hash()},
                          {"count", a.count},
                          {"repeats", a.repeats},
                          {"steps", cfg.steps},
                          {"tau", cfg.tau},
                          {"method", sample::to_string(cfg.method)},
                          {"train_mask", model::to_string(cfg.train_mask)},
                          {"sample_mask", model::to_string(cfg.mask)},
                          {"strategy", cfg.strategy().number()},
                          {"guidance", cfg.guidance},
                          {"condition", cfg.condition ? nlohmann::json(*cfg.condition) : nlohmann::json(nullptr)},
                          {"seed", cfg.seed},
                          {"batch_size", cfg.batch_size},
                          {"beta1", cfg.beta1}});
}

struct EvalArgs {
  std::string samples, train, scorer = "toy", thresholds, out, scored_out;
  long unique_k = 1000;
  double timeout = 300.0;
};

inline nlohmann::json sample_settings(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line)) return nullptr;
  try {
    const auto j = nlohmann::json::parse(line);
    nlohmann::json s = nlohmann::json::object();
    for (const char* k : {"strategy", "train_mask", "sample_mask", "method", "steps", "tau", "guidance", "condition"}) {
      if (j.contains(k)) s[k] = j.at(k);
    }
    return s;
  } catch (const nlohmann::json::exception&) {
    return nullptr;
  }
}

inline nlohmann::json eval_cmd(const EvalArgs& a, const std::vector<std::string>& argv) {
  detail::require_file(a.samples, "samples file", "");
  detail::require_file(a.train, "training file", "");
  const auto inputs = eval::read_eval_inputs(a.samples);
  const auto ref = eval::Reference::build(token::texts(token::read_dataset(a.train)));
  auto scorer = oracle::make_scorer(a.scorer, a.timeout);
  eval::EvalOptions opts;
  opts.unique_k = a.unique_k;
  if (!a.thresholds.empty()) opts.thresholds = detail::read_json(a.thresholds, "thresholds file").get<eval::FilterThresholds>();
  auto res = eval::evaluate(inputs, ref, *scorer, opts);
  res.report["samples_file"] = a.samples;
  res.report["sample_settings"] = sample_settings(a.samples);
  {
    std::ofstream out(a.out);
    if (!out) throw std::runtime_error("cannot write report " + a.out);
    out << res.report.dump(2) << '\n';
  }
  if (!a.scored_out.empty()) {
    std::ofstream out(a.scored_out);
    if (!out) throw std::runtime_error("cannot write scored samples " + a.scored_out);
    for (std::size_t i = 0; i < res.scored.size(); ++i) {
      out << eval::scored_sample_json(res.scored[i], res.repeats[i], res.thresholds).dump() << '\n';
    }
  }
  detail::write_manifest(a.out + ".manifest.json", "eval", argv,
                         {{"samples", a.samples},
                          {"train", a.train},
                          {"scorer", scorer->describe()},
                          {"thresholds", res.thresholds},
                          {"unique_k", a.unique_k}});
  return res.report;
}

struct PlotdataArgs {
  std::string reports, out;
};

/// One CSV row per report and metric: mean and std over repeats, keyed by
/// the sampling strategy recorded in the report.
inline void plotdata_cmd(const PlotdataArgs& a, const std::vector<std::string>& argv) {
  const auto files = detail::expand_glob(a.reports);
  if (files.empty()) throw std::runtime_error("no reports match '" + a.reports + "'");
  std::ofstream out(a.out);
  if (!out) throw std::runtime_error("cannot write " + a.out);
  out << "report,strategy,train_mask,sample_mask,method,steps,tau,metric,mean,std,n\n";
  for (const auto& f : files) {
    if (f.ends_with(".manifest.json")) continue;
    const auto r = detail::read_json(f, "report");
    if (!r.contains("aggregate")) throw std::runtime_error("'" + f + "' is not an eval report");
    const auto s = r.value("sample_settings", nlohmann::json::object());
    auto field = [&](const char* k) -> std::string {
      if (!s.is_object() || !s.contains(k) || s.at(k).is_null()) return "";
      return s.at(k).is_string() ? s.at(k).get<std::string>() : s.at(k).dump();
    };
    for (const auto& [metric, v] : r.at("aggregate").items()) {
      out << f << ',' << field("strategy") << ',' << field("train_mask") << ',' << field("sample_mask") << ','
          << field("method") << ',' << field("steps") << ',' << field("tau") << ',' << metric << ','
          << std::setprecision(10) << v.at("mean").get<double>() << ',' << v.at("std").get<double>() << ','
          << v.at("n").get<long>() << '\n';
    }
  }
  detail::write_manifest(a.out + ".manifest.json", "plotdata", argv, {{"reports", files}});
}

struct CorpusArgs {
  int count = 2000;
  int max_length = 12;
  std::uint64_t seed = 0;
  std::string out;
};

inline void make_corpus_cmd(const CorpusArgs& a, const std::vector<std::string>& argv) {
  const auto corpus = chem::desk_corpus(a.count, a.max_length, a.seed);
  std::ofstream out(a.out);
  if (!out) throw std::runtime_error("cannot write " + a.out);
  for (const auto& s : corpus) out << s << '\n';
  detail::write_manifest(a.out + ".manifest.json", "make-corpus", argv,
                         {{"count", a.count}, {"max_length", a.max_length}, {"seed", a.seed}});
}

/// Entry point; returns the process exit code.
inline int run(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Discrete Bayesian flow network generator for SMILES, SELFIES and protein strings"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  BuildVocabArgs bv;
  auto* c_bv = app.add_subcommand("build-vocab", "Build a token vocabulary from a dataset");
  c_bv->add_option("--input", bv.input, "Dataset, one string per line")->required();
  c_bv->add_option("--scheme", bv.scheme, "smiles, selfies or amino-acid")->check(CLI::IsMember({"smiles", "selfies", "amino-acid"}));
  c_bv->add_option("--out", bv.out, "Vocabulary JSON")->required();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train a model");
  c_tr->add_option("--config", tr.config, "JSON with model and train sections")->required();
  c_tr->add_option("--data", tr.data, "Dataset: string then optional tab-separated conditions")->required();
  c_tr->add_option("--vocab", tr.vocab, "Vocabulary JSON")->required();
  c_tr->add_option("--out", tr.out, "Checkpoint directory")->required();
  c_tr->add_option("--resume", tr.resume, "Checkpoint to resume from");

  SampleArgs sa;
  auto* c_sa = app.add_subcommand("sample", "Generate sequences from a checkpoint");
  c_sa->add_option("--ckpt", sa.ckpt, "Checkpoint file")->required();
  c_sa->add_option("--count", sa.count, "Samples per repeat");
  c_sa->add_option("--steps", sa.steps, "Sampling steps");
  c_sa->add_option("--tau", sa.tau, "Noise temperature");
  c_sa->add_option("--method", sa.method, "ode or native")->check(CLI::IsMember({"ode", "native"}));
  c_sa->add_option("--mask", sa.mask, "Attention mask used while sampling")->check(CLI::IsMember({"normal", "sar"}));
  c_sa->add_option("--condition", sa.condition, "Comma-separated condition values");
  c_sa->add_option("--guidance", sa.guidance, "Guidance strength w");
  c_sa->add_option("--seed", sa.seed, "Root seed");
  c_sa->add_option("--repeats", sa.repeats, "Independent repeats written to one file");
  c_sa->add_option("--threads", sa.threads, "Worker threads");
  c_sa->add_option("--batch-size", sa.batch_size, "Samples per forward batch");
  c_sa->add_option("--out", sa.out, "Output JSON lines")->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Score samples and compute metrics");
  c_ev->add_option("--samples", ev.samples, "Samples or scored samples (JSON lines)")->required();
  c_ev->add_option("--train", ev.train, "Training dataset (reference set)")->required();
  c_ev->add_option("--scorer", ev.scorer, "toy, a shell command, or an http:// URL");
  c_ev->add_option("--thresholds", ev.thresholds, "Filter thresholds JSON");
  c_ev->add_option("--unique-k", ev.unique_k, "k for unique@k");
  c_ev->add_option("--timeout", ev.timeout, "Scorer timeout per batch in seconds");
  c_ev->add_option("--scored-out", ev.scored_out, "Per-sample scores (JSON lines)");
  c_ev->add_option("--out", ev.out, "Report JSON")->required();

  PlotdataArgs pd;
  auto* c_pd = app.add_subcommand("plotdata", "Collect reports into a CSV table");
  c_pd->add_option("--reports", pd.reports, "Glob of report files")->required();
  c_pd->add_option("--out", pd.out, "CSV output")->required();

  CorpusArgs mc;
  auto* c_mc = app.add_subcommand("make-corpus", "Write random small acyclic C/N/O molecules");
  c_mc->add_option("--count", mc.count, "Molecules");
  c_mc->add_option("--max-length", mc.max_length, "Maximum SMILES length");
  c_mc->add_option("--seed", mc.seed, "Seed");
  c_mc->add_option("--out", mc.out, "Output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*c_bv) build_vocab_cmd(bv, args);
    if (*c_tr) train_cmd(tr, args);
    if (*c_sa) sample_cmd(sa, args);
    if (*c_ev) eval_cmd(ev, args);
    if (*c_pd) plotdata_cmd(pd, args);
    if (*c_mc) make_corpus_cmd(mc, args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace bfn::cli
