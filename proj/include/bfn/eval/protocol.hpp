#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "bfn/chem/fingerprint.hpp"
#include "bfn/chem/smiles.hpp"
#include "bfn/eval/metrics.hpp"
#include "bfn/oracle/scorer.hpp"
#include "bfn/token/vocab.hpp"

namespace bfn::eval {

/// One line of a samples or scored-samples file.
struct EvalInput {
  std::string smiles;
  int repeat = 0;
  std::optional<oracle::Scores> scores;  // pre-computed properties, if present
};

/// Reads JSON lines carrying "smiles" (or, failing that, "decoded"),
/// optional "repeat" and optional "qed"/"sa"/"ds". Records marked
/// "valid": false keep an empty SMILES so they count as invalid.
inline std::vector<EvalInput> read_eval_inputs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read samples file " + path);
  std::vector<EvalInput> out;
  std::string line;
  for (long no = 1; std::getline(in, line); ++no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(no) + ": " + e.what());
    }
    EvalInput r;
    if (j.contains("smiles") && j.at("smiles").is_string()) {
      r.smiles = j.at("smiles").get<std::string>();
    } else if (j.contains("decoded") && j.at("decoded").is_string()) {
      r.smiles = j.at("decoded").get<std::string>();
    } else {
      throw std::runtime_error(path + ":" + std::to_string(no) + ": record has no smiles");
    }
    if (j.contains("valid") && j.at("valid").is_boolean() && !j.at("valid").get<bool>()) r.smiles.clear();
    r.repeat = j.value("repeat", 0);
    const bool has_props = j.contains("qed") && j.contains("sa") && j.contains("ds") && !j.at("qed").is_null();
    if (has_props) r.scores = oracle::Scores{j.at("qed").get<double>(), j.at("sa").get<double>(), j.at("ds").get<double>()};
    out.push_back(std::move(r));
  }
  return out;
}

/// Training-set reference data: canonical forms for novelty, fingerprints
/// for SNN and the token vocabulary for the stand-in Frechet embedding.
struct Reference {
  std::vector<std::string> smiles;  // valid training molecules
  std::unordered_set<std::string> canonical;
  std::vector<chem::Fingerprint> fingerprints;
  token::Vocab vocab;

  static Reference build(const std::vector<std::string>& train) {
    Reference r;
    for (const auto& s : train) {
      try {
        const chem::MolGraph g = chem::parse_smiles(s);
        r.smiles.push_back(s);
        r.canonical.insert(chem::canonical_smiles(g));
        r.fingerprints.push_back(chem::morgan_fingerprint(g));
      } catch (const std::exception&) {
      }
    }
    if (r.smiles.empty()) throw std::runtime_error("training set holds no valid molecules");
    r.vocab = token::build_vocab(r.smiles, token::Scheme::kSmiles);
    return r;
  }
};

struct EvalOptions {
  std::optional<FilterThresholds> thresholds;  // ds_max from training medians when absent
  long unique_k = 1000;
  std::size_t score_batch = 1000;
  bool frechet = true;
};

/// Scores each distinct canonical form once; returns outcomes keyed by it.
inline std::unordered_map<std::string, oracle::ScoreOutcome> score_distinct(const std::vector<std::string>& canonical,
                                                                          oracle::Scorer& scorer,
                                                                          std::size_t batch) {
  std::unordered_map<std::string, oracle::ScoreOutcome> out;
  std::vector<std::string> todo;
  std::unordered_set<std::string> queued;
  for (const auto& c : canonical) {
    if (queued.insert(c).second) todo.push_back(c);
  }
  for (std::size_t lo = 0; lo < todo.size(); lo += batch) {
    const std::vector<std::string> chunk(todo.begin() + static_cast<long>(lo),
                                         todo.begin() + static_cast<long>(std::min(todo.size(), lo + batch)));
    auto res = scorer.score(chunk);
    for (std::size_t i = 0; i < chunk.size(); ++i) out[chunk[i]] = std::move(res[i]);
  }
  return out;
}

/// Median DS over the training molecules the scorer can score.
inline double training_ds_median(const Reference& ref, oracle::Scorer& scorer, std::size_t batch = 1000) {
  std::vector<std::string> canon(ref.canonical.begin(), ref.canonical.end());
  std::sort(canon.begin(), canon.end());
  const auto scored = score_distinct(canon, scorer, batch);
  std::vector<double> ds;
  for (const auto& c : canon) {
    const auto& o = scored.at(c);
    if (o.ok()) ds.push_back(o.scores->ds);
  }
  if (ds.empty()) throw std::runtime_error("scorer produced no DS values for the training set");
  return median(ds);
}

/// Scores samples and attaches SNN against the reference set.
inline std::vector<ScoredSample> score_samples(const std::vector<EvalInput>& inputs, const Reference& ref,
                                               oracle::Scorer& scorer, std::size_t batch, long* score_errors) {
  std::vector<ScoredSample> out(inputs.size());
  std::vector<std::string> need;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    out[i].smiles = inputs[i].smiles;
    if (auto c = canonical_form(inputs[i].smiles)) {
      out[i].canonical = *c;
      if (!inputs[i].scores) need.push_back(*c);
    }
  }
  const auto scored = score_distinct(need, scorer, batch);
  std::unordered_map<std::string, double> snn_cache;
  long errors = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ScoredSample& s = out[i];
    if (s.canonical.empty()) continue;
    std::optional<oracle::Scores> sc = inputs[i].scores;
    if (!sc) {
      const auto& o = scored.at(s.canonical);
      if (!o.ok()) {
        ++errors;
        continue;
      }
      sc = o.scores;
    }
    auto it = snn_cache.find(s.canonical);
    if (it == snn_cache.end()) {
      const double v = snn(chem::morgan_fingerprint(chem::parse_smiles(s.canonical)), ref.fingerprints);
      it = snn_cache.emplace(s.canonical, v).first;
    }
    s.props = PropertyRecord{sc->qed, sc->sa, sc->ds, it->second};
  }
  if (score_errors) *score_errors = errors;
  return out;
}

inline nlohmann::json scored_sample_json(const ScoredSample& s, int repeat, const FilterThresholds& th) {
  nlohmann::json j = {{"smiles", s.smiles}, {"canonical", s.canonical}, {"repeat", repeat},
                      {"valid", !s.canonical.empty()}};
  if (s.props) {
    j["qed"] = s.props->qed;
    j["sa"] = s.props->sa;
    j["ds"] = s.props->ds;
    j["snn"] = s.props->snn;
    j["hit"] = apply_filters(*s.props, th);
  } else {
    j["hit"] = false;
  }
  return j;
}

struct EvalResult {
  nlohmann::json report;
  std::vector<ScoredSample> scored;
  std::vector<int> repeats;  // repeat id per scored sample
  FilterThresholds thresholds;
};

/// Full evaluation: per-repeat validity, unique@k, novelty, Frechet
/// distance on the token embedding, hit ratio and top-5% DS, then mean and
/// standard deviation over repeats.
inline EvalResult evaluate(const std::vector<EvalInput>& inputs, const Reference& ref, oracle::Scorer& scorer,
                           const EvalOptions& opts = {}) {
  if (inputs.empty()) throw std::runtime_error("no samples to evaluate");
  EvalResult res;
  res.thresholds = opts.thresholds ? *opts.thresholds : FilterThresholds{};
  if (!opts.thresholds) res.thresholds.ds_max = training_ds_median(ref, scorer, opts.score_batch);
  long errors = 0;
  res.scored = score_samples(inputs, ref, scorer, opts.score_batch, &errors);
  for (const auto& in : inputs) res.repeats.push_back(in.repeat);

  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < inputs.size(); ++i) groups[inputs[i].repeat].push_back(i);
  Eigen::MatrixXd ref_embed;
  if (opts.frechet) ref_embed = token_embeddings(ref.smiles, ref.vocab);

  nlohmann::json per = nlohmann::json::array();
  std::map<std::string, std::vector<double>> series;
  for (const auto& [rep, idx] : groups) {
    std::vector<std::string> smiles;
    std::vector<ScoredSample> scored;
    for (auto i : idx) {
      smiles.push_back(inputs[i].smiles);
      scored.push_back(res.scored[i]);
    }
    const double validity = validity_ratio(smiles);
    const UniqueResult uniq = unique_at_k(smiles, opts.unique_k);
    const double nov = novelty(smiles, ref.canonical);
    const long hits = count_hits(scored, res.thresholds);
    const double hit_ratio = novel_hit_ratio(scored, res.thresholds);
    const auto top5 = novel_top5_ds(scored, res.thresholds);
    nlohmann::json r = {{"repeat", rep},
                        {"samples", idx.size()},
                        {"validity", validity},
                        {"unique_at_k", uniq.value},
                        {"unique_k", opts.unique_k},
                        {"unique_used", uniq.used},
                        {"novelty", nov},
                        {"hits", hits},
                        {"novel_hit_ratio", hit_ratio},
                        {"novel_top5_ds", top5 ? nlohmann::json(*top5) : nlohmann::json(nullptr)}};
    series["validity"].push_back(validity);
    series["unique_at_k"].push_back(uniq.value);
    series["novelty"].push_back(nov);
    series["novel_hit_ratio"].push_back(hit_ratio);
    if (top5) series["novel_top5_ds"].push_back(*top5);
    if (opts.frechet) {
      std::vector<std::string> valid;
      for (const auto& s : smiles) {
        if (chem::is_valid(s)) valid.push_back(s);
      }
      if (valid.size() >= 2) {
        const double fd = frechet_distance(token_embeddings(valid, ref.vocab), ref_embed);
        r["frechet_token"] = fd;
        series["frechet_token"].push_back(fd);
      } else {
        r["frechet_token"] = nullptr;
      }
    }
    per.push_back(r);
  }
  nlohmann::json agg = nlohmann::json::object();
  for (const auto& [name, values] : series) agg[name] = to_json(aggregate(values));
  res.report = {{"thresholds", res.thresholds},
                {"scorer", scorer.describe()},
                {"samples", inputs.size()},
                {"score_errors", errors},
                {"training_molecules", ref.smiles.size()},
                {"repeats", per},
                {"aggregate", agg}};
  return res;
}

}  // namespace bfn::eval
