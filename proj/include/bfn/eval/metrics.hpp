#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "bfn/chem/canonical.hpp"
#include "bfn/chem/fingerprint.hpp"
#include "bfn/chem/smiles.hpp"
#include "bfn/token/vocab.hpp"

namespace bfn::eval {

struct PropertyRecord {
  double qed = 0.0;
  double sa = 0.0;
  double ds = 0.0;
  double snn = 0.0;
};

struct FilterThresholds {
  double qed_min = 0.5;
  double sa_max = 5.0;
  double ds_max = 0.0;  // median DS of the training data
  double snn_max = 0.4;
};

inline void to_json(nlohmann::json& j, const FilterThresholds& t) {
  j = {{"qed_min", t.qed_min}, {"sa_max", t.sa_max}, {"ds_max", t.ds_max}, {"snn_max", t.snn_max}};
}

inline void from_json(const nlohmann::json& j, FilterThresholds& t) {
  t.qed_min = j.value("qed_min", 0.5);
  t.sa_max = j.value("sa_max", 5.0);
  t.ds_max = j.at("ds_max").get<double>();
  t.snn_max = j.value("snn_max", 0.4);
}

/// Canonical SMILES, or nullopt when the string is not a valid molecule.
inline std::optional<std::string> canonical_form(std::string_view smiles) {
  try {
    return chem::canonical_smiles(chem::parse_smiles(smiles));
  } catch (const chem::ParseError&) {
    return std::nullopt;
  } catch (const chem::GraphError&) {
    return std::nullopt;
  }
}

inline double validity_ratio(const std::vector<std::string>& smiles) {
  if (smiles.empty()) return 0.0;
  long valid = 0;
  for (const auto& s : smiles) valid += chem::is_valid(s) ? 1 : 0;
  return static_cast<double>(valid) / static_cast<double>(smiles.size());
}

struct UniqueResult {
  double value = 0.0;
  long used = 0;  // valid samples considered, min(k, #valid)
};

/// Distinct canonical forms among the first k valid samples, divided by the
/// number of samples considered.
inline UniqueResult unique_at_k(const std::vector<std::string>& smiles, long k) {
  if (k < 1) throw std::invalid_argument("k must be positive");
  std::set<std::string> seen;
  UniqueResult r;
  for (const auto& s : smiles) {
    if (r.used == k) break;
    if (auto c = canonical_form(s)) {
      ++r.used;
      seen.insert(*c);
    }
  }
  r.value = r.used ? static_cast<double>(seen.size()) / static_cast<double>(r.used) : 0.0;
  return r;
}

/// Fraction of distinct valid canonical forms absent from `train`, which
/// must hold canonical forms.
inline double novelty(const std::vector<std::string>& smiles, const std::unordered_set<std::string>& train) {
  std::set<std::string> distinct;
  for (const auto& s : smiles) {
    if (auto c = canonical_form(s)) distinct.insert(*c);
  }
  if (distinct.empty()) return 0.0;
  long novel = 0;
  for (const auto& c : distinct) novel += train.count(c) ? 0 : 1;
  return static_cast<double>(novel) / static_cast<double>(distinct.size());
}

/// Nearest-neighbour Tanimoto similarity against a reference set.
inline double snn(const chem::Fingerprint& fp, const std::vector<chem::Fingerprint>& reference) {
  if (reference.empty()) throw std::invalid_argument("empty SNN reference set");
  double best = 0.0;
  for (const auto& r : reference) {
    if (r.width != fp.width) throw std::invalid_argument("fingerprint widths differ");
    best = std::max(best, chem::tanimoto(fp, r));
    if (best == 1.0) break;
  }
  return best;
}

namespace detail {

inline Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, Eigen::RowVectorXd& mean) {
  mean = x.colwise().mean();
  const Eigen::MatrixXd c = x.rowwise() - mean;
  const double denom = x.rows() > 1 ? static_cast<double>(x.rows() - 1) : 1.0;
  return (c.transpose() * c) / denom;
}

inline Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-8) throw std::runtime_error("covariance is not positive semi-definite");
    ev(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Frechet distance between Gaussian fits of two point sets (rows are
/// points). Tr((Sa Sb)^1/2) is taken as Tr((Sa^1/2 Sb Sa^1/2)^1/2), which is
/// symmetric and has the same eigenvalues.
inline double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("embedding widths differ");
  if (a.rows() < 1 || b.rows() < 1) throw std::invalid_argument("empty embedding set");
  if (!a.allFinite() || !b.allFinite()) throw std::invalid_argument("non-finite embedding");
  Eigen::RowVectorXd ma, mb;
  const Eigen::MatrixXd sa = detail::covariance(a, ma);
  const Eigen::MatrixXd sb = detail::covariance(b, mb);
  const Eigen::MatrixXd ra = detail::symmetric_sqrt(sa);
  const Eigen::MatrixXd cross = detail::symmetric_sqrt(ra * sb * ra);
  const double d = (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * cross.trace();
  return std::max(0.0, d);
}

/// Stand-in embedding for the Frechet distance: per-token frequencies over
/// the vocabulary (normalized to sum 1) followed by the token count.
inline Eigen::RowVectorXd token_embedding(std::string_view text, const token::Vocab& vocab) {
  Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(vocab.size() + 1);
  std::vector<std::string> toks;
  try {
    toks = token::tokenize(text, vocab.scheme());
  } catch (const token::TokenError&) {
    return e;
  }
  for (const auto& t : toks) e(vocab.id(t)) += 1.0;
  if (!toks.empty()) e.head(vocab.size()) /= static_cast<double>(toks.size());
  e(vocab.size()) = static_cast<double>(toks.size());
  return e;
}

inline Eigen::MatrixXd token_embeddings(const std::vector<std::string>& texts, const token::Vocab& vocab) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(texts.size()), vocab.size() + 1);
  for (std::size_t i = 0; i < texts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = token_embedding(texts[i], vocab);
  return m;
}

inline bool apply_filters(const PropertyRecord& r, const FilterThresholds& th) {
  return r.qed > th.qed_min && r.sa < th.sa_max && r.ds < th.ds_max && r.snn < th.snn_max;
}

/// One generated sample after scoring. `props` is absent for invalid
/// decodes and scorer errors; such samples never pass the filters.
struct ScoredSample {
  std::string smiles;
  std::string canonical;
  std::optional<PropertyRecord> props;
};

inline long count_hits(const std::vector<ScoredSample>& samples, const FilterThresholds& th) {
  long n = 0;
  for (const auto& s : samples) n += s.props && apply_filters(*s.props, th) ? 1 : 0;
  return n;
}

/// Percentage of all generated samples passing every filter.
inline double novel_hit_ratio(const std::vector<ScoredSample>& samples, const FilterThresholds& th) {
  if (samples.empty()) return 0.0;
  return 100.0 * static_cast<double>(count_hits(samples, th)) / static_cast<double>(samples.size());
}

/// Mean DS of the best ceil(5%) passing samples, ties broken by canonical
/// string; nullopt when nothing passes.
inline std::optional<double> novel_top5_ds(const std::vector<ScoredSample>& samples, const FilterThresholds& th) {
  std::vector<const ScoredSample*> hits;
  for (const auto& s : samples) {
    if (s.props && apply_filters(*s.props, th)) hits.push_back(&s);
  }
  if (hits.empty()) return std::nullopt;
  std::sort(hits.begin(), hits.end(), [](const ScoredSample* a, const ScoredSample* b) {
    if (a->props->ds != b->props->ds) return a->props->ds < b->props->ds;
    return a->canonical < b->canonical;
  });
  const auto n = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(hits.size())));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += hits[i]->props->ds;
  return sum / static_cast<double>(n);
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population (ddof = 0)
  long n = 0;
};

inline Summary aggregate(const std::vector<double>& values) {
  Summary s;
  s.n = static_cast<long>(values.size());
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(s.n));
  return s;
}

inline nlohmann::json to_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace bfn::eval
