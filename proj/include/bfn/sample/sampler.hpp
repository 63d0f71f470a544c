#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "bfn/core/bfn.hpp"
#include "bfn/core/random.hpp"
#include "bfn/eval/validity.hpp"
#include "bfn/model/config.hpp"
#include "bfn/model/transformer.hpp"
#include "bfn/token/vocab.hpp"

namespace bfn::sample {

enum class Method { kOde, kNative };

inline std::string to_string(Method m) { return m == Method::kNative ? "native" : "ode"; }

inline Method parse_method(std::string_view s) {
  if (s == "ode") return Method::kOde;
  if (s == "native") return Method::kNative;
  throw std::invalid_argument("unknown sampling method '" + std::string(s) + "'");
}

struct SamplerConfig {
  int steps = 100;
  double tau = 0.5;
  Method method = Method::kOde;
  model::MaskMode mask = model::MaskMode::kNormal;
  model::MaskMode train_mask = model::MaskMode::kNormal;  // recorded only
  double guidance = 0.5;
  std::optional<std::vector<double>> condition;
  std::uint64_t seed = 0;
  int batch_size = 64;
  double beta1 = 1.0;
  int threads = 1;

  void validate() const {
    if (steps < 1) throw std::invalid_argument("steps must be at least 1");
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be non-negative");
    if (!(beta1 > 0.0)) throw std::invalid_argument("beta1 must be positive");
    if (batch_size < 1 || threads < 1) throw std::invalid_argument("batch size and threads must be positive");
    if (!std::isfinite(guidance)) throw std::invalid_argument("guidance strength must be finite");
  }

  model::StrategyConfig strategy() const { return {train_mask, mask}; }
};

class DivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-step latent or parameter snapshots, one matrix per step.
template <class S>
struct Trace {
  std::vector<core::Mat<S>> states;
};

namespace detail {

/// Output distribution for a batch, with classifier-free guidance when a
/// condition is set and the guidance strength is non-zero.
template <class Net, class S>
core::Mat<S> output_distribution(const Net& net, const core::Mat<S>& theta, int B, double t,
                                 const SamplerConfig& cfg) {
  const std::vector<S> times(B, static_cast<S>(t));
  const auto null = model::CondBatch<S>::none(B);
  if (!cfg.condition) return core::softmax_rows<S>(net.forward(theta, times, null, cfg.mask));
  const auto cond = model::CondBatch<S>::repeat(*cfg.condition, B);
  const core::Mat<S> zc = net.forward(theta, times, cond, cfg.mask);
  if (cfg.guidance == 0.0) return core::softmax_rows<S>(zc);
  const core::Mat<S> zu = net.forward(theta, times, null, cfg.mask);
  return core::softmax_rows<S>(core::cfg_combine<S>(zc, zu, cfg.guidance));
}

template <class S>
void check_finite(const core::Mat<S>& m, const char* what) {
  if (!m.allFinite()) throw DivergedError(std::string("non-finite ") + what + " during sampling");
}

}  // namespace detail

/// Latent-space sampler. z starts at 0; each step recomputes
/// z = beta(s) (K e_hat - 1) + sqrt(K beta(s) tau) eps from the output
/// distribution at t = (i-1)/n, s = t + 1/n. Returns argmax of the output
/// at t = 1. rngs[b] drives element b.
template <class S, class Net>
std::vector<std::vector<int>> sample_ode(const Net& net, const SamplerConfig& cfg, std::vector<core::Rng>& rngs,
                                         Trace<S>* trace = nullptr) {
  cfg.validate();
  const int K = net.config().K, L = net.config().L, B = static_cast<int>(rngs.size());
  const int n = cfg.steps;
  std::normal_distribution<double> normal(0.0, 1.0);
  core::Mat<S> z = core::Mat<S>::Zero(static_cast<Eigen::Index>(B) * L, K);
  for (int i = 1; i <= n; ++i) {
    const double t = static_cast<double>(i - 1) / n;
    const double s = std::min(1.0, t + 1.0 / n);
    const double beta = core::accuracy_schedule(s, cfg.beta1);
    const double sd = std::sqrt(K * beta * cfg.tau);
    const core::Mat<S> theta = core::softmax_rows<S>(z);
    const core::Mat<S> e_hat = detail::output_distribution<Net, S>(net, theta, B, t, cfg);
    for (int b = 0; b < B; ++b) {
      for (int r = 0; r < L; ++r) {
        const Eigen::Index row = static_cast<Eigen::Index>(b) * L + r;
        for (int k = 0; k < K; ++k) {
          double v = beta * (K * static_cast<double>(e_hat(row, k)) - 1.0);
          if (sd > 0.0) v += sd * normal(rngs[b]);
          z(row, k) = static_cast<S>(v);
        }
      }
    }
    detail::check_finite(z, "latent");
    if (trace) trace->states.push_back(z);
  }
  const core::Mat<S> e_final = detail::output_distribution<Net, S>(net, core::softmax_rows<S>(z), B, 1.0, cfg);
  const auto flat = core::argmax_rows<S>(e_final);
  std::vector<std::vector<int>> out(B);
  for (int b = 0; b < B; ++b) out[b].assign(flat.begin() + static_cast<long>(b) * L, flat.begin() + static_cast<long>(b + 1) * L);
  return out;
}

/// Bayesian-update sampler: theta starts uniform; step i draws k ~ e_hat at
/// t_{i-1}, a sender sample y ~ N(alpha (K e_k - 1), alpha K) with
/// alpha = beta(t_i) - beta(t_{i-1}), and updates theta. Returns argmax of
/// the output at t = 1.
template <class S, class Net>
std::vector<std::vector<int>> sample_native(const Net& net, const SamplerConfig& cfg, std::vector<core::Rng>& rngs,
                                            Trace<S>* trace = nullptr) {
  cfg.validate();
  const int K = net.config().K, L = net.config().L, B = static_cast<int>(rngs.size());
  const int n = cfg.steps;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  core::Mat<S> theta = core::Mat<S>::Constant(static_cast<Eigen::Index>(B) * L, K, S(1) / static_cast<S>(K));
  for (int i = 1; i <= n; ++i) {
    const double t_prev = static_cast<double>(i - 1) / n;
    const double t_next = static_cast<double>(i) / n;
    const double alpha = core::accuracy_schedule(t_next, cfg.beta1) - core::accuracy_schedule(t_prev, cfg.beta1);
    const double sd = std::sqrt(alpha * K);
    const core::Mat<S> e_hat = detail::output_distribution<Net, S>(net, theta, B, t_prev, cfg);
    core::Mat<S> y(theta.rows(), K);
    for (int b = 0; b < B; ++b) {
      for (int r = 0; r < L; ++r) {
        const Eigen::Index row = static_cast<Eigen::Index>(b) * L + r;
        // Inverse-CDF draw of k from e_hat.
        const double u = uniform(rngs[b]);
        double acc = 0.0;
        int k_draw = K - 1;
        for (int k = 0; k < K; ++k) {
          acc += static_cast<double>(e_hat(row, k));
          if (u < acc) {
            k_draw = k;
            break;
          }
        }
        for (int k = 0; k < K; ++k) {
          y(row, k) = static_cast<S>(alpha * (K * (k == k_draw ? 1.0 : 0.0) - 1.0) + sd * normal(rngs[b]));
        }
      }
    }
    theta = core::bayesian_update<S>(theta, y);
    detail::check_finite(theta, "parameters");
    if (trace) trace->states.push_back(theta);
  }
  const core::Mat<S> e_final = detail::output_distribution<Net, S>(net, theta, B, 1.0, cfg);
  const auto flat = core::argmax_rows<S>(e_final);
  std::vector<std::vector<int>> out(B);
  for (int b = 0; b < B; ++b) out[b].assign(flat.begin() + static_cast<long>(b) * L, flat.begin() + static_cast<long>(b + 1) * L);
  return out;
}

template <class S, class Net>
std::vector<std::vector<int>> sample(const Net& net, const SamplerConfig& cfg, std::vector<core::Rng>& rngs) {
  return cfg.method == Method::kOde ? sample_ode<S>(net, cfg, rngs) : sample_native<S>(net, cfg, rngs);
}

struct SampleRecord {
  std::vector<int> ids;
  std::string decoded;
  std::string smiles;
  bool valid = false;
  int repeat = 0;
  long index = 0;
  std::uint64_t seed = 0;  // stream seed of this sample
};

/// Stream seed of sample `index` in `repeat`.
inline std::uint64_t sample_seed(std::uint64_t root, int repeat, long index) {
  return core::derive_seed(root, static_cast<std::uint64_t>(repeat), static_cast<std::uint64_t>(index));
}

/// Raw token sequences for samples [first, first + count), in fixed
/// sub-batches of cfg.batch_size aligned to multiples of the batch size, so
/// each sample only depends on (seed, repeat, index).
template <class S, class Net>
std::vector<std::vector<int>> generate_ids(const Net& net, const SamplerConfig& cfg, long count, int repeat = 0) {
  cfg.validate();
  if (count < 1) throw std::invalid_argument("count must be at least 1");
  const long bs = cfg.batch_size;
  const long chunks = (count + bs - 1) / bs;
  std::vector<std::vector<int>> out(count);
  auto work = [&](int tid) {
    for (long c = tid; c < chunks; c += cfg.threads) {
      std::vector<core::Rng> rngs;
      for (long i = c * bs; i < std::min(count, (c + 1) * bs); ++i) rngs.emplace_back(sample_seed(cfg.seed, repeat, i));
      auto ids = sample<S>(net, cfg, rngs);
      for (std::size_t k = 0; k < ids.size(); ++k) out[c * bs + static_cast<long>(k)] = std::move(ids[k]);
    }
  };
  if (cfg.threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int tid = 0; tid < cfg.threads; ++tid) pool.emplace_back(work, tid);
    for (auto& th : pool) th.join();
  }
  return out;
}

/// Samples `count` sequences for one repeat, decoded and validity-checked.
template <class S, class Net>
std::vector<SampleRecord> generate_batch(const Net& net, const token::Vocab& vocab, const SamplerConfig& cfg,
                                         long count, int repeat = 0) {
  if (vocab.size() != net.config().K) throw std::invalid_argument("vocabulary size does not match model K");
  auto ids = generate_ids<S>(net, cfg, count, repeat);
  std::vector<SampleRecord> out(count);
  for (long i = 0; i < count; ++i) {
    SampleRecord& r = out[i];
    r.ids = std::move(ids[i]);
    r.decoded = token::decode(r.ids, vocab);
    r.smiles = eval::to_smiles(r.decoded, vocab.scheme());
    r.valid = eval::is_valid_decoded(r.decoded, vocab.scheme());
    r.repeat = repeat;
    r.index = i;
    r.seed = sample_seed(cfg.seed, repeat, i);
  }
  return out;
}

/// Replays one sample from its recorded repeat and index.
template <class S, class Net>
std::vector<int> replay(const Net& net, const SamplerConfig& cfg, int repeat, long index) {
  std::vector<core::Rng> rngs{core::Rng(sample_seed(cfg.seed, repeat, index))};
  return sample<S>(net, cfg, rngs).front();
}

inline nlohmann::json to_json(const SampleRecord& r, const SamplerConfig& cfg) {
  return {{"sequence", r.ids},
          {"decoded", r.decoded},
          {"smiles", r.smiles},
          {"valid", r.valid},
          {"strategy", cfg.strategy().number()},
          {"train_mask", model::to_string(cfg.train_mask)},
          {"sample_mask", model::to_string(cfg.mask)},
          {"method", to_string(cfg.method)},
          {"steps", cfg.steps},
          {"tau", cfg.tau},
          {"guidance", cfg.guidance},
          {"seed", r.seed},
          {"root_seed", cfg.seed},
          {"repeat", r.repeat},
          {"index", r.index},
          {"condition", cfg.condition ? nlohmann::json(*cfg.condition) : nlohmann::json(nullptr)}};
}

}  // namespace bfn::sample
