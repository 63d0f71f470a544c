#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bfn/core/bfn.hpp"
#include "bfn/core/random.hpp"
#include "bfn/eval/validity.hpp"
#include "bfn/model/checkpoint.hpp"
#include "bfn/model/transformer.hpp"
#include "bfn/token/dataset.hpp"
#include "bfn/token/vocab.hpp"
#include "bfn/train/objective.hpp"
#include "bfn/train/optimizer.hpp"

namespace bfn::train {

struct TrainConfig {
  double eta = 0.01;            // validity term weight, 0 disables it
  double lr_start = 1e-8;
  double lr_peak = 5e-5;
  long warmup_steps = 1000;
  int epochs = 100;
  long max_steps = 0;           // 0: run all epochs
  int batch_size = 120;
  double uncond_rate = 0.2;
  model::MaskMode mask = model::MaskMode::kNormal;
  AdamConfig adam{};
  double grad_clip = 1.0;
  double rl_check_rate = 0.25;  // fraction of each batch whose decode is checked
  double beta1 = 1.0;
  std::uint64_t seed = 0;
  int log_every = 1;

  void validate() const {
    auto rate = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!(eta >= 0.0)) throw std::invalid_argument("eta must be non-negative");
    if (!rate(uncond_rate) || !rate(rl_check_rate)) throw std::invalid_argument("rates must lie in [0,1]");
    if (batch_size < 1 || epochs < 0 || warmup_steps < 0 || max_steps < 0) {
      throw std::invalid_argument("batch size, epochs and step counts must be positive");
    }
    if (!(lr_peak > 0.0) || !(lr_start >= 0.0) || !(beta1 > 0.0)) {
      throw std::invalid_argument("learning rates and beta1 must be positive");
    }
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"eta", c.eta},
       {"lr_start", c.lr_start},
       {"lr_peak", c.lr_peak},
       {"warmup_steps", c.warmup_steps},
       {"epochs", c.epochs},
       {"max_steps", c.max_steps},
       {"batch_size", c.batch_size},
       {"uncond_rate", c.uncond_rate},
       {"mask", model::to_string(c.mask)},
       {"adam_beta1", c.adam.beta1},
       {"adam_beta2", c.adam.beta2},
       {"adam_eps", c.adam.eps},
       {"weight_decay", c.adam.weight_decay},
       {"grad_clip", c.grad_clip},
       {"rl_check_rate", c.rl_check_rate},
       {"beta1", c.beta1},
       {"seed", c.seed},
       {"log_every", c.log_every}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.eta = j.value("eta", c.eta);
  c.lr_start = j.value("lr_start", c.lr_start);
  c.lr_peak = j.value("lr_peak", c.lr_peak);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.epochs = j.value("epochs", c.epochs);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.uncond_rate = j.value("uncond_rate", c.uncond_rate);
  c.mask = model::parse_mask(j.value("mask", std::string("normal")));
  c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
  c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
  c.adam.eps = j.value("adam_eps", c.adam.eps);
  c.adam.weight_decay = j.value("weight_decay", c.adam.weight_decay);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.rl_check_rate = j.value("rl_check_rate", c.rl_check_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.seed = j.value("seed", c.seed);
  c.log_every = j.value("log_every", c.log_every);
}

/// Linear warmup from lr_start to lr_peak, then constant.
inline double lr_schedule(long step, const TrainConfig& cfg = {}) {
  if (step < 0) throw std::invalid_argument("negative step");
  if (step >= cfg.warmup_steps) return cfg.lr_peak;
  return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * static_cast<double>(step) /
                            static_cast<double>(cfg.warmup_steps);
}

/// Condition or null (nullopt) with probability `rate`.
inline std::optional<std::vector<double>> cond_dropout(const std::vector<double>& y, double rate, core::Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("rate must lie in [0,1]");
  std::bernoulli_distribution drop(rate);
  if (drop(rng)) return std::nullopt;
  return y;
}

struct StepResult {
  bool ok = true;
  double total = 0.0;
  double bfn = 0.0;
  double rl = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
  int rl_checked = 0;
  int rl_invalid = 0;
};

template <class S = float>
class Trainer {
 public:
  Trainer(model::Transformer<S>& net, token::Vocab vocab, TrainConfig cfg)
      : net_(net), vocab_(std::move(vocab)), cfg_(cfg), opt_(net.parameter_count(), cfg.adam) {
    cfg_.validate();
    if (vocab_.size() != net_.config().K) throw std::invalid_argument("vocabulary size does not match model K");
  }

  long steps() const { return step_; }
  void set_steps(long s) {
    step_ = s;
    opt_.set_steps(s);
  }
  AdamW& optimizer() { return opt_; }
  const TrainConfig& config() const { return cfg_; }

  /// Builds the noised inputs of one step; deterministic in (seed, step).
  BatchInputs<S> prepare(const std::vector<token::TokenSequence>& batch,
                         const std::vector<std::vector<double>>* conditions) const {
    const int L = net_.config().L, K = net_.config().K, f = net_.config().cond_dim;
    const int B = static_cast<int>(batch.size());
    BatchInputs<S> in;
    in.mask = cfg_.mask;
    in.theta.resize(static_cast<Eigen::Index>(B) * L, K);
    in.t.resize(B);
    in.cond = model::CondBatch<S>::none(B);
    if (f > 0) in.cond.values = core::Mat<S>::Zero(B, f);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (int b = 0; b < B; ++b) {
      if (batch[b].length() != L) throw std::invalid_argument("sequence length does not match model L");
      core::Rng rng(core::derive_seed(cfg_.seed, static_cast<std::uint64_t>(step_), static_cast<std::uint64_t>(b)));
      const double t = uniform(rng);
      in.t[b] = static_cast<S>(t);
      in.theta.block(static_cast<Eigen::Index>(b) * L, 0, L, K) =
          core::noise_parameters<S>(batch[b].ids, K, t, cfg_.beta1, rng);
      in.target.push_back(batch[b].ids);
      if (f > 0 && conditions) {
        const auto& y = (*conditions)[b];
        if (static_cast<int>(y.size()) != f) throw std::invalid_argument("condition width mismatch");
        if (auto kept = cond_dropout(y, cfg_.uncond_rate, rng)) {
          in.cond.null[b] = 0;
          for (int k = 0; k < f; ++k) in.cond.values(b, k) = static_cast<S>((*kept)[k]);
        }
      }
    }
    in.rl_checked.assign(B, 0);
    if (cfg_.eta > 0.0 && cfg_.rl_check_rate > 0.0) {
      const int n = std::clamp(static_cast<int>(std::lround(cfg_.rl_check_rate * B)), 1, B);
      std::vector<int> order(B);
      std::iota(order.begin(), order.end(), 0);
      core::Rng rng(core::derive_seed(cfg_.seed, static_cast<std::uint64_t>(step_), 1ULL << 40));
      std::shuffle(order.begin(), order.end(), rng);
      for (int k = 0; k < n; ++k) in.rl_checked[order[k]] = 1;
    }
    return in;
  }

  StepResult step(const std::vector<token::TokenSequence>& batch,
                  const std::vector<std::vector<double>>* conditions = nullptr) {
    const BatchInputs<S> in = prepare(batch, conditions);
    const auto scheme = vocab_.scheme();
    const ValidityFn validity = [&](const std::vector<int>& ids) {
      return eval::is_valid_decoded(token::decode(ids, vocab_), scheme);
    };
    model::Weights<S> grad(net_.parameter_count(), S(0));
    const BatchLoss loss = batch_loss<S>(net_, in, cfg_.eta, cfg_.beta1, validity, &grad);
    StepResult r;
    r.total = loss.total;
    r.bfn = loss.bfn;
    r.rl = loss.rl;
    r.rl_checked = loss.rl_checked;
    r.rl_invalid = loss.rl_invalid;
    r.lr = lr_schedule(step_, cfg_);
    if (!std::isfinite(loss.total)) {
      r.ok = false;
      return r;
    }
    r.grad_norm = clip_grad_norm(grad, cfg_.grad_clip);
    if (!std::isfinite(r.grad_norm)) {
      r.ok = false;
      return r;
    }
    opt_.step(net_.weights(), grad, r.lr);
    ++step_;
    return r;
  }

 private:
  model::Transformer<S>& net_;
  token::Vocab vocab_;
  TrainConfig cfg_;
  AdamW opt_;
  long step_ = 0;
};

struct FitOptions {
  std::string out_dir;              // checkpoint and log directory
  std::string resume;               // checkpoint to resume from, or empty
  std::function<void(long, const StepResult&)> on_step;
};

struct FitResult {
  long steps = 0;
  int epochs = 0;
  double last_total = 0.0;
  double last_bfn = 0.0;
  std::string checkpoint;
};

/// Trains on `records` for cfg.epochs (or until cfg.max_steps), writing a
/// checkpoint at every epoch end and on completion, and a JSON-lines log.
template <class S = float>
FitResult fit(const std::vector<token::Record>& records, const token::Vocab& vocab,
              const model::ModelConfig& mcfg, const TrainConfig& cfg, const FitOptions& opts) {
  cfg.validate();
  if (records.empty()) throw std::invalid_argument("empty training set");
  std::vector<token::TokenSequence> data;
  std::vector<std::vector<double>> conds;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      data.push_back(token::encode(records[i].text, vocab, mcfg.L));
    } catch (const token::TokenError& e) {
      throw std::runtime_error("record " + std::to_string(i + 1) + ": " + e.what());
    }
    if (static_cast<int>(records[i].condition.size()) != mcfg.cond_dim) {
      throw std::runtime_error("record " + std::to_string(i + 1) + " has " +
                               std::to_string(records[i].condition.size()) + " condition values, model expects " +
                               std::to_string(mcfg.cond_dim));
    }
    conds.push_back(records[i].condition);
  }

  model::Checkpoint ckpt;
  ckpt.vocab = vocab;
  ckpt.train_mask = cfg.mask;
  model::Transformer<S> net(mcfg);
  net.init(core::derive_seed(cfg.seed, 0x1417));
  int epoch = 0;
  long batch_in_epoch = 0;
  Trainer<S> trainer(net, vocab, cfg);
  if (!opts.resume.empty()) {
    ckpt = model::load_checkpoint(opts.resume);
    if (!(ckpt.config == mcfg)) throw std::runtime_error("resume checkpoint has a different model configuration");
    if (!(ckpt.vocab == vocab)) throw std::runtime_error("resume checkpoint was trained with a different vocabulary");
    net = ckpt.template model<S>();
    trainer.set_steps(ckpt.step);
    epoch = ckpt.epoch;
    batch_in_epoch = ckpt.extra.value("batch_in_epoch", 0L);
    if (!ckpt.moment1.empty()) {
      auto& m = trainer.optimizer().first();
      auto& v = trainer.optimizer().second();
      for (std::size_t k = 0; k < m.size(); ++k) {
        m[k] = ckpt.moment1[k];
        v[k] = ckpt.moment2[k];
      }
    }
  }

  std::filesystem::create_directories(opts.out_dir);
  const std::string ckpt_path = (std::filesystem::path(opts.out_dir) / "model.ckpt").string();
  std::ofstream log((std::filesystem::path(opts.out_dir) / "train_log.jsonl").string(),
                    opts.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot write training log in " + opts.out_dir);

  auto save = [&] {
    ckpt.set_weights(net);
    ckpt.step = trainer.steps();
    ckpt.epoch = epoch;
    ckpt.train_mask = cfg.mask;
    ckpt.extra = {{"batch_in_epoch", batch_in_epoch}, {"train_config", cfg}};
    const auto& m = trainer.optimizer().first();
    const auto& v = trainer.optimizer().second();
    ckpt.moment1.assign(m.begin(), m.end());
    ckpt.moment2.assign(v.begin(), v.end());
    model::save_checkpoint(ckpt_path, ckpt);
  };

  const auto start = std::chrono::steady_clock::now();
  const long n = static_cast<long>(data.size());
  const long per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  FitResult result;
  bool saved = false;
  bool done = cfg.max_steps > 0 && trainer.steps() >= cfg.max_steps;
  while (!done && epoch < cfg.epochs) {
    std::vector<long> order(n);
    std::iota(order.begin(), order.end(), 0L);
    core::Rng shuffle_rng(core::derive_seed(cfg.seed, 0xE90C, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (; batch_in_epoch < per_epoch; ++batch_in_epoch) {
      std::vector<token::TokenSequence> batch;
      std::vector<std::vector<double>> batch_conds;
      const long lo = batch_in_epoch * cfg.batch_size;
      const long hi = std::min(n, lo + cfg.batch_size);
      for (long k = lo; k < hi; ++k) {
        batch.push_back(data[order[k]]);
        batch_conds.push_back(conds[order[k]]);
      }
      const long step = trainer.steps();
      const StepResult r = trainer.step(batch, &batch_conds);
      if (!r.ok) throw std::runtime_error("non-finite loss at step " + std::to_string(step));
      result.last_total = r.total;
      result.last_bfn = r.bfn;
      if (opts.on_step) opts.on_step(step, r);
      if (cfg.log_every > 0 && step % cfg.log_every == 0) {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        log << nlohmann::json{{"step", step},         {"epoch", epoch},       {"total", r.total},
                              {"bfn", r.bfn},          {"rl", r.rl},           {"grad_norm", r.grad_norm},
                              {"lr", r.lr},            {"wall_time", wall}}
                   .dump()
            << '\n';
      }
      if (cfg.max_steps > 0 && trainer.steps() >= cfg.max_steps) {
        ++batch_in_epoch;
        done = true;
        break;
      }
    }
    if (batch_in_epoch >= per_epoch) {
      ++epoch;
      batch_in_epoch = 0;
    }
    save();
    saved = true;
  }
  if (!saved) save();
  result.steps = trainer.steps();
  result.epochs = epoch;
  result.checkpoint = ckpt_path;
  return result;
}

}  // namespace bfn::train
