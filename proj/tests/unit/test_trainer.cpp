#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "bfn/chem/random_molecules.hpp"
#include "bfn/chem/smiles.hpp"
#include "bfn/model/checkpoint.hpp"
#include "bfn/train/trainer.hpp"

using namespace bfn;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> small_corpus() {
  return {"CCO", "CCN", "CC(C)O", "CCCC", "OCCN", "CC=O", "CN", "CCOC", "NCCO", "C#N", "CC(=O)N", "COC"};
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("bfn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<token::Record> records(const std::vector<std::string>& texts) {
  std::vector<token::Record> out;
  for (const auto& s : texts) out.push_back({s, {}});
  return out;
}

}  // namespace

TEST(LrSchedule, WarmupThenConstant) {
  train::TrainConfig cfg;
  EXPECT_DOUBLE_EQ(train::lr_schedule(0, cfg), 1e-8);
  EXPECT_NEAR(train::lr_schedule(500, cfg), 1e-8 + 0.5 * (5e-5 - 1e-8), 1e-18);
  EXPECT_DOUBLE_EQ(train::lr_schedule(1000, cfg), 5e-5);
  EXPECT_DOUBLE_EQ(train::lr_schedule(100000, cfg), 5e-5);
  EXPECT_THROW(train::lr_schedule(-1, cfg), std::invalid_argument);
}

TEST(CondDropout, RateMatches) {
  core::Rng rng(11);
  const int n = 100000;
  int dropped = 0;
  for (int i = 0; i < n; ++i) {
    auto y = train::cond_dropout({1.0, 2.0}, 0.2, rng);
    if (!y) {
      ++dropped;
    } else {
      ASSERT_EQ(*y, (std::vector<double>{1.0, 2.0}));
    }
  }
  const double sigma = std::sqrt(0.2 * 0.8 / n);
  EXPECT_NEAR(static_cast<double>(dropped) / n, 0.2, 3 * sigma);
  EXPECT_FALSE(train::cond_dropout({1.0}, 1.0, rng));
  EXPECT_TRUE(train::cond_dropout({1.0}, 0.0, rng));
}

TEST(BatchLoss, EtaZeroSkipsValidity) {
  const auto vocab = token::build_vocab(small_corpus(), token::Scheme::kSmiles);
  model::Transformer<double> net(model::ModelConfig::desk(vocab.size(), 8));
  net.init(5);
  train::TrainConfig cfg;
  cfg.eta = 0.0;
  train::Trainer<double> tr(net, vocab, cfg);
  std::vector<token::TokenSequence> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(token::encode(small_corpus()[i], vocab, 8));
  const auto in = tr.prepare(batch, nullptr);
  int calls = 0;
  train::ValidityFn v = [&](const std::vector<int>&) {
    ++calls;
    return false;
  };
  const auto loss = train::batch_loss<double>(net, in, 0.0, 1.0, v, nullptr);
  EXPECT_EQ(calls, 0);
  EXPECT_EQ(loss.total, loss.bfn);
  EXPECT_EQ(loss.rl, 0.0);

  auto all_valid = [](const std::vector<int>&) { return true; };
  const auto checked = train::batch_loss<double>(net, in, 0.5, 1.0, all_valid, nullptr);
  EXPECT_EQ(checked.rl, 0.0);
  EXPECT_EQ(checked.total, checked.bfn);
  EXPECT_EQ(checked.rl_invalid, 0);
}

TEST(Trainer, SubsampleSize) {
  const auto vocab = token::build_vocab(small_corpus(), token::Scheme::kSmiles);
  model::Transformer<float> net(model::ModelConfig::desk(vocab.size(), 10));
  net.init(5);
  train::TrainConfig cfg;
  train::Trainer<float> tr(net, vocab, cfg);
  std::vector<token::TokenSequence> batch;
  for (const auto& s : small_corpus()) batch.push_back(token::encode(s, vocab, 10));
  const auto in = tr.prepare(batch, nullptr);
  int n = 0;
  for (char c : in.rl_checked) n += c;
  EXPECT_EQ(n, 3);
  for (float t : in.t) {
    EXPECT_GE(t, 0.0f);
    EXPECT_LT(t, 1.0f);
  }
}

TEST(AdamW, ZeroGradientNoDecayLeavesWeights) {
  train::AdamW opt(5, {0.9, 0.999, 1e-8, 0.0});
  std::vector<double> w{1, -2, 3, 0.5, 0};
  const auto before = w;
  for (int i = 0; i < 10; ++i) opt.step(w, std::vector<double>(5, 0.0), 1e-2);
  EXPECT_EQ(w, before);
}

TEST(AdamW, ClipScalesToMaxNorm) {
  std::vector<double> g{3, 4};
  EXPECT_DOUBLE_EQ(train::clip_grad_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g[0], 0.6, 1e-15);
  EXPECT_NEAR(g[1], 0.8, 1e-15);
}

TEST(Trainer, OverfitsTinyBatch) {
  const auto corpus = small_corpus();
  const auto vocab = token::build_vocab(corpus, token::Scheme::kSmiles);
  model::Transformer<float> net(model::ModelConfig::desk(vocab.size(), 10));
  net.init(7);
  train::TrainConfig cfg;
  cfg.lr_peak = 2e-3;
  cfg.warmup_steps = 0;
  cfg.eta = 0.0;
  train::Trainer<float> tr(net, vocab, cfg);
  std::vector<token::TokenSequence> batch;
  for (const auto& s : corpus) batch.push_back(token::encode(s, vocab, 10));
  double early = 0, late = 0;
  for (int i = 0; i < 200; ++i) {
    const auto r = tr.step(batch);
    ASSERT_TRUE(r.ok);
    if (i < 10) early += r.bfn;
    if (i >= 190) late += r.bfn;
  }
  EXPECT_LE(late, 0.5 * early) << "early " << early / 10 << " late " << late / 10;
}

TEST(Fit, DeterministicAndResumable) {
  const auto corpus = small_corpus();
  const auto vocab = token::build_vocab(corpus, token::Scheme::kSmiles);
  const auto mcfg = model::ModelConfig::desk(vocab.size(), 10);
  train::TrainConfig cfg;
  cfg.batch_size = 5;  // 3 batches per epoch
  cfg.max_steps = 7;
  cfg.lr_peak = 1e-3;
  cfg.warmup_steps = 2;
  cfg.seed = 3;

  const auto a = temp_dir("fit_a"), b = temp_dir("fit_b"), c = temp_dir("fit_c");
  const auto ra = train::fit<float>(records(corpus), vocab, mcfg, cfg, {a.string(), "", nullptr});
  const auto rb = train::fit<float>(records(corpus), vocab, mcfg, cfg, {b.string(), "", nullptr});
  EXPECT_EQ(ra.steps, 7);
  EXPECT_EQ(ra.epochs, 2);
  const auto ca = model::load_checkpoint(ra.checkpoint);
  const auto cb = model::load_checkpoint(rb.checkpoint);
  EXPECT_EQ(ca.weights, cb.weights);
  EXPECT_EQ(ca.step, 7);
  EXPECT_EQ(ca.epoch, 2);
  EXPECT_EQ(ca.extra.value("batch_in_epoch", -1L), 1);

  // 4 steps, then resume to 7.
  auto short_cfg = cfg;
  short_cfg.max_steps = 4;
  const auto rc = train::fit<float>(records(corpus), vocab, mcfg, short_cfg, {c.string(), "", nullptr});
  EXPECT_EQ(rc.steps, 4);
  const auto resumed_from = (c / "resume.ckpt").string();
  fs::copy_file(rc.checkpoint, resumed_from);
  const auto rr = train::fit<float>(records(corpus), vocab, mcfg, cfg, {c.string(), resumed_from, nullptr});
  EXPECT_EQ(rr.steps, 7);
  const auto cr = model::load_checkpoint(rr.checkpoint);
  EXPECT_EQ(cr.epoch, 2);
  ASSERT_EQ(cr.weights.size(), ca.weights.size());
  EXPECT_EQ(cr.weights, ca.weights);

  std::ifstream log(c / "train_log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  EXPECT_EQ(lines, 7);
}

TEST(Fit, RejectsMismatchedConditions) {
  const auto vocab = token::build_vocab(small_corpus(), token::Scheme::kSmiles);
  auto mcfg = model::ModelConfig::desk(vocab.size(), 10, 1);
  train::TrainConfig cfg;
  cfg.max_steps = 1;
  const auto d = temp_dir("fit_bad");
  EXPECT_THROW(train::fit<float>(records(small_corpus()), vocab, mcfg, cfg, {d.string(), "", nullptr}),
               std::runtime_error);
}

TEST(DeskCorpus, DistinctValidAcyclic) {
  const auto corpus = chem::desk_corpus(500, 12, 99);
  ASSERT_EQ(corpus.size(), 500u);
  std::set<std::string> seen(corpus.begin(), corpus.end());
  EXPECT_EQ(seen.size(), corpus.size());
  for (const auto& s : corpus) {
    EXPECT_LE(s.size(), 12u);
    EXPECT_TRUE(chem::is_valid(s)) << s;
    for (char ch : s) {
      EXPECT_TRUE(ch == 'C' || ch == 'N' || ch == 'O' || ch == '(' || ch == ')' || ch == '=' || ch == '#') << s;
    }
  }
  EXPECT_EQ(chem::desk_corpus(50, 12, 99), std::vector<std::string>(corpus.begin(), corpus.begin() + 50));
}
