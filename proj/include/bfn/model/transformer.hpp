#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bfn/core/bfn.hpp"
#include "bfn/core/random.hpp"
#include "bfn/model/config.hpp"

namespace bfn::model {

/// Per-element conditions. Rows flagged null use the learned null embedding.
template <class S>
struct CondBatch {
  core::Mat<S> values;
  std::vector<char> null;

  static CondBatch none(int batch) { return {core::Mat<S>(batch, 0), std::vector<char>(batch, 1)}; }

  static CondBatch repeat(const std::vector<double>& y, int batch) {
    CondBatch c{core::Mat<S>(batch, static_cast<Eigen::Index>(y.size())), std::vector<char>(batch, 0)};
    for (int b = 0; b < batch; ++b) {
      for (std::size_t k = 0; k < y.size(); ++k) c.values(b, static_cast<Eigen::Index>(k)) = static_cast<S>(y[k]);
    }
    return c;
  }

  int batch() const { return static_cast<int>(null.size()); }
};

/// Flat parameter or gradient storage, 64-byte aligned.
template <class S>
using Weights = std::vector<S, Eigen::aligned_allocator<S>>;

struct Tensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

/// Pre-norm transformer encoder mapping per-position simplex parameters,
/// time and an optional condition to per-position logits over K tokens.
/// Sequence slot 0 is a condition prefix; slots 1..L carry theta.
template <class S>
class Transformer {
 public:
  using Mat = core::Mat<S>;
  using Map = Eigen::Map<Mat>;
  using CMap = Eigen::Map<const Mat>;

  explicit Transformer(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    layout();
    w_.assign(size_, S(0));
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t parameter_count() const { return size_; }
  Weights<S>& weights() { return w_; }
  const Weights<S>& weights() const { return w_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  /// Fan-in scaled uniform matrices, zero biases, unit norm gains.
  void init(std::uint64_t seed) {
    core::Rng rng(seed);
    for (const auto& t : tensors_) {
      S* p = w_.data() + t.offset;
      const std::string& n = t.name;
      const auto ends = [&](const char* suffix) { return n.ends_with(suffix); };
      if (ends(".gain")) {
        std::fill(p, p + t.size(), S(1));
      } else if (ends(".bias")) {
        std::fill(p, p + t.size(), S(0));
      } else {
        const double bound = ends(".weight") ? 1.0 / std::sqrt(static_cast<double>(t.rows))
                                             : 1.0 / std::sqrt(static_cast<double>(cfg_.hidden));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (std::size_t k = 0; k < t.size(); ++k) p[k] = static_cast<S>(u(rng));
      }
    }
  }

  struct LayerCache {
    Mat x_in, ln1, ln1_hat, qkv, heads, x_mid, ln2, ln2_hat, pre, act;
    Eigen::Matrix<S, Eigen::Dynamic, 1> ln1_rstd, ln2_rstd;
    std::vector<Mat> probs;  // B * heads attention matrices
  };

  struct Cache {
    int batch = 0;
    MaskMode mask = MaskMode::kNormal;
    Mat theta, time_feat, final_hat, final_sel;
    Eigen::Matrix<S, Eigen::Dynamic, 1> final_rstd;
    CondBatch<S> cond;
    std::vector<LayerCache> layers;
  };

  /// theta: (B*L) x K rows on the simplex; t: one time per element.
  /// Returns (B*L) x K logits.
  Mat forward(const Mat& theta, const std::vector<S>& t, const CondBatch<S>& cond, MaskMode mask,
              Cache* cache = nullptr) const {
    const int L = cfg_.L, H = cfg_.hidden, Sq = L + 1;
    if (theta.cols() != cfg_.K || theta.rows() % L != 0 || theta.rows() == 0) {
      throw std::invalid_argument("forward: theta must be (B*L) x K");
    }
    const int B = static_cast<int>(theta.rows() / L);
    if (static_cast<int>(t.size()) != B || cond.batch() != B) {
      throw std::invalid_argument("forward: batch size mismatch");
    }
    bool any_cond = false;
    for (char n : cond.null) any_cond |= !n;
    if (any_cond && (cfg_.cond_dim == 0 || cond.values.cols() != cfg_.cond_dim)) {
      throw std::invalid_argument("forward: condition width mismatch");
    }
    Cache local;
    Cache& c = cache ? *cache : local;
    c.batch = B;
    c.mask = mask;
    c.theta = theta;
    c.cond = cond;
    c.time_feat = time_features(t);

    Mat time_emb = c.time_feat * P(ids_.time_w);
    time_emb.rowwise() += P(ids_.time_b).row(0);
    Mat emb = theta * P(ids_.in_w);
    emb.rowwise() += P(ids_.in_b).row(0);
    Mat x(static_cast<Eigen::Index>(B) * Sq, H);
    for (int b = 0; b < B; ++b) {
      auto prefix = x.row(static_cast<Eigen::Index>(b) * Sq);
      prefix = P(ids_.prefix).row(0);
      if (cond.null[b]) {
        prefix += P(ids_.null_emb).row(0);
      } else {
        prefix += cond.values.row(b) * P(ids_.cond_w) + P(ids_.cond_b).row(0);
      }
      x.block(static_cast<Eigen::Index>(b) * Sq + 1, 0, L, H) = emb.block(static_cast<Eigen::Index>(b) * L, 0, L, H);
      x.block(static_cast<Eigen::Index>(b) * Sq, 0, Sq, H) += P(ids_.pos);
      x.block(static_cast<Eigen::Index>(b) * Sq, 0, Sq, H).rowwise() += time_emb.row(b);
    }

    c.layers.assign(cfg_.layers, {});
    for (int l = 0; l < cfg_.layers; ++l) x = layer_forward(l, x, B, mask, c.layers[l]);

    Mat y = layer_norm(x, P(ids_.lnf_g), P(ids_.lnf_b), c.final_hat, c.final_rstd);
    c.final_sel.resize(static_cast<Eigen::Index>(B) * L, H);
    for (int b = 0; b < B; ++b) {
      c.final_sel.block(static_cast<Eigen::Index>(b) * L, 0, L, H) = y.block(static_cast<Eigen::Index>(b) * Sq + 1, 0, L, H);
    }
    Mat logits = c.final_sel * P(ids_.head_w);
    logits.rowwise() += P(ids_.head_b).row(0);
    return logits;
  }

  /// Output distribution e_hat = softmax(logits).
  Mat probabilities(const Mat& theta, const std::vector<S>& t, const CondBatch<S>& cond, MaskMode mask) const {
    return core::softmax_rows<S>(forward(theta, t, cond, mask));
  }

  /// Adds d loss / d weights to `grad` (same layout as weights()).
  void backward(const Cache& c, const Mat& dlogits, Weights<S>& grad) const {
    if (grad.size() != size_) grad.assign(size_, S(0));
    const int L = cfg_.L, H = cfg_.hidden, Sq = L + 1, B = c.batch;
    G(grad, ids_.head_w).noalias() += c.final_sel.transpose() * dlogits;
    G(grad, ids_.head_b) += dlogits.colwise().sum();
    const Mat dsel = dlogits * P(ids_.head_w).transpose();
    Mat dy = Mat::Zero(static_cast<Eigen::Index>(B) * Sq, H);
    for (int b = 0; b < B; ++b) {
      dy.block(static_cast<Eigen::Index>(b) * Sq + 1, 0, L, H) = dsel.block(static_cast<Eigen::Index>(b) * L, 0, L, H);
    }
    Mat dx = layer_norm_backward(dy, c.final_hat, c.final_rstd, P(ids_.lnf_g), G(grad, ids_.lnf_g),
                                 G(grad, ids_.lnf_b));
    for (int l = cfg_.layers - 1; l >= 0; --l) dx = layer_backward(l, c.layers[l], dx, B, c.mask, grad);

    // Embeddings.
    Mat dtime = Mat::Zero(B, H);
    Mat demb(static_cast<Eigen::Index>(B) * L, H);
    auto dpos = G(grad, ids_.pos);
    for (int b = 0; b < B; ++b) {
      const auto block = dx.block(static_cast<Eigen::Index>(b) * Sq, 0, Sq, H);
      dpos += block;
      dtime.row(b) = block.colwise().sum();
      demb.block(static_cast<Eigen::Index>(b) * L, 0, L, H) = block.bottomRows(L);
      const auto drow = dx.row(static_cast<Eigen::Index>(b) * Sq);
      G(grad, ids_.prefix) += drow;
      if (c.cond.null[b]) {
        G(grad, ids_.null_emb) += drow;
      } else {
        G(grad, ids_.cond_w).noalias() += c.cond.values.row(b).transpose() * drow;
        G(grad, ids_.cond_b) += drow;
      }
    }
    G(grad, ids_.time_w).noalias() += c.time_feat.transpose() * dtime;
    G(grad, ids_.time_b) += dtime.colwise().sum();
    G(grad, ids_.in_w).noalias() += c.theta.transpose() * demb;
    G(grad, ids_.in_b) += demb.colwise().sum();
  }

  int find_tensor(const std::string& name) const {
    for (std::size_t k = 0; k < tensors_.size(); ++k) {
      if (tensors_[k].name == name) return static_cast<int>(k);
    }
    return -1;
  }

 private:
  struct LayerIds {
    int ln1_g, ln1_b, qkv_w, qkv_b, out_w, out_b, ln2_g, ln2_b, ff1_w, ff1_b, ff2_w, ff2_b;
  };
  struct Ids {
    int in_w, in_b, pos, prefix, null_emb, cond_w, cond_b, time_w, time_b, lnf_g, lnf_b, head_w, head_b;
    std::vector<LayerIds> layers;
  };

  // Offsets are padded to 64 bytes: vectorised reductions then see the same
  // alignment in every buffer, which keeps results bitwise reproducible.
  int add(const std::string& name, int rows, int cols) {
    tensors_.push_back({name, rows, cols, size_});
    constexpr std::size_t kAlign = 64 / sizeof(S);
    size_ += (static_cast<std::size_t>(rows) * cols + kAlign - 1) / kAlign * kAlign;
    return static_cast<int>(tensors_.size() - 1);
  }

  void layout() {
    const int H = cfg_.hidden, K = cfg_.K;
    ids_.in_w = add("embed.weight", K, H);
    ids_.in_b = add("embed.bias", 1, H);
    ids_.pos = add("position", cfg_.L + 1, H);
    ids_.prefix = add("prefix", 1, H);
    ids_.null_emb = add("null_condition", 1, H);
    ids_.cond_w = add("condition.weight", cfg_.cond_dim, H);
    ids_.cond_b = add("condition.bias", 1, H);
    ids_.time_w = add("time.weight", cfg_.time_features, H);
    ids_.time_b = add("time.bias", 1, H);
    for (int l = 0; l < cfg_.layers; ++l) {
      const std::string p = "block" + std::to_string(l) + ".";
      LayerIds li{};
      li.ln1_g = add(p + "norm1.gain", 1, H);
      li.ln1_b = add(p + "norm1.bias", 1, H);
      li.qkv_w = add(p + "qkv.weight", H, 3 * H);
      li.qkv_b = add(p + "qkv.bias", 1, 3 * H);
      li.out_w = add(p + "out.weight", H, H);
      li.out_b = add(p + "out.bias", 1, H);
      li.ln2_g = add(p + "norm2.gain", 1, H);
      li.ln2_b = add(p + "norm2.bias", 1, H);
      li.ff1_w = add(p + "ff1.weight", H, cfg_.ffn());
      li.ff1_b = add(p + "ff1.bias", 1, cfg_.ffn());
      li.ff2_w = add(p + "ff2.weight", cfg_.ffn(), H);
      li.ff2_b = add(p + "ff2.bias", 1, H);
      ids_.layers.push_back(li);
    }
    ids_.lnf_g = add("norm.gain", 1, H);
    ids_.lnf_b = add("norm.bias", 1, H);
    ids_.head_w = add("head.weight", H, K);
    ids_.head_b = add("head.bias", 1, K);
  }

  CMap P(int id) const {
    const Tensor& t = tensors_[id];
    return CMap(w_.data() + t.offset, t.rows, t.cols);
  }
  Map G(Weights<S>& g, int id) const {
    const Tensor& t = tensors_[id];
    return Map(g.data() + t.offset, t.rows, t.cols);
  }

  Mat time_features(const std::vector<S>& t) const {
    const int half = cfg_.time_features / 2;
    Mat f(static_cast<Eigen::Index>(t.size()), cfg_.time_features);
    for (std::size_t b = 0; b < t.size(); ++b) {
      for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * k / half);
        const double a = 1000.0 * static_cast<double>(t[b]) * freq;
        f(static_cast<Eigen::Index>(b), k) = static_cast<S>(std::sin(a));
        f(static_cast<Eigen::Index>(b), k + half) = static_cast<S>(std::cos(a));
      }
    }
    return f;
  }

  static constexpr double kEps = 1e-5;

  static Mat layer_norm(const Mat& x, const CMap& gain, const CMap& bias, Mat& hat,
                        Eigen::Matrix<S, Eigen::Dynamic, 1>& rstd) {
    const Eigen::Index n = x.rows(), h = x.cols();
    hat.resize(n, h);
    rstd.resize(n);
    Mat y(n, h);
    for (Eigen::Index r = 0; r < n; ++r) {
      const S mean = x.row(r).mean();
      const S var = (x.row(r).array() - mean).square().mean();
      rstd(r) = S(1) / std::sqrt(var + static_cast<S>(kEps));
      hat.row(r) = (x.row(r).array() - mean) * rstd(r);
      y.row(r) = hat.row(r).array() * gain.row(0).array() + bias.row(0).array();
    }
    return y;
  }

  static Mat layer_norm_backward(const Mat& dy, const Mat& hat, const Eigen::Matrix<S, Eigen::Dynamic, 1>& rstd,
                                 const CMap& gain, Map dgain, Map dbias) {
    dgain += dy.cwiseProduct(hat).colwise().sum();
    dbias += dy.colwise().sum();
    Mat dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const auto dhat = (dy.row(r).array() * gain.row(0).array()).eval();
      const S m1 = dhat.mean();
      const S m2 = (dhat * hat.row(r).array()).mean();
      dx.row(r) = rstd(r) * (dhat - m1 - hat.row(r).array() * m2);
    }
    return dx;
  }

  static S gelu(S x) { return S(0.5) * x * (S(1) + std::erf(x / std::sqrt(S(2)))); }
  static S gelu_grad(S x) {
    const S cdf = S(0.5) * (S(1) + std::erf(x / std::sqrt(S(2))));
    const S pdf = std::exp(S(-0.5) * x * x) / std::sqrt(S(2) * static_cast<S>(M_PI));
    return cdf + x * pdf;
  }

  Mat layer_forward(int l, const Mat& x, int B, MaskMode mask, LayerCache& c) const {
    const LayerIds& li = ids_.layers[l];
    const int H = cfg_.hidden, Sq = cfg_.L + 1, nh = cfg_.heads, dh = H / nh;
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    c.x_in = x;
    c.ln1 = layer_norm(x, P(li.ln1_g), P(li.ln1_b), c.ln1_hat, c.ln1_rstd);
    c.qkv = c.ln1 * P(li.qkv_w);
    c.qkv.rowwise() += P(li.qkv_b).row(0);
    c.heads.resize(x.rows(), H);
    c.probs.assign(static_cast<std::size_t>(B) * nh, Mat());
    for (int b = 0; b < B; ++b) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(b) * Sq;
      for (int h = 0; h < nh; ++h) {
        const auto q = c.qkv.block(r0, h * dh, Sq, dh);
        const auto k = c.qkv.block(r0, H + h * dh, Sq, dh);
        const auto v = c.qkv.block(r0, 2 * H + h * dh, Sq, dh);
        Mat p = (q * k.transpose()) * scale;
        for (int i = 0; i < Sq; ++i) {
          const int visible = mask == MaskMode::kSar ? i + 1 : Sq;
          auto row = p.row(i).head(visible);
          const S m = row.maxCoeff();
          row = (row.array() - m).exp();
          row /= row.sum();
          if (visible < Sq) p.row(i).tail(Sq - visible).setZero();
        }
        c.heads.block(r0, h * dh, Sq, dh).noalias() = p * v;
        c.probs[static_cast<std::size_t>(b) * nh + h] = std::move(p);
      }
    }
    c.x_mid = x + c.heads * P(li.out_w);
    c.x_mid.rowwise() += P(li.out_b).row(0);
    c.ln2 = layer_norm(c.x_mid, P(li.ln2_g), P(li.ln2_b), c.ln2_hat, c.ln2_rstd);
    c.pre = c.ln2 * P(li.ff1_w);
    c.pre.rowwise() += P(li.ff1_b).row(0);
    c.act = c.pre.unaryExpr([](S v) { return gelu(v); });
    Mat out = c.x_mid + c.act * P(li.ff2_w);
    out.rowwise() += P(li.ff2_b).row(0);
    return out;
  }

  Mat layer_backward(int l, const LayerCache& c, const Mat& dout, int B, MaskMode mask,
                     Weights<S>& grad) const {
    (void)mask;  // masked probabilities are exactly zero and carry no gradient
    const LayerIds& li = ids_.layers[l];
    const int H = cfg_.hidden, Sq = cfg_.L + 1, nh = cfg_.heads, dh = H / nh;
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));

    G(grad, li.ff2_w).noalias() += c.act.transpose() * dout;
    G(grad, li.ff2_b) += dout.colwise().sum();
    Mat dpre = dout * P(li.ff2_w).transpose();
    dpre = dpre.cwiseProduct(c.pre.unaryExpr([](S v) { return gelu_grad(v); }));
    G(grad, li.ff1_w).noalias() += c.ln2.transpose() * dpre;
    G(grad, li.ff1_b) += dpre.colwise().sum();
    const Mat dln2 = dpre * P(li.ff1_w).transpose();
    Mat dmid = dout + layer_norm_backward(dln2, c.ln2_hat, c.ln2_rstd, P(li.ln2_g), G(grad, li.ln2_g),
                                          G(grad, li.ln2_b));

    G(grad, li.out_w).noalias() += c.heads.transpose() * dmid;
    G(grad, li.out_b) += dmid.colwise().sum();
    const Mat dheads = dmid * P(li.out_w).transpose();
    Mat dqkv(c.qkv.rows(), 3 * H);
    for (int b = 0; b < B; ++b) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(b) * Sq;
      for (int h = 0; h < nh; ++h) {
        const Mat& p = c.probs[static_cast<std::size_t>(b) * nh + h];
        const auto q = c.qkv.block(r0, h * dh, Sq, dh);
        const auto k = c.qkv.block(r0, H + h * dh, Sq, dh);
        const auto v = c.qkv.block(r0, 2 * H + h * dh, Sq, dh);
        const auto dh_out = dheads.block(r0, h * dh, Sq, dh);
        const Mat dp = dh_out * v.transpose();
        dqkv.block(r0, 2 * H + h * dh, Sq, dh).noalias() = p.transpose() * dh_out;
        Mat ds(Sq, Sq);
        for (int i = 0; i < Sq; ++i) {
          const S dot = p.row(i).dot(dp.row(i));
          ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
        }
        ds *= scale;
        dqkv.block(r0, h * dh, Sq, dh).noalias() = ds * k;
        dqkv.block(r0, H + h * dh, Sq, dh).noalias() = ds.transpose() * q;
      }
    }
    G(grad, li.qkv_w).noalias() += c.ln1.transpose() * dqkv;
    G(grad, li.qkv_b) += dqkv.colwise().sum();
    const Mat dln1 = dqkv * P(li.qkv_w).transpose();
    return dmid + layer_norm_backward(dln1, c.ln1_hat, c.ln1_rstd, P(li.ln1_g), G(grad, li.ln1_g),
                                      G(grad, li.ln1_b));
  }

  ModelConfig cfg_;
  std::vector<Tensor> tensors_;
  std::size_t size_ = 0;
  Ids ids_{};
  Weights<S> w_;
};

}  // namespace bfn::model
