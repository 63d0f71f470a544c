#pragma once

#include <cmath>
#include <vector>

namespace bfn::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled
};

/// Adam with decoupled weight decay. Moments are kept in double.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  template <class W, class G>
  void step(W& w, const G& g, double lr) {
    using S = typename W::value_type;
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * gk;
      v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * gk * gk;
      double wk = static_cast<double>(w[k]);
      if (cfg_.weight_decay != 0.0) wk -= lr * cfg_.weight_decay * wk;
      if (m_[k] != 0.0) wk -= lr * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + cfg_.eps);
      w[k] = static_cast<S>(wk);
    }
  }

  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }
  std::vector<double>& first() { return m_; }
  std::vector<double>& second() { return v_; }
  const std::vector<double>& first() const { return m_; }
  const std::vector<double>& second() const { return v_; }

 private:
  AdamConfig cfg_{};
  std::vector<double> m_, v_;
  long t_ = 0;
};

/// Scales g in place so its global L2 norm is at most max_norm; returns the
/// norm before clipping.
template <class V>
double clip_grad_norm(V& g, double max_norm) {
  using S = typename V::value_type;
  double sq = 0.0;
  for (S v : g) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (S& v : g) v = static_cast<S>(static_cast<double>(v) * s);
  }
  return norm;
}

}  // namespace bfn::train
