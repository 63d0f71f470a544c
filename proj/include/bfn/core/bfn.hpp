#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bfn/core/random.hpp"

namespace bfn::core {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

struct ScheduleConfig {
  double beta1 = 1.0;
  int steps = 100;

  void validate() const {
    if (!(beta1 > 0.0) || !std::isfinite(beta1)) throw std::invalid_argument("beta1 must be positive");
    if (steps < 1) throw std::invalid_argument("step count must be at least 1");
  }
};

/// beta(t) = beta1 * t^2.
inline double accuracy_schedule(double t, double beta1 = 1.0) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("time outside [0,1]: " + std::to_string(t));
  return beta1 * t * t;
}

inline double accuracy_schedule(double t, const ScheduleConfig& cfg) {
  return accuracy_schedule(t, cfg.beta1);
}

/// Row-wise softmax, max-shifted.
template <class S>
Mat<S> softmax_rows(const Mat<S>& z) {
  Mat<S> out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const S m = z.row(r).maxCoeff();
    out.row(r) = (z.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Row argmax; ties go to the lowest column.
template <class S>
std::vector<int> argmax_rows(const Mat<S>& m) {
  std::vector<int> out(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c) {
      if (m(r, c) > m(r, best)) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

template <class S>
Mat<S> one_hot(const std::vector<int>& ids, int K) {
  Mat<S> e = Mat<S>::Zero(static_cast<Eigen::Index>(ids.size()), K);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= K) throw std::out_of_range("token id outside [0, K)");
    e(static_cast<Eigen::Index>(i), ids[i]) = S(1);
  }
  return e;
}

/// Sender sample y ~ N(beta (K e_x - 1), beta K) for every position.
template <class S>
Mat<S> noise_latent(const std::vector<int>& x, int K, double t, double beta1, Rng& rng) {
  const double beta = accuracy_schedule(t, beta1);
  const double sd = std::sqrt(beta * K);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat<S> y(static_cast<Eigen::Index>(x.size()), K);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    for (int k = 0; k < K; ++k) {
      const double mean = beta * (K * (x[i] == k ? 1.0 : 0.0) - 1.0);
      y(i, k) = static_cast<S>(mean + sd * normal(rng));
    }
  }
  return y;
}

/// Training-time flow sample: theta = softmax(y). At t = 0 theta is uniform.
template <class S>
Mat<S> noise_parameters(const std::vector<int>& x, int K, double t, double beta1, Rng& rng) {
  return softmax_rows<S>(noise_latent<S>(x, K, t, beta1, rng));
}

/// theta' proportional to theta * exp(y), row by row.
template <class S>
Mat<S> bayesian_update(const Mat<S>& theta, const Mat<S>& y) {
  if (theta.rows() != y.rows() || theta.cols() != y.cols()) {
    throw std::invalid_argument("bayesian_update: shape mismatch");
  }
  Mat<S> out(theta.rows(), theta.cols());
  for (Eigen::Index r = 0; r < theta.rows(); ++r) {
    const S m = y.row(r).maxCoeff();
    out.row(r) = theta.row(r).array() * (y.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <class S>
struct LossResult {
  S value = S(0);
  Mat<S> grad;  // d value / d e_hat
};

/// K beta1 t |e_x - e_hat|^2 averaged over positions whose target is not pad.
template <class S>
LossResult<S> continuous_loss(const Mat<S>& e_hat, const Mat<S>& e_x, double t, double beta1,
                              const std::vector<char>& keep) {
  if (e_hat.rows() != e_x.rows() || e_hat.cols() != e_x.cols() ||
      static_cast<Eigen::Index>(keep.size()) != e_hat.rows()) {
    throw std::invalid_argument("continuous_loss: shape mismatch");
  }
  LossResult<S> r;
  r.grad = Mat<S>::Zero(e_hat.rows(), e_hat.cols());
  const long n = std::count(keep.begin(), keep.end(), char{1});
  if (n == 0) return r;
  const S scale = static_cast<S>(e_hat.cols() * beta1 * t / static_cast<double>(n));
  S total = S(0);
  for (Eigen::Index i = 0; i < e_hat.rows(); ++i) {
    if (!keep[i]) continue;
    const auto diff = (e_x.row(i) - e_hat.row(i)).eval();
    total += diff.squaredNorm();
    r.grad.row(i) = S(-2) * scale * diff;
  }
  r.value = scale * total;
  return r;
}

template <class S>
LossResult<S> continuous_loss(const Mat<S>& e_hat, const Mat<S>& e_x, double t, double beta1) {
  return continuous_loss<S>(e_hat, e_x, t, beta1, std::vector<char>(e_hat.rows(), 1));
}

/// eta * mean over kept positions of max_k e_hat when the decode is invalid,
/// 0 otherwise. The validity flag is a constant reward: gradient reaches
/// only the argmax entries.
template <class S>
LossResult<S> rl_loss(const Mat<S>& e_hat, bool valid, double eta, const std::vector<char>& keep) {
  if (eta < 0.0) throw std::invalid_argument("eta must be non-negative");
  if (static_cast<Eigen::Index>(keep.size()) != e_hat.rows()) {
    throw std::invalid_argument("rl_loss: shape mismatch");
  }
  LossResult<S> r;
  r.grad = Mat<S>::Zero(e_hat.rows(), e_hat.cols());
  const long n = std::count(keep.begin(), keep.end(), char{1});
  if (valid || n == 0 || eta == 0.0) return r;
  const auto k = argmax_rows<S>(e_hat);
  const S scale = static_cast<S>(eta / static_cast<double>(n));
  S total = S(0);
  for (Eigen::Index i = 0; i < e_hat.rows(); ++i) {
    if (!keep[i]) continue;
    total += e_hat(i, k[i]);
    r.grad(i, k[i]) = scale;
  }
  r.value = scale * total;
  return r;
}

template <class S>
LossResult<S> rl_loss(const Mat<S>& e_hat, bool valid, double eta) {
  return rl_loss<S>(e_hat, valid, eta, std::vector<char>(e_hat.rows(), 1));
}

/// Guided logits (1 + w) z_cond - w z_uncond.
template <class S>
Mat<S> cfg_combine(const Mat<S>& z_cond, const Mat<S>& z_uncond, double w) {
  if (z_cond.rows() != z_uncond.rows() || z_cond.cols() != z_uncond.cols()) {
    throw std::invalid_argument("cfg_combine: shape mismatch");
  }
  if (!std::isfinite(w)) throw std::invalid_argument("guidance strength must be finite");
  return static_cast<S>(1.0 + w) * z_cond - static_cast<S>(w) * z_uncond;
}

/// Pulls a gradient with respect to softmax outputs back to the logits.
template <class S>
Mat<S> softmax_backward(const Mat<S>& probs, const Mat<S>& grad_probs) {
  Mat<S> out(probs.rows(), probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const S dot = probs.row(r).dot(grad_probs.row(r));
    out.row(r) = probs.row(r).array() * (grad_probs.row(r).array() - dot);
  }
  return out;
}

}  // namespace bfn::core
