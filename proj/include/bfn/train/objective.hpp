#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "bfn/core/bfn.hpp"
#include "bfn/model/transformer.hpp"
#include "bfn/token/vocab.hpp"

namespace bfn::train {

template <class S>
struct BatchInputs {
  core::Mat<S> theta;                   // (B*L) x K
  std::vector<S> t;                     // one time per element
  model::CondBatch<S> cond;
  model::MaskMode mask = model::MaskMode::kNormal;
  std::vector<std::vector<int>> target; // B sequences of length L
  std::vector<char> rl_checked;         // elements whose decode is checked
};

struct BatchLoss {
  double total = 0.0;
  double bfn = 0.0;
  double rl = 0.0;
  int rl_checked = 0;
  int rl_invalid = 0;
};

/// Validity of an element given its greedy (argmax) decode.
using ValidityFn = std::function<bool(const std::vector<int>& ids)>;

/// Continuous-time loss averaged over the batch plus the validity term
/// averaged over checked elements. With eta == 0 the validity path is
/// skipped entirely. When `grad` is given, d total / d weights is added.
template <class S>
BatchLoss batch_loss(const model::Transformer<S>& net, const BatchInputs<S>& in, double eta, double beta1,
                     const ValidityFn& validity, model::Weights<S>* grad) {
  const int L = net.config().L, K = net.config().K;
  const int B = static_cast<int>(in.target.size());
  if (B == 0 || in.theta.rows() != static_cast<Eigen::Index>(B) * L) {
    throw std::invalid_argument("batch_loss: batch shape mismatch");
  }
  typename model::Transformer<S>::Cache cache;
  const core::Mat<S> logits = net.forward(in.theta, in.t, in.cond, in.mask, grad ? &cache : nullptr);
  const core::Mat<S> probs = core::softmax_rows<S>(logits);
  core::Mat<S> dprobs = core::Mat<S>::Zero(probs.rows(), probs.cols());

  BatchLoss out;
  std::vector<int> checked;
  if (eta > 0.0) {
    for (int b = 0; b < B; ++b) {
      if (in.rl_checked.empty() || in.rl_checked[b]) checked.push_back(b);
    }
  }
  for (int b = 0; b < B; ++b) {
    const auto& x = in.target[b];
    if (static_cast<int>(x.size()) != L) throw std::invalid_argument("batch_loss: target length");
    std::vector<char> keep(L);
    for (int i = 0; i < L; ++i) keep[i] = x[i] != token::kPad;
    const core::Mat<S> e_hat = probs.block(static_cast<Eigen::Index>(b) * L, 0, L, K);
    const auto loss = core::continuous_loss<S>(e_hat, core::one_hot<S>(x, K), static_cast<double>(in.t[b]),
                                               beta1, keep);
    out.bfn += static_cast<double>(loss.value) / B;
    dprobs.block(static_cast<Eigen::Index>(b) * L, 0, L, K) += loss.grad / static_cast<S>(B);
  }
  for (int b : checked) {
    const core::Mat<S> e_hat = probs.block(static_cast<Eigen::Index>(b) * L, 0, L, K);
    const std::vector<char> keep = [&] {
      std::vector<char> k(L);
      for (int i = 0; i < L; ++i) k[i] = in.target[b][i] != token::kPad;
      return k;
    }();
    const bool valid = validity(core::argmax_rows<S>(e_hat));
    ++out.rl_checked;
    if (valid) continue;
    ++out.rl_invalid;
    const auto loss = core::rl_loss<S>(e_hat, false, eta, keep);
    const double n = static_cast<double>(checked.size());
    out.rl += static_cast<double>(loss.value) / n;
    dprobs.block(static_cast<Eigen::Index>(b) * L, 0, L, K) += loss.grad / static_cast<S>(n);
  }
  out.total = eta > 0.0 ? out.bfn + out.rl : out.bfn;
  if (grad) net.backward(cache, core::softmax_backward<S>(probs, dprobs), *grad);
  return out;
}

}  // namespace bfn::train
