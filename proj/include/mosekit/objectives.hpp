#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "mosekit/model.hpp"

namespace mosekit::obj {

template <typename T>
using Mat = model::Mat<T>;
template <typename T>
using Vec = model::Vec<T>;

// Per-exit scalars, the alpha weights (alpha_i = i / depth) and the combined
// weighted sum.
template <typename T>
struct ExitLossBreakdown {
  std::map<int, T> per_exit;
  std::map<int, T> alpha;
  T combined = T(0);
};

// Mean cross-entropy over target rows. logits: n_targets x V, targets: n ids.
// Zero targets yields 0 with zero_flag set.
template <typename T>
T mlm_loss(const Mat<T>& logits, const std::vector<int>& targets, bool* zero_flag = nullptr) {
  if (zero_flag) *zero_flag = targets.empty();
  if (targets.empty()) return T(0);
  if (logits.rows() != static_cast<long>(targets.size()))
    throw std::invalid_argument("mlm_loss: row/target count mismatch");
  T total = T(0);
  for (long r = 0; r < logits.rows(); ++r) {
    const T mx = logits.row(r).maxCoeff();
    const T lse = std::log((logits.row(r).array() - mx).exp().sum()) + mx;
    total += lse - logits(r, targets[r]);
  }
  return total / static_cast<T>(targets.size());
}

// Binary cross-entropy on one same-repo logit; label is 0 or 1.
template <typename T>
T icc_loss(T logit, int label) {
  // log(1+exp(-z*y)) in a numerically stable form
  const T z = label ? logit : -logit;
  return z > T(0) ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

template <typename T>
T pretrain_loss_per_exit(T mlm, T icc) {
  return mlm + icc;
}

// L = sum over the exit set of alpha_i * L_i with alpha_i = i / depth.
template <typename T>
ExitLossBreakdown<T> multilayer_combine(const std::map<int, T>& losses, int depth) {
  if (depth < 1) throw std::invalid_argument("multilayer_combine: depth must be >= 1");
  ExitLossBreakdown<T> out;
  for (const auto& [exit, loss] : losses) {
    if (exit < 1 || exit > depth)
      throw std::invalid_argument("multilayer_combine: exit outside [1, depth]");
    const T a = static_cast<T>(exit) / static_cast<T>(depth);
    out.per_exit[exit] = loss;
    out.alpha[exit] = a;
    out.combined += a * loss;
  }
  return out;
}

// Variant that insists on one loss per exit of the configured exit set.
template <typename T>
ExitLossBreakdown<T> multilayer_combine(const std::map<int, T>& losses, const EncoderConfig& cfg) {
  for (int e : cfg.exit_set)
    if (!losses.count(e))
      throw std::invalid_argument("multilayer_combine: missing exit " + std::to_string(e));
  if (losses.size() != cfg.exit_set.size())
    throw std::invalid_argument("multilayer_combine: loss for a layer outside the exit set");
  return multilayer_combine(losses, cfg.depth);
}

// CLIP-style symmetric cross-entropy over temperature * (A B^T) against the
// diagonal matching. Rows must be unit-norm embeddings. Optional gradients
// w.r.t. the embeddings.
template <typename T>
T clip_contrastive(const Mat<T>& emb_a, const Mat<T>& emb_b, T temperature,
                   Mat<T>* d_a = nullptr, Mat<T>* d_b = nullptr) {
  const long n = emb_a.rows();
  if (n != emb_b.rows() || emb_a.cols() != emb_b.cols())
    throw std::invalid_argument("clip_contrastive: batch shapes differ");
  if (n < 2) throw std::invalid_argument("clip_contrastive: need a batch of at least 2");

  Mat<T> logits = temperature * (emb_a * emb_b.transpose());
  Mat<T> p_row(n, n), p_col(n, n);
  T loss = T(0);
  for (long i = 0; i < n; ++i) {
    const T mx = logits.row(i).maxCoeff();
    Eigen::Array<T, 1, Eigen::Dynamic> e = (logits.row(i).array() - mx).exp();
    p_row.row(i) = (e / e.sum()).matrix();
    loss += std::log(e.sum()) + mx - logits(i, i);
  }
  for (long j = 0; j < n; ++j) {
    const T mx = logits.col(j).maxCoeff();
    Eigen::Array<T, Eigen::Dynamic, 1> e = (logits.col(j).array() - mx).exp();
    p_col.col(j) = (e / e.sum()).matrix();
    loss += std::log(e.sum()) + mx - logits(j, j);
  }
  loss /= static_cast<T>(2 * n);

  if (d_a || d_b) {
    Mat<T> d_logits = (p_row + p_col - Mat<T>::Identity(n, n) * T(2)) /
                      static_cast<T>(2 * n);
    if (d_a) *d_a = temperature * (d_logits * emb_b);
    if (d_b) *d_b = temperature * (d_logits.transpose() * emb_a);
  }
  return loss;
}

// Per-exit contrastive losses combined with the multilayer weights.
template <typename T>
ExitLossBreakdown<T> finetune_loss(const std::map<int, Mat<T>>& emb_a,
                                   const std::map<int, Mat<T>>& emb_b, T temperature, int depth) {
  std::map<int, T> losses;
  for (const auto& [exit, a] : emb_a) {
    auto it = emb_b.find(exit);
    if (it == emb_b.end()) throw std::invalid_argument("finetune_loss: exit missing on one side");
    losses[exit] = clip_contrastive<T>(a, it->second, temperature);
  }
  return multilayer_combine(losses, depth);
}

// Per-exit binary cross-entropy over CLS logits, multilayer-combined.
template <typename T>
ExitLossBreakdown<T> clone_loss(const std::map<int, Vec<T>>& logits_per_exit,
                                const std::vector<int>& labels, int depth) {
  std::map<int, T> losses;
  for (const auto& [exit, logits] : logits_per_exit) {
    if (logits.size() != static_cast<long>(labels.size()))
      throw std::invalid_argument("clone_loss: logit/label count mismatch");
    T total = T(0);
    for (long i = 0; i < logits.size(); ++i) total += icc_loss(logits(i), labels[i]);
    losses[exit] = total / static_cast<T>(labels.size());
  }
  return multilayer_combine(losses, depth);
}

}  // namespace mosekit::obj
