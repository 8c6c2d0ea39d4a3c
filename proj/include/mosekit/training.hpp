#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mosekit/model.hpp"
#include "mosekit/objectives.hpp"
#include "mosekit/packing.hpp"
#include "mosekit/tokenizer.hpp"
#include "mosekit/types.hpp"

namespace mosekit::train {

using model::Batch;
using model::Mat;
using model::ParamSet;
using model::Vec;

// Linear warmup to base_lr, then piecewise-constant milestone factors
// (the latest milestone at or before `step` applies).
inline double lr_at(long long step, const OptimizerConfig& opt) {
  double lr = opt.base_lr;
  if (opt.warmup_steps > 0 && step < opt.warmup_steps)
    return opt.base_lr * static_cast<double>(step) / static_cast<double>(opt.warmup_steps);
  for (const auto& [ms, factor] : opt.decay_milestones)
    if (step >= ms) lr = opt.base_lr * factor;
  return lr;
}

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;  // aligned with ParamSet::for_each order
  long long t = 0;
};

// Decoupled weight decay, bias-corrected moments. Throws on non-finite
// gradients.
template <typename T>
void adamw_step(ParamSet<T>& params, ParamSet<T>& grads, AdamState<T>& st,
                const OptimizerConfig& opt, double lr) {
  std::vector<std::pair<T*, long>> gviews;
  std::vector<std::string> names;
  grads.for_each([&](const std::string& n, T* d, long sz) {
    gviews.emplace_back(d, sz);
    names.push_back(n);
  });
  if (st.m.empty()) {
    for (auto& [d, sz] : gviews) {
      (void)d;
      st.m.emplace_back(sz, T(0));
      st.v.emplace_back(sz, T(0));
    }
  }
  ++st.t;
  const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
  const T bc1 = T(1) - std::pow(b1, static_cast<T>(st.t));
  const T bc2 = T(1) - std::pow(b2, static_cast<T>(st.t));
  const T eps = static_cast<T>(opt.eps);
  const T wd = static_cast<T>(opt.weight_decay);

  size_t ti = 0;
  params.for_each([&](const std::string&, T* pd, long sz) {
    T* g = gviews[ti].first;
    auto& m = st.m[ti];
    auto& v = st.v[ti];
    for (long i = 0; i < sz; ++i) {
      if (!std::isfinite(g[i]))
        throw std::runtime_error("adamw_step: non-finite gradient in tensor " + names[ti]);
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      pd[i] -= static_cast<T>(lr) * (mhat / (std::sqrt(vhat) + eps) + wd * pd[i]);
    }
    ++ti;
  });
}

// Global-norm gradient clipping; returns the pre-clip norm.
template <typename T>
double clip_gradients(ParamSet<T>& grads, double max_norm) {
  double sq = 0;
  grads.for_each([&](const std::string&, T* d, long sz) {
    for (long i = 0; i < sz; ++i) sq += static_cast<double>(d[i]) * d[i];
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    grads.for_each([&](const std::string&, T* d, long sz) {
      for (long i = 0; i < sz; ++i) d[i] *= s;
    });
  }
  return norm;
}

namespace detail {

// Exits participating in a run: the full exit set with alpha = i/depth, or
// one bare exit for single-exit ablations.
template <typename T>
std::map<int, T> exit_weights(const EncoderConfig& cfg, int single_exit) {
  std::map<int, T> w;
  if (single_exit >= 0) {
    w[single_exit] = T(1);
  } else {
    for (int e : cfg.exit_set) w[e] = static_cast<T>(e) / static_cast<T>(cfg.depth);
  }
  return w;
}

template <typename T>
int top_exit(const std::map<int, T>& weights) {
  return weights.rbegin()->first;
}

}  // namespace detail

// Combined pre-training loss (MLM + binary context classification per exit,
// alpha-weighted) with optional analytic gradients. The binary label comes
// from icc_label or, for the NSP comparator, nsp_label.
template <typename T>
obj::ExitLossBreakdown<T> pretrain_loss(const ParamSet<T>& p,
                                        const std::vector<pack::PackedExample>& exs,
                                        int single_exit = -1, ParamSet<T>* grads = nullptr) {
  const EncoderConfig& cfg = p.cfg;
  const Batch batch = Batch::from_examples(exs);
  const int B = batch.b, S = batch.s, H = cfg.hidden;

  std::vector<int> labels(B);
  for (int b = 0; b < B; ++b) {
    const auto& ex = exs[b];
    if (ex.icc_label != pack::IccLabel::none)
      labels[b] = ex.icc_label == pack::IccLabel::same_repo ? 1 : 0;
    else if (ex.nsp_label >= 0)
      labels[b] = ex.nsp_label;
    else
      throw std::invalid_argument("pretrain_loss: example carries no context label");
  }

  // target rows, flattened over the batch
  std::vector<int> trows, tids;
  for (int b = 0; b < B; ++b)
    for (auto [pos, orig] : exs[b].mlm_targets) {
      trows.push_back(b * S + pos);
      tids.push_back(orig);
    }

  const auto weights = detail::exit_weights<T>(cfg, single_exit);
  model::ForwardCache<T> cache;
  const auto states = model::forward(p, batch, detail::top_exit(weights), grads ? &cache : nullptr);

  std::map<int, Mat<T>> d_exit_normed;
  std::map<int, T> losses;
  for (const auto& [exit, alpha] : weights) {
    const int ei = p.exit_index(exit);
    const Mat<T>& normed = states.hidden.at(exit);
    const Mat<T>& pooled = states.pooled.at(exit);

    // MLM over target rows only
    const long nt = static_cast<long>(trows.size());
    Mat<T> rows(nt, H);
    for (long i = 0; i < nt; ++i)
      rows.row(i) = normed.row(trows[i]) + p.layer_embed.row(ei);
    Mat<T> logits = (rows * p.mlm_w).rowwise() + p.mlm_b.transpose();
    const T mlm = obj::mlm_loss(logits, tids);

    // Context classification at CLS
    Mat<T> cls = pooled.rowwise() + p.layer_embed.row(ei);
    Vec<T> z = ((cls * p.icc_w).array() + p.icc_b(0)).matrix();
    T icc = T(0);
    for (int b = 0; b < B; ++b) icc += obj::icc_loss(z(b), labels[b]);
    icc /= static_cast<T>(B);

    losses[exit] = obj::pretrain_loss_per_exit(mlm, icc);

    if (grads) {
      Mat<T> dn = Mat<T>::Zero(B * S, H);
      if (nt > 0) {
        Mat<T> dlogits(nt, cfg.vocab_size);
        for (long i = 0; i < nt; ++i) {
          const T mx = logits.row(i).maxCoeff();
          Eigen::Array<T, 1, Eigen::Dynamic> e = (logits.row(i).array() - mx).exp();
          dlogits.row(i) = (e / e.sum()).matrix();
          dlogits(i, tids[i]) -= T(1);
        }
        dlogits *= alpha / static_cast<T>(nt);
        grads->mlm_w += rows.transpose() * dlogits;
        grads->mlm_b += dlogits.colwise().sum().transpose();
        Mat<T> drows = dlogits * p.mlm_w.transpose();
        for (long i = 0; i < nt; ++i) dn.row(trows[i]) += drows.row(i);
        grads->layer_embed.row(ei) += drows.colwise().sum();
      }
      for (int b = 0; b < B; ++b) {
        const T sig = T(1) / (T(1) + std::exp(-z(b)));
        const T dz = (sig - static_cast<T>(labels[b])) * alpha / static_cast<T>(B);
        grads->icc_w += dz * cls.row(b).transpose();
        grads->icc_b(0) += dz;
        dn.row(b * S + batch.cls_pos[b]) += dz * p.icc_w.transpose();
        grads->layer_embed.row(ei) += dz * p.icc_w.transpose();
      }
      d_exit_normed[exit] = std::move(dn);
    }
  }

  if (grads) model::backward(p, cache, d_exit_normed, *grads);

  if (single_exit >= 0) {
    obj::ExitLossBreakdown<T> out;
    out.per_exit = losses;
    out.alpha[single_exit] = T(1);
    out.combined = losses.at(single_exit);
    return out;
  }
  return obj::multilayer_combine(losses, cfg.depth);
}

// Per-exit CLIP loss over two towers of packed inputs, multilayer-combined.
template <typename T>
obj::ExitLossBreakdown<T> retrieval_loss(const ParamSet<T>& p,
                                         const std::vector<pack::PackedExample>& queries,
                                         const std::vector<pack::PackedExample>& targets,
                                         T temperature, int single_exit = -1,
                                         ParamSet<T>* grads = nullptr) {
  if (queries.size() != targets.size())
    throw std::invalid_argument("retrieval_loss: tower sizes differ");
  if (queries.size() < 2) throw std::invalid_argument("retrieval_loss: batch of at least 2 needed");
  const EncoderConfig& cfg = p.cfg;
  const Batch ba = Batch::from_examples(queries);
  const Batch bb = Batch::from_examples(targets);
  const int B = ba.b;

  const auto weights = detail::exit_weights<T>(cfg, single_exit);
  const int top = detail::top_exit(weights);
  model::ForwardCache<T> ca, cb;
  const auto sa = model::forward(p, ba, top, grads ? &ca : nullptr);
  const auto sb = model::forward(p, bb, top, grads ? &cb : nullptr);

  std::map<int, Mat<T>> dna, dnb;
  std::map<int, T> losses;
  for (const auto& [exit, alpha] : weights) {
    const int ei = p.exit_index(exit);
    const Mat<T>&pa = sa.pooled.at(exit), &pb = sb.pooled.at(exit);
    Mat<T> za = (pa * p.proj_w[ei]).rowwise() + p.proj_b[ei].transpose();
    Mat<T> zb = (pb * p.proj_w[ei]).rowwise() + p.proj_b[ei].transpose();
    Vec<T> na(B), nb(B);
    Mat<T> ea = za, eb = zb;
    for (int r = 0; r < B; ++r) {
      na(r) = za.row(r).norm();
      nb(r) = zb.row(r).norm();
      if (na(r) <= T(0) || nb(r) <= T(0))
        throw std::runtime_error("retrieval_loss: zero-norm embedding");
      ea.row(r) /= na(r);
      eb.row(r) /= nb(r);
    }
    Mat<T> dea, deb;
    losses[exit] = obj::clip_contrastive<T>(ea, eb, temperature, grads ? &dea : nullptr,
                                            grads ? &deb : nullptr);
    if (grads) {
      auto backprop_norm = [](const Mat<T>& e, const Vec<T>& n, const Mat<T>& de) {
        Mat<T> dz = de;
        for (int r = 0; r < e.rows(); ++r) {
          const T dot = e.row(r).dot(de.row(r));
          dz.row(r) = (de.row(r) - e.row(r) * dot) / n(r);
        }
        return dz;
      };
      Mat<T> dza = backprop_norm(ea, na, dea) * alpha;
      Mat<T> dzb = backprop_norm(eb, nb, deb) * alpha;
      grads->proj_w[ei] += pa.transpose() * dza + pb.transpose() * dzb;
      grads->proj_b[ei] += (dza.colwise().sum() + dzb.colwise().sum()).transpose();
      Mat<T> dpa = dza * p.proj_w[ei].transpose();
      Mat<T> dpb = dzb * p.proj_w[ei].transpose();
      auto scatter = [&](std::map<int, Mat<T>>& dn, const Batch& batch, const Mat<T>& dp) {
        auto [it, fresh] = dn.try_emplace(exit, Mat<T>::Zero(batch.b * batch.s, cfg.hidden));
        (void)fresh;
        for (int b = 0; b < batch.b; ++b)
          it->second.row(b * batch.s + batch.cls_pos[b]) += dp.row(b);
      };
      scatter(dna, ba, dpa);
      scatter(dnb, bb, dpb);
    }
  }

  if (grads) {
    model::backward(p, ca, dna, *grads);
    model::backward(p, cb, dnb, *grads);
  }

  if (single_exit >= 0) {
    obj::ExitLossBreakdown<T> out;
    out.per_exit = losses;
    out.alpha[single_exit] = T(1);
    out.combined = losses.at(single_exit);
    return out;
  }
  return obj::multilayer_combine(losses, cfg.depth);
}

// Per-exit binary classification loss over packed pairs.
template <typename T>
obj::ExitLossBreakdown<T> clone_pair_loss(const ParamSet<T>& p,
                                          const std::vector<pack::PackedExample>& exs,
                                          const std::vector<int>& labels, int single_exit = -1,
                                          ParamSet<T>* grads = nullptr) {
  const EncoderConfig& cfg = p.cfg;
  const Batch batch = Batch::from_examples(exs);
  const int B = batch.b;
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument("clone_pair_loss: labels must be 0 or 1");
  if (static_cast<int>(labels.size()) != B)
    throw std::invalid_argument("clone_pair_loss: label count mismatch");

  const auto weights = detail::exit_weights<T>(cfg, single_exit);
  model::ForwardCache<T> cache;
  const auto states = model::forward(p, batch, detail::top_exit(weights), grads ? &cache : nullptr);

  std::map<int, Mat<T>> d_exit_normed;
  std::map<int, T> losses;
  for (const auto& [exit, alpha] : weights) {
    const int ei = p.exit_index(exit);
    const Mat<T>& pooled = states.pooled.at(exit);
    Vec<T> z = ((pooled * p.clone_w[ei]).array() + p.clone_b[ei](0)).matrix();
    T total = T(0);
    for (int b = 0; b < B; ++b) total += obj::icc_loss(z(b), labels[b]);
    losses[exit] = total / static_cast<T>(B);
    if (grads) {
      Mat<T> dn = Mat<T>::Zero(batch.b * batch.s, cfg.hidden);
      for (int b = 0; b < B; ++b) {
        const T sig = T(1) / (T(1) + std::exp(-z(b)));
        const T dz = (sig - static_cast<T>(labels[b])) * alpha / static_cast<T>(B);
        grads->clone_w[ei] += dz * pooled.row(b).transpose();
        grads->clone_b[ei](0) += dz;
        dn.row(b * batch.s + batch.cls_pos[b]) += dz * p.clone_w[ei].transpose();
      }
      d_exit_normed[exit] = std::move(dn);
    }
  }
  if (grads) model::backward(p, cache, d_exit_normed, *grads);

  if (single_exit >= 0) {
    obj::ExitLossBreakdown<T> out;
    out.per_exit = losses;
    out.alpha[single_exit] = T(1);
    out.combined = losses.at(single_exit);
    return out;
  }
  return obj::multilayer_combine(losses, cfg.depth);
}

// Frequently occurring words (count > 2, length >= 3) are consistently
// replaced with fresh random strings; everything else is untouched.
std::string augment_code(const std::string& code, Rng& rng);

// Instruction prefixes for the two retrieval task kinds.
inline const std::string kT2cPrefix = "retrieve code for this description : ";
inline const std::string kC2cPrefix = "find equivalent code : ";

struct StepLog {
  long long step = 0;
  std::map<int, double> per_exit;
  std::map<int, double> alpha;
  double combined = 0;
  double lr = 0;
};

template <typename T>
struct TrainResult {
  ParamSet<T> params;
  std::vector<StepLog> log;
};

// Invoked every step; returning false stops training early.
template <typename T>
using StepCallback = std::function<bool(const StepLog&, const ParamSet<T>&)>;

template <typename T>
StepLog make_log(long long step, const obj::ExitLossBreakdown<T>& bd, double lr) {
  StepLog log;
  log.step = step;
  for (const auto& [e, l] : bd.per_exit) log.per_exit[e] = static_cast<double>(l);
  for (const auto& [e, a] : bd.alpha) log.alpha[e] = static_cast<double>(a);
  log.combined = static_cast<double>(bd.combined);
  log.lr = lr;
  return log;
}

// Pre-training loop: pack -> mask -> forward -> per-exit losses -> combine ->
// clipped AdamW. Deterministic in plan.seed.
template <typename T>
TrainResult<T> pretrain(const ParamSet<T>& start, const std::vector<Snippet>& corpus,
                        const tok::Vocab& vocab, const TrainPlan& plan, const OptimizerConfig& opt,
                        const StepCallback<T>& callback = nullptr) {
  plan.validate(start.cfg);
  opt.validate();
  const auto pool = pack::PackPool::build(corpus, vocab);

  TrainResult<T> out{start, {}};
  AdamState<T> state;
  Rng rng(plan.seed);
  for (long long step = 0; step < plan.steps; ++step) {
    std::vector<pack::PackedExample> exs;
    for (int i = 0; i < plan.batch_size; ++i) {
      auto ex = plan.use_nsp ? pack::pack_nsp(pool, plan.max_len, plan.p_cross, rng)
                             : pack::pack_icc(pool, plan.max_len, plan.p_cross, rng);
      pack::apply_mlm_mask(ex, plan.mlm_rate, rng, vocab.size());
      exs.push_back(std::move(ex));
    }
    ParamSet<T> grads = ParamSet<T>::zeros(start.cfg);
    const auto bd = pretrain_loss(out.params, exs, plan.single_exit, &grads);
    if (!std::isfinite(static_cast<double>(bd.combined)))
      throw std::runtime_error("pretrain: non-finite loss at step " + std::to_string(step));
    clip_gradients(grads, opt.clip_norm);
    const double lr = lr_at(step, opt);
    adamw_step(out.params, grads, state, opt, lr);
    out.log.push_back(make_log(step, bd, lr));
    if (callback && !callback(out.log.back(), out.params)) break;
  }
  return out;
}

// Per-example batch composition: task kind is text-to-code or code-to-code
// with equal probability, and the example is augmented with probability
// aug_rate. Split out so the composition statistics are testable.
struct RetrievalDraw {
  size_t triplet = 0;
  bool t2c = false;
  bool augment = false;
};

inline std::vector<RetrievalDraw> draw_retrieval_batch(size_t n_triplets, int batch_size,
                                                       double aug_rate, Rng& rng) {
  if (n_triplets == 0) throw std::invalid_argument("draw_retrieval_batch: no triplets");
  std::vector<RetrievalDraw> out;
  out.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i)
    out.push_back({rng.below(n_triplets), rng.bernoulli(0.5), rng.bernoulli(aug_rate)});
  return out;
}

// Retrieval fine-tuning: per example the task kind is text-to-code or
// code-to-code with equal probability; code sides are augmented in 30% of
// cases; NL is never augmented. Constant learning rate.
template <typename T>
TrainResult<T> finetune_retrieval(const ParamSet<T>& start, const std::vector<Triplet>& triplets,
                                  const tok::Vocab& vocab, const TrainPlan& plan,
                                  const OptimizerConfig& opt,
                                  const StepCallback<T>& callback = nullptr) {
  plan.validate(start.cfg);
  opt.validate();
  if (triplets.empty()) throw std::invalid_argument("finetune_retrieval: no triplets");
  if (plan.batch_size < 2) throw std::invalid_argument("finetune_retrieval: batch size below 2");

  TrainResult<T> out{start, {}};
  AdamState<T> state;
  Rng rng(plan.seed);
  for (long long step = 0; step < plan.steps; ++step) {
    std::vector<pack::PackedExample> qa, qb;
    const auto draws =
        draw_retrieval_batch(triplets.size(), plan.batch_size, plan.augmentation_rate, rng);
    for (const auto& [ti, t2c, augment] : draws) {
      const auto& t = triplets[ti];
      std::string query, target;
      if (t2c) {
        query = kT2cPrefix + t.nl;
        target = augment ? augment_code(t.code_a.text, rng) : t.code_a.text;
      } else {
        // both sides augmented independently
        query = kC2cPrefix + (augment ? augment_code(t.code_a.text, rng) : t.code_a.text);
        target = augment ? augment_code(t.code_b.text, rng) : t.code_b.text;
      }
      qa.push_back(pack::pack_single(tok::encode(vocab, query), plan.max_len));
      qb.push_back(pack::pack_single(tok::encode(vocab, target), plan.max_len));
    }
    ParamSet<T> grads = ParamSet<T>::zeros(start.cfg);
    const auto bd = retrieval_loss(out.params, qa, qb, static_cast<T>(plan.temperature),
                                   plan.single_exit, &grads);
    if (!std::isfinite(static_cast<double>(bd.combined)))
      throw std::runtime_error("finetune_retrieval: non-finite loss at step " +
                               std::to_string(step));
    clip_gradients(grads, opt.clip_norm);
    adamw_step(out.params, grads, state, opt, opt.base_lr);
    out.log.push_back(make_log(step, bd, opt.base_lr));
    if (callback && !callback(out.log.back(), out.params)) break;
  }
  return out;
}

struct ClonePair {
  std::string text_a, text_b;
  int label = -1;  // 1 clone, 0 not
};

template <typename T>
TrainResult<T> finetune_clone(const ParamSet<T>& start, const std::vector<ClonePair>& pairs,
                              const tok::Vocab& vocab, const TrainPlan& plan,
                              const OptimizerConfig& opt,
                              const StepCallback<T>& callback = nullptr) {
  plan.validate(start.cfg);
  opt.validate();
  if (pairs.empty()) throw std::invalid_argument("finetune_clone: no pairs");
  for (const auto& pr : pairs)
    if (pr.label != 0 && pr.label != 1)
      throw std::invalid_argument("finetune_clone: pair without a 0/1 label");

  TrainResult<T> out{start, {}};
  AdamState<T> state;
  Rng rng(plan.seed);
  for (long long step = 0; step < plan.steps; ++step) {
    std::vector<pack::PackedExample> exs;
    std::vector<int> labels;
    for (int i = 0; i < plan.batch_size; ++i) {
      const auto& pr = pairs[rng.below(pairs.size())];
      exs.push_back(pack::pack_pair(tok::encode(vocab, pr.text_a), tok::encode(vocab, pr.text_b),
                                    plan.max_len));
      labels.push_back(pr.label);
    }
    ParamSet<T> grads = ParamSet<T>::zeros(start.cfg);
    const auto bd = clone_pair_loss(out.params, exs, labels, plan.single_exit, &grads);
    if (!std::isfinite(static_cast<double>(bd.combined)))
      throw std::runtime_error("finetune_clone: non-finite loss at step " + std::to_string(step));
    clip_gradients(grads, opt.clip_norm);
    const double lr = lr_at(step, opt);
    adamw_step(out.params, grads, state, opt, lr);
    out.log.push_back(make_log(step, bd, lr));
    if (callback && !callback(out.log.back(), out.params)) break;
  }
  return out;
}

}  // namespace mosekit::train
