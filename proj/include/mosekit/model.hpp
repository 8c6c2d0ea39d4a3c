#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mosekit/config.hpp"
#include "mosekit/packing.hpp"
#include "mosekit/rng.hpp"

namespace mosekit::model {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

inline constexpr double kLnEps = 1e-5;

template <typename T>
struct LayerParams {
  Vec<T> ln1_g, ln1_b, ln2_g, ln2_b;
  Mat<T> wq, wk, wv, wo, w1, w2;
  Vec<T> bq, bk, bv, bo, b1, b2;
};

// All learned parameters. Shapes are fully determined by the config.
template <typename T>
struct ParamSet {
  EncoderConfig cfg;
  Mat<T> tok_embed;  // V x H
  std::vector<LayerParams<T>> layers;
  Vec<T> lnf_g, lnf_b;        // shared pre-exit norm
  Mat<T> mlm_w;               // H x V, shared across exits
  Vec<T> mlm_b;               // V
  Vec<T> icc_w;               // H, shared across exits
  Vec<T> icc_b;               // 1
  Mat<T> layer_embed;         // n_exits x H, added before the shared heads
  std::vector<Mat<T>> proj_w;  // per exit, H x P
  std::vector<Vec<T>> proj_b;  // per exit, P
  std::vector<Vec<T>> clone_w;  // per exit, H
  std::vector<Vec<T>> clone_b;  // per exit, 1

  static ParamSet zeros(const EncoderConfig& cfg) {
    cfg.validate();
    ParamSet p;
    p.cfg = cfg;
    const int H = cfg.hidden, V = cfg.vocab_size, I = cfg.intermediate;
    const int Hkv = cfg.n_kv_heads * cfg.head_dim();
    p.tok_embed = Mat<T>::Zero(V, H);
    p.layers.resize(cfg.depth);
    for (auto& l : p.layers) {
      l.ln1_g = Vec<T>::Zero(H); l.ln1_b = Vec<T>::Zero(H);
      l.ln2_g = Vec<T>::Zero(H); l.ln2_b = Vec<T>::Zero(H);
      l.wq = Mat<T>::Zero(H, H); l.bq = Vec<T>::Zero(H);
      l.wk = Mat<T>::Zero(H, Hkv); l.bk = Vec<T>::Zero(Hkv);
      l.wv = Mat<T>::Zero(H, Hkv); l.bv = Vec<T>::Zero(Hkv);
      l.wo = Mat<T>::Zero(H, H); l.bo = Vec<T>::Zero(H);
      l.w1 = Mat<T>::Zero(H, I); l.b1 = Vec<T>::Zero(I);
      l.w2 = Mat<T>::Zero(I, H); l.b2 = Vec<T>::Zero(H);
    }
    p.lnf_g = Vec<T>::Zero(H);
    p.lnf_b = Vec<T>::Zero(H);
    p.mlm_w = Mat<T>::Zero(H, V);
    p.mlm_b = Vec<T>::Zero(V);
    p.icc_w = Vec<T>::Zero(H);
    p.icc_b = Vec<T>::Zero(1);
    p.layer_embed = Mat<T>::Zero(cfg.n_exits(), H);
    for (int e = 0; e < cfg.n_exits(); ++e) {
      p.proj_w.push_back(Mat<T>::Zero(H, cfg.proj_dim));
      p.proj_b.push_back(Vec<T>::Zero(cfg.proj_dim));
      p.clone_w.push_back(Vec<T>::Zero(H));
      p.clone_b.push_back(Vec<T>::Zero(1));
    }
    return p;
  }

  int exit_index(int exit_layer) const {
    for (int e = 0; e < cfg.n_exits(); ++e)
      if (cfg.exit_set[e] == exit_layer) return e;
    throw std::invalid_argument("exit layer " + std::to_string(exit_layer) +
                                " is not in the exit set");
  }

  // Flat views over every parameter tensor, in a fixed declared order.
  void for_each(const std::function<void(const std::string&, T*, long)>& fn) {
    auto m = [&](const std::string& name, Mat<T>& t) { fn(name, t.data(), t.size()); };
    auto v = [&](const std::string& name, Vec<T>& t) { fn(name, t.data(), t.size()); };
    m("tok_embed", tok_embed);
    for (size_t i = 0; i < layers.size(); ++i) {
      auto& l = layers[i];
      const std::string p = "layer" + std::to_string(i) + ".";
      v(p + "ln1_g", l.ln1_g); v(p + "ln1_b", l.ln1_b);
      m(p + "wq", l.wq); v(p + "bq", l.bq);
      m(p + "wk", l.wk); v(p + "bk", l.bk);
      m(p + "wv", l.wv); v(p + "bv", l.bv);
      m(p + "wo", l.wo); v(p + "bo", l.bo);
      v(p + "ln2_g", l.ln2_g); v(p + "ln2_b", l.ln2_b);
      m(p + "w1", l.w1); v(p + "b1", l.b1);
      m(p + "w2", l.w2); v(p + "b2", l.b2);
    }
    v("lnf_g", lnf_g); v("lnf_b", lnf_b);
    m("mlm_w", mlm_w); v("mlm_b", mlm_b);
    v("icc_w", icc_w); v("icc_b", icc_b);
    m("layer_embed", layer_embed);
    for (size_t e = 0; e < proj_w.size(); ++e) {
      const std::string p = "exit" + std::to_string(cfg.exit_set[e]) + ".";
      m(p + "proj_w", proj_w[e]); v(p + "proj_b", proj_b[e]);
      v(p + "clone_w", clone_w[e]); v(p + "clone_b", clone_b[e]);
    }
  }

  long num_params() {
    long n = 0;
    for_each([&](const std::string&, T*, long sz) { n += sz; });
    return n;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out = ParamSet<U>::zeros(cfg);
    auto* self = const_cast<ParamSet<T>*>(this);
    std::vector<std::pair<T*, long>> src;
    self->for_each([&](const std::string&, T* d, long sz) { src.emplace_back(d, sz); });
    size_t i = 0;
    out.for_each([&](const std::string&, U* d, long sz) {
      for (long k = 0; k < sz; ++k) d[k] = static_cast<U>(src[i].first[k]);
      ++i;
    });
    return out;
  }
};

// Deterministic initialization: scaled normal matrices, zero biases, unit
// norm gains, zero layer-index embeddings.
template <typename T>
ParamSet<T> init(const EncoderConfig& cfg, uint64_t seed) {
  ParamSet<T> p = ParamSet<T>::zeros(cfg);
  Rng rng(seed);
  const T scale = static_cast<T>(0.02);
  auto fill = [&](Mat<T>& m) {
    for (long i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal()) * scale;
  };
  fill(p.tok_embed);
  for (auto& l : p.layers) {
    l.ln1_g.setOnes(); l.ln2_g.setOnes();
    fill(l.wq); fill(l.wk); fill(l.wv); fill(l.wo); fill(l.w1); fill(l.w2);
  }
  p.lnf_g.setOnes();
  fill(p.mlm_w);
  for (long i = 0; i < p.icc_w.size(); ++i) p.icc_w(i) = static_cast<T>(rng.normal()) * scale;
  for (size_t e = 0; e < p.proj_w.size(); ++e) fill(p.proj_w[e]);
  for (size_t e = 0; e < p.clone_w.size(); ++e)
    for (long i = 0; i < p.clone_w[e].size(); ++i)
      p.clone_w[e](i) = static_cast<T>(rng.normal()) * scale;
  return p;
}

// One fixed-shape input batch (flattened row-major b*s).
struct Batch {
  int b = 0, s = 0;
  std::vector<int> ids;
  std::vector<uint8_t> valid;
  std::vector<int> cls_pos;

  static Batch from_examples(const std::vector<pack::PackedExample>& exs) {
    Batch out;
    out.b = static_cast<int>(exs.size());
    out.s = exs.empty() ? 0 : static_cast<int>(exs[0].ids.size());
    for (const auto& ex : exs) {
      if (static_cast<int>(ex.ids.size()) != out.s)
        throw std::invalid_argument("Batch: ragged example lengths");
      out.ids.insert(out.ids.end(), ex.ids.begin(), ex.ids.end());
      out.valid.insert(out.valid.end(), ex.valid.begin(), ex.valid.end());
      out.cls_pos.push_back(ex.cls_pos);
    }
    return out;
  }
};

// Standard pairwise rotation with frequencies theta^(-2j/d) applied in place
// to one head block (rows are positions).
template <typename T>
void rope_rotate(Eigen::Ref<Mat<T>> block, const std::vector<int>& positions, double theta,
                 bool inverse = false) {
  const int d = static_cast<int>(block.cols());
  if (d % 2 != 0) throw std::invalid_argument("rope_rotate: head dimension must be even");
  for (int r = 0; r < block.rows(); ++r) {
    const double pos = positions[r];
    for (int j = 0; j < d / 2; ++j) {
      const double freq = std::pow(theta, -2.0 * j / d);
      double angle = pos * freq;
      if (inverse) angle = -angle;
      const T c = static_cast<T>(std::cos(angle)), sn = static_cast<T>(std::sin(angle));
      const T x = block(r, 2 * j), y = block(r, 2 * j + 1);
      block(r, 2 * j) = c * x - sn * y;
      block(r, 2 * j + 1) = sn * x + c * y;
    }
  }
}

template <typename T>
struct LayerCache {
  Mat<T> x_in, a1;       // (B*S) x H
  Vec<T> mu1, rstd1;     // per row
  Mat<T> q, k, v;        // q,k post-rotation
  std::vector<Mat<T>> probs;  // b*n_heads entries, S x S
  Mat<T> ctx, x_mid, a2;
  Vec<T> mu2, rstd2;
  Mat<T> h_pre, h_act;  // (B*S) x I
};

template <typename T>
struct ForwardCache {
  Batch batch;
  int up_to = 0;
  std::vector<LayerCache<T>> layers;
  std::map<int, Mat<T>> exit_normed;  // exit layer -> (B*S) x H
  std::map<int, Vec<T>> exit_mu, exit_rstd;
};

// Per-exit sequence states and pooled CLS vectors.
template <typename T>
struct ExitStates {
  std::map<int, Mat<T>> hidden;  // (B*S) x H
  std::map<int, Mat<T>> pooled;  // B x H
};

namespace detail {

template <typename T>
void layer_norm(const Mat<T>& x, const Vec<T>& g, const Vec<T>& b, Mat<T>& y, Vec<T>& mu,
                Vec<T>& rstd) {
  const long n = x.rows(), h = x.cols();
  y.resize(n, h);
  mu.resize(n);
  rstd.resize(n);
  for (long r = 0; r < n; ++r) {
    const T m = x.row(r).mean();
    const T var = (x.row(r).array() - m).square().mean();
    const T rs = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
    mu(r) = m;
    rstd(r) = rs;
    y.row(r) =
        (((x.row(r).array() - m) * rs) * g.transpose().array() + b.transpose().array()).matrix();
  }
}

// dy -> dx; accumulates dg, db.
template <typename T>
void layer_norm_backward(const Mat<T>& x, const Vec<T>& g, const Vec<T>& mu, const Vec<T>& rstd,
                         const Mat<T>& dy, Mat<T>& dx, Vec<T>& dg, Vec<T>& db) {
  const long n = x.rows(), h = x.cols();
  dx.resize(n, h);
  for (long r = 0; r < n; ++r) {
    Eigen::Array<T, 1, Eigen::Dynamic> xhat = (x.row(r).array() - mu(r)) * rstd(r);
    Eigen::Array<T, 1, Eigen::Dynamic> dyr = dy.row(r).array();
    dg.array() += (dyr * xhat).transpose();
    db.array() += dyr.transpose();
    Eigen::Array<T, 1, Eigen::Dynamic> dxhat = dyr * g.transpose().array();
    const T m1 = dxhat.mean();
    const T m2 = (dxhat * xhat).mean();
    dx.row(r) = (rstd(r) * (dxhat - m1 - xhat * m2)).matrix();
  }
}

template <typename T>
T gelu(T x) {
  return static_cast<T>(0.5) * x * (T(1) + std::erf(x * static_cast<T>(M_SQRT1_2)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = static_cast<T>(0.5) * (T(1) + std::erf(x * static_cast<T>(M_SQRT1_2)));
  const T pdf = std::exp(static_cast<T>(-0.5) * x * x) * static_cast<T>(0.3989422804014327);
  return cdf + x * pdf;
}

}  // namespace detail

// Runs layers 1..up_to_exit, recording normalized states at every exit
// <= up_to_exit. Attention is exact bidirectional softmax attention; padded
// key positions receive -inf logits.
template <typename T>
ExitStates<T> forward(const ParamSet<T>& p, const Batch& batch, int up_to_exit,
                      ForwardCache<T>* cache = nullptr) {
  const EncoderConfig& cfg = p.cfg;
  p.exit_index(up_to_exit);  // throws when not an exit
  if (batch.s > cfg.max_seq) throw std::invalid_argument("forward: sequence longer than max_seq");

  const int B = batch.b, S = batch.s, H = cfg.hidden;
  const int nh = cfg.n_heads, nkv = cfg.n_kv_heads, dh = cfg.head_dim();
  const int grp = nh / nkv;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const T neg_inf = -std::numeric_limits<T>::infinity();

  std::vector<int> positions(S);
  for (int i = 0; i < S; ++i) positions[i] = i;

  ForwardCache<T> local;
  ForwardCache<T>& fc = cache ? *cache : local;
  fc.batch = batch;
  fc.up_to = up_to_exit;
  fc.layers.assign(up_to_exit, {});
  fc.exit_normed.clear();
  fc.exit_mu.clear();
  fc.exit_rstd.clear();

  Mat<T> x(B * S, H);
  for (int r = 0; r < B * S; ++r) x.row(r) = p.tok_embed.row(batch.ids[r]);

  ExitStates<T> states;
  for (int li = 0; li < up_to_exit; ++li) {
    const auto& lp = p.layers[li];
    LayerCache<T>& lc = fc.layers[li];
    lc.x_in = x;

    detail::layer_norm(lc.x_in, lp.ln1_g, lp.ln1_b, lc.a1, lc.mu1, lc.rstd1);

    lc.q = (lc.a1 * lp.wq).rowwise() + lp.bq.transpose();
    lc.k = (lc.a1 * lp.wk).rowwise() + lp.bk.transpose();
    lc.v = (lc.a1 * lp.wv).rowwise() + lp.bv.transpose();
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < nh; ++h)
        rope_rotate<T>(lc.q.block(b * S, h * dh, S, dh), positions, cfg.rope_theta);
      for (int g = 0; g < nkv; ++g)
        rope_rotate<T>(lc.k.block(b * S, g * dh, S, dh), positions, cfg.rope_theta);
    }

    lc.probs.assign(static_cast<size_t>(B) * nh, Mat<T>());
    lc.ctx.setZero(B * S, H);
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < nh; ++h) {
        const int g = h / grp;
        Mat<T> scores = lc.q.block(b * S, h * dh, S, dh) *
                        lc.k.block(b * S, g * dh, S, dh).transpose() * scale;
        for (int j = 0; j < S; ++j)
          if (!batch.valid[b * S + j]) scores.col(j).setConstant(neg_inf);
        Mat<T>& probs = lc.probs[static_cast<size_t>(b) * nh + h];
        probs.resize(S, S);
        for (int i = 0; i < S; ++i) {
          const T mx = scores.row(i).maxCoeff();
          Eigen::Array<T, 1, Eigen::Dynamic> e = (scores.row(i).array() - mx).exp();
          probs.row(i) = (e / e.sum()).matrix();
        }
        lc.ctx.block(b * S, h * dh, S, dh) = probs * lc.v.block(b * S, g * dh, S, dh);
      }
    }

    lc.x_mid = lc.x_in + ((lc.ctx * lp.wo).rowwise() + lp.bo.transpose());

    detail::layer_norm(lc.x_mid, lp.ln2_g, lp.ln2_b, lc.a2, lc.mu2, lc.rstd2);
    lc.h_pre = (lc.a2 * lp.w1).rowwise() + lp.b1.transpose();
    lc.h_act = lc.h_pre.unaryExpr([](T v) { return detail::gelu(v); });
    x = lc.x_mid + ((lc.h_act * lp.w2).rowwise() + lp.b2.transpose());

    const int layer_no = li + 1;
    if (std::find(cfg.exit_set.begin(), cfg.exit_set.end(), layer_no) != cfg.exit_set.end()) {
      Mat<T> normed;
      Vec<T> mu, rstd;
      detail::layer_norm(x, p.lnf_g, p.lnf_b, normed, mu, rstd);
      Mat<T> pooled(B, H);
      for (int b = 0; b < B; ++b) pooled.row(b) = normed.row(b * S + batch.cls_pos[b]);
      fc.exit_normed[layer_no] = normed;
      fc.exit_mu[layer_no] = mu;
      fc.exit_rstd[layer_no] = rstd;
      states.hidden[layer_no] = std::move(normed);
      states.pooled[layer_no] = std::move(pooled);
    }
  }
  return states;
}

// Vocabulary logits at all positions for one exit: shared head applied to
// hidden + layer_embed[exit].
template <typename T>
Mat<T> exit_mlm_logits(const ParamSet<T>& p, const ExitStates<T>& st, int exit) {
  auto it = st.hidden.find(exit);
  if (it == st.hidden.end()) throw std::invalid_argument("exit_mlm_logits: exit not present");
  const int e = p.exit_index(exit);
  Mat<T> shifted = it->second.rowwise() + p.layer_embed.row(e);
  return (shifted * p.mlm_w).rowwise() + p.mlm_b.transpose();
}

// Scalar same-repo logits per batch element at one exit.
template <typename T>
Vec<T> exit_icc_logit(const ParamSet<T>& p, const ExitStates<T>& st, int exit) {
  auto it = st.pooled.find(exit);
  if (it == st.pooled.end()) throw std::invalid_argument("exit_icc_logit: exit not present");
  const int e = p.exit_index(exit);
  Mat<T> shifted = it->second.rowwise() + p.layer_embed.row(e);
  return ((shifted * p.icc_w).array() + p.icc_b(0)).matrix();
}

// Unit-norm retrieval embeddings from pooled CLS vectors (rows).
template <typename T>
Mat<T> project(const ParamSet<T>& p, const Mat<T>& pooled, int exit) {
  const int e = p.exit_index(exit);
  Mat<T> z = (pooled * p.proj_w[e]).rowwise() + p.proj_b[e].transpose();
  for (int r = 0; r < z.rows(); ++r) {
    const T n = z.row(r).norm();
    if (n <= T(0)) throw std::runtime_error("project: zero-norm embedding cannot be normalized");
    z.row(r) /= n;
  }
  return z;
}

template <typename T>
Vec<T> clone_logit(const ParamSet<T>& p, const Mat<T>& pooled, int exit) {
  const int e = p.exit_index(exit);
  return ((pooled * p.clone_w[e]).array() + p.clone_b[e](0)).matrix();
}

// Accumulates parameter gradients given per-exit gradients w.r.t. the
// normalized exit states.
template <typename T>
void backward(const ParamSet<T>& p, const ForwardCache<T>& fc,
              const std::map<int, Mat<T>>& d_exit_normed, ParamSet<T>& grads) {
  const EncoderConfig& cfg = p.cfg;
  const Batch& batch = fc.batch;
  const int B = batch.b, S = batch.s, H = cfg.hidden;
  const int nh = cfg.n_heads, nkv = cfg.n_kv_heads, dh = cfg.head_dim();
  const int grp = nh / nkv;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  std::vector<int> positions(S);
  for (int i = 0; i < S; ++i) positions[i] = i;

  Mat<T> dx = Mat<T>::Zero(B * S, H);

  for (int li = fc.up_to - 1; li >= 0; --li) {
    const auto& lp = p.layers[li];
    const LayerCache<T>& lc = fc.layers[li];
    auto& gl = grads.layers[li];
    const int layer_no = li + 1;

    // Exit head contribution through the shared final norm.
    auto de = d_exit_normed.find(layer_no);
    if (de != d_exit_normed.end()) {
      // x_out of this layer
      Mat<T> x_out = lc.x_mid + ((lc.h_act * lp.w2).rowwise() + lp.b2.transpose());
      Mat<T> d_from_exit;
      detail::layer_norm_backward(x_out, p.lnf_g, fc.exit_mu.at(layer_no),
                                  fc.exit_rstd.at(layer_no), de->second, d_from_exit,
                                  grads.lnf_g, grads.lnf_b);
      dx += d_from_exit;
    }

    // MLP block
    Mat<T> d_mlp_out = dx;  // residual pass-through keeps dx for x_mid
    gl.b2 += d_mlp_out.colwise().sum().transpose();
    gl.w2 += lc.h_act.transpose() * d_mlp_out;
    Mat<T> d_act = d_mlp_out * lp.w2.transpose();
    Mat<T> d_pre =
        (d_act.array() * lc.h_pre.unaryExpr([](T v) { return detail::gelu_grad(v); }).array())
            .matrix();
    gl.b1 += d_pre.colwise().sum().transpose();
    gl.w1 += lc.a2.transpose() * d_pre;
    Mat<T> d_a2 = d_pre * lp.w1.transpose();
    Mat<T> d_xmid_ln;
    detail::layer_norm_backward(lc.x_mid, lp.ln2_g, lc.mu2, lc.rstd2, d_a2, d_xmid_ln, gl.ln2_g,
                                gl.ln2_b);
    Mat<T> d_xmid = dx + d_xmid_ln;

    // Attention block
    gl.bo += d_xmid.colwise().sum().transpose();
    gl.wo += lc.ctx.transpose() * d_xmid;
    Mat<T> d_ctx = d_xmid * lp.wo.transpose();

    Mat<T> dq = Mat<T>::Zero(B * S, nh * dh);
    Mat<T> dk = Mat<T>::Zero(B * S, nkv * dh);
    Mat<T> dv = Mat<T>::Zero(B * S, nkv * dh);
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < nh; ++h) {
        const int g = h / grp;
        const Mat<T>& probs = lc.probs[static_cast<size_t>(b) * nh + h];
        auto d_ctx_h = d_ctx.block(b * S, h * dh, S, dh);
        Mat<T> dP = d_ctx_h * lc.v.block(b * S, g * dh, S, dh).transpose();
        dv.block(b * S, g * dh, S, dh) += probs.transpose() * d_ctx_h;
        // softmax backward per row
        Mat<T> dS(S, S);
        for (int i = 0; i < S; ++i) {
          const T dot = dP.row(i).dot(probs.row(i));
          dS.row(i) = (probs.row(i).array() * (dP.row(i).array() - dot)).matrix();
        }
        dq.block(b * S, h * dh, S, dh) +=
            dS * lc.k.block(b * S, g * dh, S, dh) * scale;
        dk.block(b * S, g * dh, S, dh) +=
            dS.transpose() * lc.q.block(b * S, h * dh, S, dh) * scale;
      }
      for (int h = 0; h < nh; ++h)
        rope_rotate<T>(dq.block(b * S, h * dh, S, dh), positions, cfg.rope_theta, true);
      for (int g = 0; g < nkv; ++g)
        rope_rotate<T>(dk.block(b * S, g * dh, S, dh), positions, cfg.rope_theta, true);
    }

    gl.bq += dq.colwise().sum().transpose();
    gl.bk += dk.colwise().sum().transpose();
    gl.bv += dv.colwise().sum().transpose();
    gl.wq += lc.a1.transpose() * dq;
    gl.wk += lc.a1.transpose() * dk;
    gl.wv += lc.a1.transpose() * dv;
    Mat<T> d_a1 = dq * lp.wq.transpose() + dk * lp.wk.transpose() + dv * lp.wv.transpose();
    Mat<T> d_xin_ln;
    detail::layer_norm_backward(lc.x_in, lp.ln1_g, lc.mu1, lc.rstd1, d_a1, d_xin_ln, gl.ln1_g,
                                gl.ln1_b);
    dx = d_xmid + d_xin_ln;
  }

  for (int r = 0; r < B * S; ++r) grads.tok_embed.row(batch.ids[r]) += dx.row(r);
}

}  // namespace mosekit::model
