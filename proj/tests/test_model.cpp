#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "mosekit/model.hpp"
#include "mosekit/packing.hpp"
#include "mosekit/rng.hpp"

using namespace mosekit;
using namespace mosekit::model;

namespace {

EncoderConfig tiny_cfg() {
  EncoderConfig cfg;
  cfg.depth = 4;
  cfg.exit_set = {1, 2, 4};
  cfg.hidden = 16;
  cfg.n_heads = 2;
  cfg.n_kv_heads = 1;
  cfg.intermediate = 32;
  cfg.vocab_size = 32;
  cfg.max_seq = 16;
  cfg.proj_dim = 8;
  return cfg;
}

// One left-padded example with the given valid token ids and trailing CLS.
pack::PackedExample make_example(const std::vector<int>& body, int max_len) {
  pack::PackedExample ex;
  ex.ids.assign(max_len, tok::kPad);
  ex.valid.assign(max_len, 0);
  const int start = max_len - static_cast<int>(body.size()) - 2;
  int i = start;
  ex.ids[i] = tok::kSep;
  ex.valid[i] = 1;
  ++i;
  for (int id : body) {
    ex.ids[i] = id;
    ex.valid[i] = 1;
    ++i;
  }
  ex.ids[i] = tok::kCls;
  ex.valid[i] = 1;
  ex.cls_pos = i;
  ex.seg_bounds = {{start + 1, i}};
  return ex;
}

std::vector<int> random_body(Rng& rng, int len, int vocab) {
  std::vector<int> out;
  for (int i = 0; i < len; ++i)
    out.push_back(tok::kNumSpecials + static_cast<int>(rng.below(vocab - tok::kNumSpecials)));
  return out;
}

// Analytic parameter count for a config.
long expected_params(const EncoderConfig& c) {
  const long H = c.hidden, V = c.vocab_size, I = c.intermediate;
  const long Hkv = H / c.n_heads * c.n_kv_heads;
  const long per_layer = 2 * H            // ln1
                         + H * H + H      // wq, bq
                         + 2 * (H * Hkv + Hkv)  // wk/bk, wv/bv
                         + H * H + H      // wo, bo
                         + 2 * H          // ln2
                         + H * I + I      // w1, b1
                         + I * H + H;     // w2, b2
  long n = V * H + c.depth * per_layer + 2 * H  // embeddings, layers, final norm
           + H * V + V                          // vocabulary head
           + H + 1                              // context head
           + static_cast<long>(c.n_exits()) * H;  // layer-index embeddings
  n += c.n_exits() * (H * static_cast<long>(c.proj_dim) + c.proj_dim  // projection heads
                      + H + 1);                                       // clone heads
  return n;
}

}  // namespace

TEST_CASE("initialization is deterministic and seed-sensitive") {
  const auto cfg = tiny_cfg();
  auto a = init<double>(cfg, 3), b = init<double>(cfg, 3), c = init<double>(cfg, 4);
  CHECK(a.tok_embed == b.tok_embed);
  CHECK(a.layers[0].wq == b.layers[0].wq);
  CHECK(a.tok_embed != c.tok_embed);
  // Zeroed layer-index embeddings and unit norm gains at the start.
  CHECK(a.layer_embed.cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.lnf_g.minCoeff() == 1.0);
}

TEST_CASE("parameter counts match the closed form") {
  auto tiny = init<float>(tiny_cfg(), 1);
  CHECK(tiny.num_params() == expected_params(tiny_cfg()));

  EncoderConfig desk;
  desk.vocab_size = 4096;
  auto p = ParamSet<float>::zeros(desk);
  CHECK(p.num_params() == expected_params(desk));

  // The full-scale preset lands at a billion-parameter order of magnitude.
  const long full = expected_params(EncoderConfig::paper());
  CHECK(full > 300'000'000L);
  CHECK(full < 3'000'000'000L);
}

TEST_CASE("config validation catches bad shapes") {
  EncoderConfig cfg = tiny_cfg();
  CHECK_NOTHROW(cfg.validate());
  cfg.exit_set = {1, 2, 40};
  CHECK_THROWS(cfg.validate());
  cfg = tiny_cfg();
  cfg.exit_set = {2, 2};
  CHECK_THROWS(cfg.validate());
  cfg = tiny_cfg();
  cfg.n_kv_heads = 3;  // 2 % 3 != 0
  CHECK_THROWS(cfg.validate());
  cfg = tiny_cfg();
  cfg.hidden = 17;
  CHECK_THROWS(cfg.validate());
  cfg = tiny_cfg();
  cfg.vocab_size = 2;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("rotary rotation preserves norms and is identity at position zero") {
  Rng rng(2);
  Mat<double> block(4, 8);
  for (long i = 0; i < block.size(); ++i) block.data()[i] = rng.normal();
  const Mat<double> before = block;
  rope_rotate<double>(block, {0, 3, 7, 12}, 1e6);
  CHECK(block.row(0) == before.row(0));
  for (int r = 1; r < 4; ++r) {
    CHECK(block.row(r).norm() == doctest::Approx(before.row(r).norm()).epsilon(1e-12));
    CHECK(block.row(r) != before.row(r));
  }
  // The inverse flag undoes the rotation.
  rope_rotate<double>(block, {0, 3, 7, 12}, 1e6, true);
  CHECK((block - before).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rotary attention scores depend only on relative offsets") {
  Rng rng(3);
  Mat<double> q(1, 8), k(1, 8);
  for (long i = 0; i < 8; ++i) {
    q(0, i) = rng.normal();
    k(0, i) = rng.normal();
  }
  auto score_at = [&](int pq, int pk) {
    Mat<double> qr = q, kr = k;
    rope_rotate<double>(qr, {pq}, 1e6);
    rope_rotate<double>(kr, {pk}, 1e6);
    return qr.row(0).dot(kr.row(0));
  };
  CHECK(score_at(3, 7) == doctest::Approx(score_at(10, 14)).epsilon(1e-10));
  CHECK(score_at(9, 2) == doctest::Approx(score_at(107, 100)).epsilon(1e-10));
}

TEST_CASE("early exits are prefixes of the deepest forward pass") {
  Rng rng(4);
  for (uint64_t seed : {10, 11, 12}) {
    EncoderConfig cfg = tiny_cfg();
    if (seed == 11) {
      cfg.n_kv_heads = 2;  // degenerate grouping: one kv head per query head
    } else if (seed == 12) {
      cfg.hidden = 24;
      cfg.intermediate = 48;
      cfg.n_heads = 4;
      cfg.n_kv_heads = 2;
    }
    const auto p = init<double>(cfg, seed);
    for (int i = 0; i < 5; ++i) {
      std::vector<pack::PackedExample> exs = {
          make_example(random_body(rng, 3 + static_cast<int>(rng.below(9)), cfg.vocab_size), 16),
          make_example(random_body(rng, 3 + static_cast<int>(rng.below(9)), cfg.vocab_size), 16)};
      const auto batch = Batch::from_examples(exs);
      const auto full = forward(p, batch, cfg.depth);
      for (int e : cfg.exit_set) {
        const auto part = forward(p, batch, e);
        CHECK((part.hidden.at(e) - full.hidden.at(e)).cwiseAbs().maxCoeff() <= 1e-6);
        CHECK((part.pooled.at(e) - full.pooled.at(e)).cwiseAbs().maxCoeff() <= 1e-6);
      }
      // Shallower passes only materialize the exits they reached.
      const auto first = forward(p, batch, cfg.exit_set[0]);
      CHECK(first.hidden.size() == 1);
    }
  }
}

TEST_CASE("attention is bidirectional") {
  const auto cfg = tiny_cfg();
  const auto p = init<double>(cfg, 5);
  Rng rng(6);
  auto body = random_body(rng, 8, cfg.vocab_size);
  auto ex1 = make_example(body, 16);
  body.back() = (body.back() == 6) ? 7 : 6;  // perturb the last body token
  auto ex2 = make_example(body, 16);
  const auto s1 = forward(p, Batch::from_examples({ex1}), 1);
  const auto s2 = forward(p, Batch::from_examples({ex2}), 1);
  // The first body token's state reacts to a change later in the sequence.
  const int first_body_row = 16 - static_cast<int>(body.size()) - 1;
  const double delta =
      (s1.hidden.at(1).row(first_body_row) - s2.hidden.at(1).row(first_body_row))
          .cwiseAbs()
          .maxCoeff();
  CHECK(delta > 1e-8);
}

TEST_CASE("padding content cannot influence valid positions") {
  const auto cfg = tiny_cfg();
  const auto p = init<double>(cfg, 7);
  Rng rng(8);
  auto ex1 = make_example(random_body(rng, 6, cfg.vocab_size), 16);
  auto ex2 = ex1;
  for (int i = 0; i < 16; ++i)
    if (!ex2.valid[i]) ex2.ids[i] = 9;  // garbage under the pad mask
  const auto s1 = forward(p, Batch::from_examples({ex1}), cfg.depth);
  const auto s2 = forward(p, Batch::from_examples({ex2}), cfg.depth);
  for (int e : cfg.exit_set) {
    for (int i = 0; i < 16; ++i)
      if (ex1.valid[i])
        CHECK((s1.hidden.at(e).row(i) - s2.hidden.at(e).row(i)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((s1.pooled.at(e) - s2.pooled.at(e)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("batch order does not change per-example outputs") {
  const auto cfg = tiny_cfg();
  const auto p = init<double>(cfg, 9);
  Rng rng(10);
  auto ea = make_example(random_body(rng, 5, cfg.vocab_size), 16);
  auto eb = make_example(random_body(rng, 9, cfg.vocab_size), 16);
  const auto sab = forward(p, Batch::from_examples({ea, eb}), cfg.depth);
  const auto sba = forward(p, Batch::from_examples({eb, ea}), cfg.depth);
  const auto& top = sab.pooled.at(cfg.depth);
  const auto& swapped = sba.pooled.at(cfg.depth);
  CHECK((top.row(0) - swapped.row(1)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((top.row(1) - swapped.row(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a single valid key receives all attention") {
  // With only the CLS token valid, every probability row over keys is a
  // one-hot on that column.
  const auto cfg = tiny_cfg();
  const auto p = init<double>(cfg, 11);
  pack::PackedExample ex;
  ex.ids.assign(8, tok::kPad);
  ex.valid.assign(8, 0);
  ex.ids[7] = tok::kCls;
  ex.valid[7] = 1;
  ex.cls_pos = 7;
  ForwardCache<double> cache;
  forward(p, Batch::from_examples({ex}), 1, &cache);
  for (const auto& probs : cache.layers[0].probs) {
    for (int r = 0; r < 8; ++r) {
      CHECK(probs(r, 7) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention rows over valid keys always sum to one") {
  const auto cfg = tiny_cfg();
  const auto p = init<double>(cfg, 12);
  Rng rng(13);
  auto ex = make_example(random_body(rng, 7, cfg.vocab_size), 16);
  ForwardCache<double> cache;
  forward(p, Batch::from_examples({ex}), cfg.depth, &cache);
  for (const auto& lc : cache.layers)
    for (const auto& probs : lc.probs)
      for (int r = 0; r < probs.rows(); ++r)
        CHECK(probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("the forward pass validates its inputs") {
  const auto cfg = tiny_cfg();
  const auto p = init<double>(cfg, 14);
  Rng rng(15);
  auto ex = make_example(random_body(rng, 5, cfg.vocab_size), 16);
  CHECK_THROWS(forward(p, Batch::from_examples({ex}), 3));  // 3 is not an exit
  auto long_ex = make_example(random_body(rng, 5, cfg.vocab_size), 16);
  long_ex.ids.resize(32, tok::kPad);
  long_ex.valid.resize(32, 0);
  CHECK_THROWS(forward(p, Batch::from_examples({long_ex}), cfg.depth));  // beyond max_seq
}

TEST_CASE("shared heads see the exit through the layer-index embedding") {
  const auto cfg = tiny_cfg();
  auto p = init<double>(cfg, 16);
  Rng rng(17);
  auto ex = make_example(random_body(rng, 6, cfg.vocab_size), 16);
  const auto st = forward(p, Batch::from_examples({ex}), cfg.depth);

  // Zero embeddings at init: heads cannot tell exits apart on equal states.
  ExitStates<double> same;
  same.hidden[1] = st.hidden.at(4);
  same.hidden[4] = st.hidden.at(4);
  same.pooled[1] = st.pooled.at(4);
  same.pooled[4] = st.pooled.at(4);
  CHECK((exit_mlm_logits(p, same, 1) - exit_mlm_logits(p, same, 4)).cwiseAbs().maxCoeff() == 0.0);

  // A perturbed embedding row separates them.
  p.layer_embed.row(0).setConstant(0.1);
  CHECK((exit_mlm_logits(p, same, 1) - exit_mlm_logits(p, same, 4)).cwiseAbs().maxCoeff() > 1e-6);
  CHECK((exit_icc_logit(p, same, 1) - exit_icc_logit(p, same, 4)).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("retrieval projections are unit-norm and per-exit") {
  const auto cfg = tiny_cfg();
  auto p = init<double>(cfg, 18);
  Rng rng(19);
  auto ex = make_example(random_body(rng, 6, cfg.vocab_size), 16);
  const auto st = forward(p, Batch::from_examples({ex}), cfg.depth);
  for (int e : cfg.exit_set) {
    const auto z = project(p, st.pooled.at(e), e);
    CHECK(z.cols() == cfg.proj_dim);
    for (long r = 0; r < z.rows(); ++r)
      CHECK(z.row(r).norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Exit heads are independent parameters.
  const auto before = project(p, st.pooled.at(2), 2);
  p.proj_w[0].setConstant(0.5);  // perturb exit 1's head only
  CHECK((project(p, st.pooled.at(2), 2) - before).cwiseAbs().maxCoeff() == 0.0);
  const Mat<double> zero_pooled = Mat<double>::Zero(1, cfg.hidden);
  CHECK_THROWS(project(p, zero_pooled, cfg.depth));
}

TEST_CASE("mlm logits cover the vocabulary at every exit state row") {
  const auto cfg = tiny_cfg();
  const auto p = init<double>(cfg, 20);
  Rng rng(21);
  auto ex = make_example(random_body(rng, 6, cfg.vocab_size), 16);
  const auto st = forward(p, Batch::from_examples({ex}), cfg.depth);
  const auto logits = exit_mlm_logits(p, st, 2);
  CHECK(logits.rows() == 16);
  CHECK(logits.cols() == cfg.vocab_size);
  CHECK_THROWS(exit_mlm_logits(p, st, 5));
}
