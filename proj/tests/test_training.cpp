#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mosekit/datagen.hpp"
#include "mosekit/training.hpp"

using namespace mosekit;
using namespace mosekit::train;

namespace {

EncoderConfig tiny_cfg(int vocab) {
  EncoderConfig cfg;
  cfg.depth = 4;
  cfg.exit_set = {1, 2, 4};
  cfg.hidden = 16;
  cfg.n_heads = 2;
  cfg.n_kv_heads = 1;
  cfg.intermediate = 32;
  cfg.vocab_size = vocab;
  cfg.max_seq = 32;
  cfg.proj_dim = 8;
  return cfg;
}

}  // namespace

TEST_CASE("the schedule warms up linearly then follows milestones") {
  OptimizerConfig opt = OptimizerConfig::paper_pretrain();
  CHECK(lr_at(0, opt) == 0.0);
  CHECK(lr_at(2000, opt) == doctest::Approx(6.24e-4 * 0.5).epsilon(1e-12));
  CHECK(lr_at(4000, opt) == doctest::Approx(6.24e-4).epsilon(1e-12));
  CHECK(lr_at(119999, opt) == doctest::Approx(6.24e-4).epsilon(1e-12));
  CHECK(lr_at(120000, opt) == doctest::Approx(6.24e-4 * 0.36).epsilon(1e-12));
  CHECK(lr_at(200000, opt) == doctest::Approx(6.24e-4 * 0.1).epsilon(1e-12));
  CHECK(lr_at(1000000, opt) == doctest::Approx(6.24e-4 * 0.001).epsilon(1e-12));

  OptimizerConfig flat;
  flat.warmup_steps = 0;
  CHECK(lr_at(0, flat) == flat.base_lr);
  CHECK_THROWS([] {
    OptimizerConfig bad;
    bad.decay_milestones = {{100, 0.5}, {100, 0.1}};
    bad.validate();
  }());
}

TEST_CASE("one optimizer step matches the closed form") {
  const auto cfg = tiny_cfg(16);
  OptimizerConfig opt;
  opt.weight_decay = 0.0;

  // Constant unit gradients move every weight by about -lr after one step.
  auto p = model::ParamSet<double>::zeros(cfg);
  auto g = model::ParamSet<double>::zeros(cfg);
  g.for_each([](const std::string&, double* d, long sz) {
    for (long i = 0; i < sz; ++i) d[i] = 1.0;
  });
  AdamState<double> st;
  adamw_step(p, g, st, opt, 0.1);
  // mhat/ (sqrt(vhat) + eps) = 1 / (1 + 1e-6)
  const double expect = -0.1 / (1.0 + 1e-6);
  p.for_each([&](const std::string&, double* d, long sz) {
    for (long i = 0; i < sz; ++i) CHECK(d[i] == doctest::Approx(expect).epsilon(1e-12));
  });
}

TEST_CASE("weight decay is decoupled from the gradient") {
  const auto cfg = tiny_cfg(16);
  OptimizerConfig opt;  // weight_decay 0.1
  auto p = model::ParamSet<double>::zeros(cfg);
  p.for_each([](const std::string&, double* d, long sz) {
    for (long i = 0; i < sz; ++i) d[i] = 1.0;
  });
  auto g = model::ParamSet<double>::zeros(cfg);
  AdamState<double> st;
  adamw_step(p, g, st, opt, 0.1);
  // Zero gradients leave only the decay term: p' = p - lr * wd * p = 0.99.
  p.for_each([](const std::string&, double* d, long sz) {
    for (long i = 0; i < sz; ++i) CHECK(d[i] == doctest::Approx(0.99).epsilon(1e-12));
  });
}

TEST_CASE("zero gradients with zero decay change nothing") {
  const auto cfg = tiny_cfg(16);
  OptimizerConfig opt;
  opt.weight_decay = 0.0;
  auto p = model::init<double>(cfg, 1);
  const auto before = p.tok_embed;
  auto g = model::ParamSet<double>::zeros(cfg);
  AdamState<double> st;
  adamw_step(p, g, st, opt, 0.1);
  CHECK(p.tok_embed == before);
}

TEST_CASE("non-finite gradients abort the step") {
  const auto cfg = tiny_cfg(16);
  auto p = model::ParamSet<double>::zeros(cfg);
  auto g = model::ParamSet<double>::zeros(cfg);
  g.tok_embed(0, 0) = std::numeric_limits<double>::quiet_NaN();
  AdamState<double> st;
  OptimizerConfig opt;
  CHECK_THROWS_AS(adamw_step(p, g, st, opt, 0.1), std::runtime_error);
}

TEST_CASE("gradient clipping rescales to the requested norm") {
  const auto cfg = tiny_cfg(16);
  auto g = model::ParamSet<double>::zeros(cfg);
  g.tok_embed(0, 0) = 3.0;
  g.tok_embed(0, 1) = 4.0;
  const double pre = clip_gradients(g, 1.0);
  CHECK(pre == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(g.tok_embed(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(g.tok_embed(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  // Below the limit nothing changes.
  auto h = model::ParamSet<double>::zeros(cfg);
  h.tok_embed(0, 0) = 0.5;
  CHECK(clip_gradients(h, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(h.tok_embed(0, 0) == 0.5);
}

TEST_CASE("augmentation renames only frequent long words") {
  Rng rng(1);
  // "a" is short, "b" infrequent: untouched.
  CHECK(augment_code("a b a", rng) == "a b a");
  // Three occurrences but below the length bar.
  CHECK(augment_code("ab ab ab", rng) == "ab ab ab");
  // Two occurrences only.
  CHECK(augment_code("foo foo bar", rng) == "foo foo bar");

  // Frequent and long: renamed to one consistent fresh name.
  const std::string out = augment_code("foo foo foo", rng);
  CHECK(out != "foo foo foo");
  std::istringstream is(out);
  std::string w1, w2, w3;
  is >> w1 >> w2 >> w3;
  CHECK(w1 == w2);
  CHECK(w2 == w3);
  CHECK(w1 != "foo");
}

TEST_CASE("augmentation preserves structure and is seed-deterministic") {
  const std::string code = "let abc := 1 ;\nemit abc ;\nrepeat 3 { emit abc }\n";
  Rng r1(9), r2(9);
  const std::string a = augment_code(code, r1);
  const std::string b = augment_code(code, r2);
  CHECK(a == b);
  CHECK(a != code);               // "abc" and "emit" both occur three times
  CHECK(a.find(":=") != std::string::npos);
  CHECK(a.find('\n') != std::string::npos);
  CHECK(a.find("abc") == std::string::npos);
  // Whitespace shape is untouched.
  auto shape = [](const std::string& s) {
    std::string out;
    for (char c : s)
      out += (c == ' ' || c == '\n') ? c : 'x';
    return out.size();
  };
  CHECK(std::count(a.begin(), a.end(), '\n') == std::count(code.begin(), code.end(), '\n'));
  (void)shape;
}

TEST_CASE("batch draws hit the task and augmentation rates") {
  Rng rng(4);
  long t2c = 0, n = 0;
  for (int i = 0; i < 1000; ++i)
    for (const auto& d : draw_retrieval_batch(128, 16, 0.30, rng)) {
      t2c += d.t2c;
      ++n;
    }
  const double frac = static_cast<double>(t2c) / n;
  CHECK(frac >= 0.48);
  CHECK(frac <= 0.52);

  long aug = 0;
  for (int i = 0; i < 10000; ++i) aug += draw_retrieval_batch(128, 1, 0.30, rng)[0].augment;
  const double afrac = aug / 10000.0;
  CHECK(afrac >= 0.28);
  CHECK(afrac <= 0.32);
  CHECK_THROWS(draw_retrieval_batch(0, 4, 0.3, rng));
}

TEST_CASE("zero-step training returns the starting parameters") {
  const auto corpus = datagen::gen_corpus(2, 2, 4, datagen::kToyLangs);
  const auto vocab = tok::build_vocab(corpus, 512);
  const auto cfg = tiny_cfg(vocab.size());
  const auto start = model::init<double>(cfg, 1);
  TrainPlan plan;
  plan.steps = 0;
  plan.batch_size = 4;
  plan.max_len = 32;
  OptimizerConfig opt;
  const auto res = pretrain(start, corpus, vocab, plan, opt);
  CHECK(res.log.empty());
  bool equal = true;
  auto& a = const_cast<model::ParamSet<double>&>(start);
  std::vector<std::pair<double*, long>> av;
  a.for_each([&](const std::string&, double* d, long sz) { av.emplace_back(d, sz); });
  size_t i = 0;
  const_cast<model::ParamSet<double>&>(res.params)
      .for_each([&](const std::string&, double* d, long sz) {
        for (long k = 0; k < sz; ++k) equal &= (d[k] == av[i].first[k]);
        ++i;
      });
  CHECK(equal);
}

TEST_CASE("identical seeds give identical loss trajectories") {
  const auto corpus = datagen::gen_corpus(2, 2, 4, datagen::kToyLangs);
  const auto vocab = tok::build_vocab(corpus, 512);
  const auto cfg = tiny_cfg(vocab.size());
  const auto start = model::init<double>(cfg, 1);
  TrainPlan plan;
  plan.steps = 5;
  plan.batch_size = 4;
  plan.max_len = 32;
  plan.seed = 7;
  OptimizerConfig opt;
  const auto r1 = pretrain(start, corpus, vocab, plan, opt);
  const auto r2 = pretrain(start, corpus, vocab, plan, opt);
  REQUIRE(r1.log.size() == 5);
  for (size_t i = 0; i < 5; ++i) {
    CHECK(r1.log[i].combined == r2.log[i].combined);
    CHECK(r1.log[i].per_exit == r2.log[i].per_exit);
  }
  // Per-step records carry one loss and weight per exit.
  for (const auto& log : r1.log) {
    CHECK(log.per_exit.size() == cfg.exit_set.size());
    CHECK(log.alpha.at(4) == 1.0);
    CHECK(log.alpha.at(1) == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("the single-exit ablation equals the restricted run at step zero") {
  const auto corpus = datagen::gen_corpus(2, 2, 4, datagen::kToyLangs);
  const auto vocab = tok::build_vocab(corpus, 512);
  const auto cfg = tiny_cfg(vocab.size());
  const auto start = model::init<double>(cfg, 1);
  TrainPlan plan;
  plan.steps = 1;
  plan.batch_size = 4;
  plan.max_len = 32;
  plan.seed = 3;
  OptimizerConfig opt;
  const auto full = pretrain(start, corpus, vocab, plan, opt);
  plan.single_exit = 4;
  const auto single = pretrain(start, corpus, vocab, plan, opt);
  // Same packs, same parameters: the deepest exit's bare loss coincides.
  CHECK(single.log[0].combined == doctest::Approx(full.log[0].per_exit.at(4)).epsilon(1e-12));
  CHECK(single.log[0].alpha.size() == 1);
  CHECK(single.log[0].alpha.at(4) == 1.0);
}

TEST_CASE("a short pre-training run reduces the loss") {
  const auto corpus = datagen::gen_corpus(2, 2, 8, datagen::kToyLangs);
  const auto vocab = tok::build_vocab(corpus, 512);
  const auto cfg = tiny_cfg(vocab.size());
  const auto start = model::init<float>(cfg, 1);
  TrainPlan plan;
  plan.steps = 60;
  plan.batch_size = 8;
  plan.max_len = 32;
  plan.seed = 5;
  OptimizerConfig opt;
  opt.base_lr = 3e-3;
  opt.warmup_steps = 10;
  const auto res = pretrain(start, corpus, vocab, plan, opt);
  double early = 0, late = 0;
  for (int i = 0; i < 10; ++i) {
    early += res.log[i].combined;
    late += res.log[res.log.size() - 10 + i].combined;
  }
  CHECK(late < early);
}

TEST_CASE("retrieval fine-tuning validates and makes progress") {
  const auto triplets = datagen::gen_triplets(4, 16, datagen::kToyLangs);
  std::vector<std::string> texts;
  for (const auto& t : triplets) {
    texts.push_back(kT2cPrefix + t.nl);
    texts.push_back(kC2cPrefix + t.code_a.text);
    texts.push_back(t.code_b.text);
  }
  const auto vocab = tok::build_vocab(texts, 2048);
  const auto cfg = tiny_cfg(vocab.size());
  const auto start = model::init<float>(cfg, 1);
  TrainPlan plan;
  plan.steps = 40;
  plan.batch_size = 8;
  plan.max_len = 32;
  plan.seed = 5;
  OptimizerConfig opt = OptimizerConfig::desk_finetune();
  const auto res = finetune_retrieval(start, triplets, vocab, plan, opt);
  double early = 0, late = 0;
  for (int i = 0; i < 5; ++i) {
    early += res.log[i].combined;
    late += res.log[res.log.size() - 5 + i].combined;
  }
  CHECK(late < early);

  plan.batch_size = 1;
  CHECK_THROWS(finetune_retrieval(start, triplets, vocab, plan, opt));
  plan.batch_size = 8;
  CHECK_THROWS(finetune_retrieval(start, std::vector<Triplet>{}, vocab, plan, opt));
}

TEST_CASE("clone fine-tuning requires labels and learns a separable pair set") {
  const auto triplets = datagen::gen_triplets(6, 8, datagen::kToyLangs);
  std::vector<ClonePair> pairs;
  for (size_t i = 0; i < triplets.size(); ++i) {
    pairs.push_back({triplets[i].code_a.text, triplets[i].code_b.text, 1});
    pairs.push_back(
        {triplets[i].code_a.text, triplets[(i + 3) % triplets.size()].code_b.text, 0});
  }
  std::vector<std::string> texts;
  for (const auto& pr : pairs) {
    texts.push_back(pr.text_a);
    texts.push_back(pr.text_b);
  }
  const auto vocab = tok::build_vocab(texts, 2048);
  const auto cfg = tiny_cfg(vocab.size());
  const auto start = model::init<float>(cfg, 1);
  TrainPlan plan;
  plan.steps = 200;
  plan.batch_size = 8;
  plan.max_len = 32;
  plan.seed = 2;
  OptimizerConfig opt = OptimizerConfig::desk_finetune();
  opt.base_lr = 5e-3;
  const auto res = finetune_clone(start, pairs, vocab, plan, opt);
  double head = 0, tail = 0;
  for (int i = 0; i < 20; ++i) {
    head += res.log[i].combined;
    tail += res.log[res.log.size() - 1 - i].combined;
  }
  CHECK(tail < head);

  auto bad = pairs;
  bad[0].label = -1;
  CHECK_THROWS(finetune_clone(start, bad, vocab, plan, opt));
}

TEST_CASE("the pre-training objective gradients pass a finite-difference check") {
  const auto corpus = datagen::gen_corpus(2, 2, 4, datagen::kToyLangs);
  const auto vocab = tok::build_vocab(corpus, 512);
  EncoderConfig cfg = tiny_cfg(vocab.size());
  cfg.depth = 2;
  cfg.exit_set = {1, 2};
  auto p = model::init<double>(cfg, 3);
  const auto pool = pack::PackPool::build(corpus, vocab);
  Rng rng(4);
  std::vector<pack::PackedExample> exs;
  for (int i = 0; i < 2; ++i) {
    auto ex = pack::pack_icc(pool, 24, 0.5, rng);
    pack::apply_mlm_mask(ex, 0.15, rng, vocab.size());
    exs.push_back(ex);
  }

  auto grads = model::ParamSet<double>::zeros(cfg);
  pretrain_loss(p, exs, -1, &grads);

  // Spot-check a handful of coordinates in different tensors.
  auto loss_at = [&]() { return static_cast<double>(pretrain_loss(p, exs).combined); };
  struct Probe {
    double* ptr;
    double* grad;
  };
  std::vector<Probe> probes = {
      {&p.tok_embed(6, 3), &grads.tok_embed(6, 3)},
      {&p.layers[0].wq(2, 5), &grads.layers[0].wq(2, 5)},
      {&p.layers[1].w2(10, 4), &grads.layers[1].w2(10, 4)},
      {&p.mlm_w(7, 9), &grads.mlm_w(7, 9)},
      {&p.icc_w(5), &grads.icc_w(5)},
      {&p.layer_embed(0, 2), &grads.layer_embed(0, 2)},
      {&p.lnf_g(3), &grads.lnf_g(3)},
  };
  const double eps = 1e-6;
  for (const auto& pr : probes) {
    const double orig = *pr.ptr;
    *pr.ptr = orig + eps;
    const double up = loss_at();
    *pr.ptr = orig - eps;
    const double down = loss_at();
    *pr.ptr = orig;
    const double num = (up - down) / (2 * eps);
    CHECK(std::abs(*pr.grad - num) <= 1e-7 + 1e-4 * std::abs(num));
  }
}
