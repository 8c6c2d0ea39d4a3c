#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace mosekit {

// Architectural hyperparameters. Paper-scale values are kept as a preset;
// the desk defaults train in minutes on one core.
struct EncoderConfig {
  int depth = 8;
  std::vector<int> exit_set = {1, 2, 4, 6, 8};  // ascending layer indices, 1-based
  int hidden = 64;
  int n_heads = 4;
  int n_kv_heads = 2;
  int intermediate = 256;
  double rope_theta = 1e6;
  int vocab_size = 0;
  int max_seq = 128;
  int proj_dim = 32;

  int head_dim() const { return hidden / n_heads; }
  int n_exits() const { return static_cast<int>(exit_set.size()); }

  void validate() const {
    if (depth < 1) throw std::invalid_argument("EncoderConfig: depth must be >= 1");
    if (exit_set.empty()) throw std::invalid_argument("EncoderConfig: exit_set empty");
    for (size_t i = 0; i < exit_set.size(); ++i) {
      if (exit_set[i] < 1 || exit_set[i] > depth)
        throw std::invalid_argument("EncoderConfig: exit layer out of range [1, depth]");
      if (i > 0 && exit_set[i] <= exit_set[i - 1])
        throw std::invalid_argument("EncoderConfig: exit_set must be strictly ascending");
    }
    if (n_heads < 1 || n_kv_heads < 1 || n_heads % n_kv_heads != 0)
      throw std::invalid_argument("EncoderConfig: n_heads must be divisible by n_kv_heads");
    if (hidden % n_heads != 0)
      throw std::invalid_argument("EncoderConfig: hidden must be divisible by n_heads");
    if ((hidden / n_heads) % 2 != 0)
      throw std::invalid_argument("EncoderConfig: head dimension must be even for rotary pairing");
    if (intermediate < 1) throw std::invalid_argument("EncoderConfig: intermediate must be >= 1");
    if (vocab_size < 6) throw std::invalid_argument("EncoderConfig: vocab_size must be >= 6");
    if (max_seq < 4) throw std::invalid_argument("EncoderConfig: max_seq must be >= 4");
    if (proj_dim < 1) throw std::invalid_argument("EncoderConfig: proj_dim must be >= 1");
  }

  static EncoderConfig paper() {
    EncoderConfig c;
    c.depth = 36;
    c.exit_set = {4, 9, 18, 27, 36};
    c.hidden = 1024;
    c.n_heads = 16;
    c.n_kv_heads = 4;
    c.intermediate = 12288;
    c.rope_theta = 1e6;
    c.vocab_size = 49152;
    c.max_seq = 2048;
    c.proj_dim = 256;
    return c;
  }
};

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-6;
  double weight_decay = 0.1;
  double base_lr = 6.24e-4;
  long long warmup_steps = 100;
  std::vector<std::pair<long long, double>> decay_milestones;  // (step, absolute factor)
  double clip_norm = 1.0;

  void validate() const {
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
      throw std::invalid_argument("OptimizerConfig: betas must lie in (0,1)");
    if (eps <= 0) throw std::invalid_argument("OptimizerConfig: eps must be > 0");
    if (warmup_steps < 0) throw std::invalid_argument("OptimizerConfig: warmup_steps must be >= 0");
    for (size_t i = 1; i < decay_milestones.size(); ++i)
      if (decay_milestones[i].first <= decay_milestones[i - 1].first)
        throw std::invalid_argument("OptimizerConfig: milestones must be strictly increasing");
  }

  static OptimizerConfig paper_pretrain() {
    OptimizerConfig o;
    o.base_lr = 6.24e-4;
    o.warmup_steps = 4000;
    o.decay_milestones = {{120000, 0.36}, {185000, 0.1}, {220000, 0.031},
                          {230000, 0.01}, {240000, 0.001}};
    return o;
  }

  static OptimizerConfig desk_finetune() {
    OptimizerConfig o;
    o.base_lr = 1e-3;  // paper uses 1e-5 at 1B scale
    o.warmup_steps = 0;
    return o;
  }
};

struct TrainPlan {
  enum class Mode { pretrain, finetune_retrieval, finetune_clone };
  Mode mode = Mode::pretrain;
  long long steps = 2000;
  int batch_size = 32;
  uint64_t seed = 0;
  int single_exit = -1;  // when set, replaces the multilayer combine by that exit's bare loss
  double augmentation_rate = 0.30;
  int max_len = 128;
  double p_cross = 0.5;
  double mlm_rate = 0.15;
  double temperature = 10.0;
  bool use_nsp = false;  // next-snippet comparator instead of context classification

  void validate(const EncoderConfig& cfg) const {
    if (steps < 0) throw std::invalid_argument("TrainPlan: steps must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainPlan: batch_size must be >= 1");
    if (single_exit >= 0) {
      bool found = false;
      for (int e : cfg.exit_set) found |= (e == single_exit);
      if (!found) throw std::invalid_argument("TrainPlan: single_exit must be in the exit set");
    }
    if (augmentation_rate < 0 || augmentation_rate > 1)
      throw std::invalid_argument("TrainPlan: augmentation_rate must be in [0,1]");
  }
};

// JSON round trips

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"depth", c.depth},       {"exit_set", c.exit_set},       {"hidden", c.hidden},
       {"n_heads", c.n_heads},   {"n_kv_heads", c.n_kv_heads},   {"intermediate", c.intermediate},
       {"rope_theta", c.rope_theta}, {"vocab_size", c.vocab_size}, {"max_seq", c.max_seq},
       {"proj_dim", c.proj_dim}};
}
inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  j.at("depth").get_to(c.depth);
  j.at("exit_set").get_to(c.exit_set);
  j.at("hidden").get_to(c.hidden);
  j.at("n_heads").get_to(c.n_heads);
  j.at("n_kv_heads").get_to(c.n_kv_heads);
  j.at("intermediate").get_to(c.intermediate);
  j.at("rope_theta").get_to(c.rope_theta);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("max_seq").get_to(c.max_seq);
  j.at("proj_dim").get_to(c.proj_dim);
}

inline void to_json(nlohmann::json& j, const OptimizerConfig& o) {
  j = {{"beta1", o.beta1},   {"beta2", o.beta2},
       {"eps", o.eps},       {"weight_decay", o.weight_decay},
       {"base_lr", o.base_lr}, {"warmup_steps", o.warmup_steps},
       {"decay_milestones", o.decay_milestones}, {"clip_norm", o.clip_norm}};
}
inline void from_json(const nlohmann::json& j, OptimizerConfig& o) {
  j.at("beta1").get_to(o.beta1);
  j.at("beta2").get_to(o.beta2);
  j.at("eps").get_to(o.eps);
  j.at("weight_decay").get_to(o.weight_decay);
  j.at("base_lr").get_to(o.base_lr);
  j.at("warmup_steps").get_to(o.warmup_steps);
  j.at("decay_milestones").get_to(o.decay_milestones);
  o.clip_norm = j.value("clip_norm", 1.0);
}

inline void to_json(nlohmann::json& j, const TrainPlan& p) {
  static const char* names[] = {"pretrain", "finetune_retrieval", "finetune_clone"};
  j = {{"mode", names[static_cast<int>(p.mode)]},
       {"steps", p.steps},
       {"batch_size", p.batch_size},
       {"seed", p.seed},
       {"single_exit", p.single_exit},
       {"augmentation_rate", p.augmentation_rate},
       {"max_len", p.max_len},
       {"p_cross", p.p_cross},
       {"mlm_rate", p.mlm_rate},
       {"temperature", p.temperature},
       {"use_nsp", p.use_nsp}};
}
inline void from_json(const nlohmann::json& j, TrainPlan& p) {
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "pretrain") p.mode = TrainPlan::Mode::pretrain;
  else if (mode == "finetune_retrieval") p.mode = TrainPlan::Mode::finetune_retrieval;
  else if (mode == "finetune_clone") p.mode = TrainPlan::Mode::finetune_clone;
  else throw std::invalid_argument("TrainPlan: unknown mode '" + mode + "'");
  j.at("steps").get_to(p.steps);
  j.at("batch_size").get_to(p.batch_size);
  j.at("seed").get_to(p.seed);
  p.single_exit = j.value("single_exit", -1);
  p.augmentation_rate = j.value("augmentation_rate", 0.30);
  p.max_len = j.value("max_len", 128);
  p.p_cross = j.value("p_cross", 0.5);
  p.mlm_rate = j.value("mlm_rate", 0.15);
  p.temperature = j.value("temperature", 10.0);
  p.use_nsp = j.value("use_nsp", false);
}

}  // namespace mosekit
