// Command-line front end: every pipeline stage as a subcommand with
// file-based inputs/outputs, a manifest next to each output set, and a
// one-line JSON summary on stdout.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mosekit/checkpoint.hpp"
#include "mosekit/datagen.hpp"
#include "mosekit/dedup.hpp"
#include "mosekit/evalkit.hpp"
#include "mosekit/pipeline.hpp"
#include "mosekit/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mosekit;

namespace {

constexpr const char* kVersion = "mosekit 0.1.0";

// exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool check_mode() {
  const char* v = std::getenv("MOSEKIT_CHECK_MODE");
  return v && std::string(v) == "1";
}

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return j;
}

// records files are JSON-lines; a top-level JSON array is accepted too
json load_records(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open " + path);
  std::string first_line;
  json out = json::array();
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    std::string_view sv(line);
    while (!sv.empty() && (sv.front() == ' ' || sv.front() == '\t')) sv.remove_prefix(1);
    if (sv.empty()) continue;
    if (first && sv.front() == '[') {
      f.seekg(0);
      json arr;
      f >> arr;
      return arr;
    }
    first = false;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw std::invalid_argument(path + ": " + e.what());
    }
  }
  return out;
}

// atomic write: temp file in the same directory, then rename
void write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::invalid_argument("cannot open " + tmp);
    f << content;
  }
  fs::rename(tmp, path);
}

void write_json(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

template <typename T>
void write_jsonl(const std::string& path, const std::vector<T>& records) {
  std::string out;
  for (const auto& r : records) out += json(r).dump() + "\n";
  write_file(path, out);
}

// dotted-key override, value parsed as JSON when possible
void apply_set(json& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + kv);
  const std::string key = kv.substr(0, eq), raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &cfg;
  size_t start = 0;
  for (;;) {
    const size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw std::invalid_argument("--set: empty key segment in " + kv);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

struct ResolvedConfig {
  EncoderConfig encoder;
  OptimizerConfig optimizer;
  TrainPlan plan;
  json raw;  // the merged JSON the three structs were read from
};

ResolvedConfig resolve_config(const std::string& config_path,
                              const std::vector<std::string>& sets) {
  ResolvedConfig rc;
  json base;
  base["encoder"] = rc.encoder;
  base["optimizer"] = rc.optimizer;
  base["plan"] = rc.plan;
  if (!config_path.empty()) {
    const json file = load_json(config_path);
    for (const auto& section : {"encoder", "optimizer", "plan"})
      if (file.contains(section))
        for (const auto& [k, v] : file.at(section).items()) base[section][k] = v;
  }
  for (const auto& kv : sets) apply_set(base, kv);
  rc.encoder = base.at("encoder").get<EncoderConfig>();
  rc.optimizer = base.at("optimizer").get<OptimizerConfig>();
  rc.plan = base.at("plan").get<TrainPlan>();
  rc.raw = base;
  return rc;
}

std::vector<int> resolve_exits(const std::string& spec, const EncoderConfig& cfg) {
  if (spec == "all") return cfg.exit_set;
  std::vector<int> exits;
  size_t start = 0;
  while (start <= spec.size()) {
    const size_t comma = spec.find(',', start);
    const std::string part = spec.substr(start, comma - start);
    if (part.empty()) throw std::invalid_argument("--exits: empty element in '" + spec + "'");
    exits.push_back(std::stoi(part));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  for (int e : exits)
    if (std::find(cfg.exit_set.begin(), cfg.exit_set.end(), e) == cfg.exit_set.end())
      throw std::invalid_argument("--exits: " + std::to_string(e) + " is not in the exit set");
  return exits;
}

int run_command(const std::string& name, const json& args);

void finish(const std::string& name, const json& args, json summary,
            const std::vector<std::string>& outputs, double wall_sec) {
  const std::string out_dir = args.at("out").get<std::string>();
  json manifest = {{"command", name},
                   {"args", args},
                   {"seed", args.value("seed", uint64_t(0))},
                   {"outputs", outputs},
                   {"version", kVersion},
                   {"check_mode", check_mode()},
                   {"wall_clock_sec", wall_sec}};
  write_json(out_dir + "/" + name + ".manifest.json", manifest);
  summary["command"] = name;
  summary["out"] = out_dir;
  std::cout << summary.dump() << "\n";
}

// ---- gen ----

int cmd_gen(const json& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const uint64_t seed = args.at("seed");
  const std::string out = args.at("out");
  fs::create_directories(out);
  std::vector<std::string> langs = args.value("langs", datagen::kToyLangs);

  auto corpus = datagen::gen_corpus(seed, args.at("repos"), args.at("per_repo"), langs);
  json summary;
  std::vector<std::string> outputs;

  const double dup_rate = args.value("near_dup_rate", 0.0);
  if (dup_rate > 0) {
    auto planted = datagen::plant_near_duplicates(corpus, dup_rate, seed + 1);
    corpus = planted.corpus;
    json pm = json::array();
    for (const auto& [orig, copy] : planted.planted) pm.push_back({{"original", orig}, {"copy", copy}});
    write_json(out + "/planted.json", pm);
    outputs.push_back(out + "/planted.json");
    summary["planted"] = planted.planted.size();
  }
  write_jsonl(out + "/corpus.jsonl", corpus);
  outputs.push_back(out + "/corpus.jsonl");
  summary["snippets"] = corpus.size();

  const int n_triplets = args.value("triplets", 0);
  if (n_triplets > 0) {
    const auto triplets = datagen::gen_triplets(seed + 2, n_triplets, langs);
    write_jsonl(out + "/triplets.jsonl", triplets);
    outputs.push_back(out + "/triplets.jsonl");
    summary["triplets"] = triplets.size();

    // labeled clone pairs derived from the triplets: matched code sides are
    // positives, mismatched ones negatives
    const int n_pairs = args.value("clone_pairs", 0);
    if (n_pairs > 0) {
      Rng rng(seed + 3);
      std::vector<json> pairs;
      for (int i = 0; i < n_pairs; ++i) {
        const auto& a = triplets[rng.below(triplets.size())];
        if (rng.bernoulli(0.5)) {
          pairs.push_back({{"text_a", a.code_a.text}, {"text_b", a.code_b.text}, {"label", 1}});
        } else {
          size_t j = rng.below(triplets.size() - 1);
          if (triplets[j].id == a.id) j = triplets.size() - 1;
          pairs.push_back(
              {{"text_a", a.code_a.text}, {"text_b", triplets[j].code_b.text}, {"label", 0}});
        }
      }
      write_jsonl(out + "/pairs.jsonl", pairs);
      outputs.push_back(out + "/pairs.jsonl");
      summary["clone_pairs"] = n_pairs;
    }
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish("gen", args, summary, outputs, wall);
  return 0;
}

// ---- dedup ----

int cmd_dedup(const json& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string out = args.at("out");
  fs::create_directories(out);
  const double threshold = args.value("threshold", 0.7);
  const uint64_t seed = args.at("seed");
  json summary;
  std::vector<std::string> outputs;

  if (args.contains("in") && !args.at("in").get<std::string>().empty()) {
    const auto corpus = load_records(args.at("in")).get<std::vector<Snippet>>();
    const auto result = dedup::lsh_dedup(corpus, threshold, 256, seed);
    write_jsonl(out + "/deduped.jsonl", result.kept);
    json removed = json::array();
    for (const auto& [rid, kid] : result.removed)
      removed.push_back({{"removed", rid}, {"kept", kid}});
    write_json(out + "/removed.json", removed);
    outputs.insert(outputs.end(), {out + "/deduped.jsonl", out + "/removed.json"});
    summary["kept"] = result.kept.size();
    summary["removed"] = result.removed.size();
  }
  if (args.contains("triplets") && !args.at("triplets").get<std::string>().empty()) {
    const auto triplets = load_records(args.at("triplets")).get<std::vector<Triplet>>();
    const auto result = dedup::dedup_triplets(triplets, threshold, 256, seed);
    write_jsonl(out + "/triplets_deduped.jsonl", result.kept);
    write_json(out + "/triplets_removed.json", result.removed_ids);
    outputs.insert(outputs.end(), {out + "/triplets_deduped.jsonl", out + "/triplets_removed.json"});
    summary["triplets_kept"] = result.kept.size();
    summary["triplets_removed"] = result.removed_ids.size();
  }
  if (summary.empty()) throw std::invalid_argument("dedup: need --in and/or --triplets");
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish("dedup", args, summary, outputs, wall);
  return 0;
}

// ---- training commands ----

template <typename T>
train::StepCallback<T> log_writer(std::ofstream& log_file) {
  return [&log_file](const train::StepLog& log, const model::ParamSet<T>&) {
    json j = {{"step", log.step}, {"combined", log.combined}, {"lr", log.lr},
              {"per_exit", json::object()}, {"alpha", json::object()}};
    for (const auto& [e, l] : log.per_exit) j["per_exit"][std::to_string(e)] = l;
    for (const auto& [e, a] : log.alpha) j["alpha"][std::to_string(e)] = a;
    log_file << j.dump() << "\n";
    return true;
  };
}

template <typename T>
int do_pretrain(const json& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rc = [&] {
    ResolvedConfig r;
    r.encoder = args.at("config").at("encoder").get<EncoderConfig>();
    r.optimizer = args.at("config").at("optimizer").get<OptimizerConfig>();
    r.plan = args.at("config").at("plan").get<TrainPlan>();
    return r;
  }();
  const std::string out = args.at("out");
  fs::create_directories(out);
  const auto corpus = load_records(args.at("corpus")).get<std::vector<Snippet>>();
  if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");

  const auto vocab = tok::build_vocab(corpus, args.value("vocab_size", 4096));
  EncoderConfig cfg = rc.encoder;
  if (cfg.vocab_size == 0) cfg.vocab_size = vocab.size();
  TrainPlan plan = rc.plan;
  plan.seed = args.at("seed");

  auto params = model::init<T>(cfg, plan.seed);
  std::ofstream log_file(out + "/train_log.jsonl", std::ios::trunc);
  try {
    const auto result = train::pretrain(params, corpus, vocab, plan, rc.optimizer,
                                        log_writer<T>(log_file));
    vocab.save(out + "/vocab.json");
    ckpt::save_checkpoint(out + "/checkpoint.bin", result.params, plan.steps);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    finish("pretrain", args,
           {{"steps", result.log.size()},
            {"final_loss", result.log.empty() ? 0.0 : result.log.back().combined},
            {"vocab_size", vocab.size()}},
           {out + "/checkpoint.bin", out + "/vocab.json", out + "/train_log.jsonl"}, wall);
  } catch (const std::runtime_error& e) {
    throw NumericError(e.what());
  }
  return 0;
}

template <typename T>
int do_finetune(const json& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string task = args.at("task");
  const std::string out = args.at("out");
  fs::create_directories(out);
  const OptimizerConfig opt = args.at("config").at("optimizer").get<OptimizerConfig>();
  TrainPlan plan = args.at("config").at("plan").get<TrainPlan>();
  plan.seed = args.at("seed");

  auto params = ckpt::load_checkpoint<T>(args.at("ckpt"));
  const auto vocab = tok::Vocab::load(args.at("vocab"));
  if (vocab.size() != params.cfg.vocab_size)
    throw std::invalid_argument("finetune: vocabulary size does not match the checkpoint");

  std::ofstream log_file(out + "/train_log.jsonl", std::ios::trunc);
  try {
    train::TrainResult<T> result;
    if (task == "retrieval") {
      const auto triplets = load_records(args.at("data")).get<std::vector<Triplet>>();
      result = train::finetune_retrieval(params, triplets, vocab, plan, opt, log_writer<T>(log_file));
    } else if (task == "clone") {
      std::vector<train::ClonePair> pairs;
      for (const auto& j : load_records(args.at("data")))
        pairs.push_back({j.at("text_a"), j.at("text_b"), j.at("label")});
      result = train::finetune_clone(params, pairs, vocab, plan, opt, log_writer<T>(log_file));
    } else {
      throw std::invalid_argument("finetune: task must be retrieval or clone");
    }
    ckpt::save_checkpoint(out + "/checkpoint.bin", result.params, plan.steps);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    finish("finetune", args,
           {{"task", task},
            {"steps", result.log.size()},
            {"final_loss", result.log.empty() ? 0.0 : result.log.back().combined}},
           {out + "/checkpoint.bin", out + "/train_log.jsonl"}, wall);
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw NumericError(e.what());
  }
  return 0;
}

// ---- embed ----

template <typename T>
int do_embed(const json& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string out = args.at("out");
  fs::create_directories(out);
  auto params = ckpt::load_checkpoint<T>(args.at("ckpt"));
  const auto vocab = tok::Vocab::load(args.at("vocab"));
  const auto exits = resolve_exits(args.value("exits", "all"), params.cfg);

  std::vector<std::string> ids, texts;
  for (const auto& j : load_records(args.at("in"))) {
    ids.push_back(j.at("id"));
    texts.push_back(j.at("text"));
  }
  if (texts.empty()) throw std::invalid_argument("embed: no input texts");

  const int max_len = args.value("max_len", 128);
  const auto emb = pipe::embed_texts(params, vocab, texts, exits, max_len);
  std::vector<std::string> outputs;
  for (int e : exits) {
    json j = {{"exit", e}, {"ids", ids}, {"vectors", emb.at(e)}};
    const std::string path = out + "/embeddings_exit" + std::to_string(e) + ".json";
    write_json(path, j);
    outputs.push_back(path);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish("embed", args, {{"texts", texts.size()}, {"exits", exits}}, outputs, wall);
  return 0;
}

// ---- eval ----

template <typename T>
int do_eval(const json& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string task = args.at("task");
  const std::string out = args.at("out");
  fs::create_directories(out);
  auto params = ckpt::load_checkpoint<T>(args.at("ckpt"));
  const auto vocab = tok::Vocab::load(args.at("vocab"));
  const auto exits = resolve_exits(args.value("exits", "all"), params.cfg);
  const int max_len = args.value("max_len", 128);

  std::vector<eval::ExitReport> reports;
  std::vector<std::string> warnings;
  if (task == "retrieval") {
    const auto triplets = load_records(args.at("data")).get<std::vector<Triplet>>();
    const int nd = args.value("n_distractors", 99);
    const uint64_t seed = args.at("seed");
    const auto pool = pipe::code_pool(triplets);
    const std::string sub = args.value("subtask", "both");
    if (sub == "t2c" || sub == "both") {
      auto r = pipe::retrieval_eval(params, vocab, pipe::t2c_queries(triplets), pool, exits, nd,
                                    seed, "t2c", max_len);
      reports.insert(reports.end(), r.begin(), r.end());
    }
    if (sub == "c2c" || sub == "both") {
      auto r = pipe::retrieval_eval(params, vocab, pipe::c2c_queries(triplets), pool, exits, nd,
                                    seed, "c2c", max_len);
      reports.insert(reports.end(), r.begin(), r.end());
    }
  } else if (task == "clone") {
    std::vector<train::ClonePair> pairs;
    for (const auto& j : load_records(args.at("data")))
      pairs.push_back({j.at("text_a"), j.at("text_b"), j.at("label")});
    reports = pipe::clone_eval(params, vocab, pairs, exits, args.value("threshold", 0.5), max_len,
                               &warnings);
  } else {
    throw std::invalid_argument("eval: task must be retrieval or clone");
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  write_json(out + "/reports.json", reports);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish("eval", args, {{"task", task}, {"reports", reports.size()}}, {out + "/reports.json"},
         wall);
  return 0;
}

// ---- report ----

int cmd_report(const json& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string out = args.at("out");
  fs::create_directories(out);
  std::vector<eval::ExitReport> reports;
  for (const auto& path : args.at("in").get<std::vector<std::string>>()) {
    const auto r = load_json(path).get<std::vector<eval::ExitReport>>();
    reports.insert(reports.end(), r.begin(), r.end());
  }
  eval::tradeoff_report(reports, out + "/tradeoff.csv", out + "/tradeoff_plot.json");
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish("report", args, {{"rows", reports.size()}},
         {out + "/tradeoff.csv", out + "/tradeoff_plot.json"}, wall);
  return 0;
}

// ---- permtest ----

int cmd_permtest(const json& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string out = args.at("out");
  fs::create_directories(out);
  const auto a = load_json(args.at("a")).get<std::vector<double>>();
  const auto b = load_json(args.at("b")).get<std::vector<double>>();
  const auto result = eval::permutation_test(a, b, args.value("n_perm", 10000),
                                             args.value("alpha", 0.05), args.at("seed"));
  write_json(out + "/permtest.json",
             {{"p_value", result.p_value}, {"reject", result.reject}});
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish("permtest", args, {{"p_value", result.p_value}, {"reject", result.reject}},
         {out + "/permtest.json"}, wall);
  return 0;
}

// ---- selfcheck ----

int cmd_selfcheck(const json& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string out = args.at("out");
  fs::create_directories(out);
  int failures = 0;
  auto report = [&](const std::string& name, bool ok, const std::string& detail = "") {
    std::cerr << (ok ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : " (" + detail + ")")
              << "\n";
    if (!ok) ++failures;
  };

  // gradient check on a tiny config, 64-bit
  {
    EncoderConfig cfg;
    cfg.depth = 2; cfg.exit_set = {1, 2}; cfg.hidden = 8; cfg.n_heads = 2; cfg.n_kv_heads = 1;
    cfg.intermediate = 16; cfg.vocab_size = 16; cfg.max_seq = 12; cfg.proj_dim = 4;
    auto p = model::init<double>(cfg, 42);
    Rng jitter(7);
    p.for_each([&](const std::string&, double* d, long sz) {
      for (long i = 0; i < sz; ++i) d[i] += 0.01 * jitter.normal();
    });
    std::vector<pack::PackedExample> exs;
    Rng er(3);
    for (int i = 0; i < 2; ++i) {
      pack::PackedExample ex;
      ex.ids.resize(12);
      ex.valid.assign(12, 1);
      for (int j = 0; j < 12; ++j) ex.ids[j] = 5 + static_cast<int>(er.below(11));
      ex.ids[0] = 0; ex.valid[0] = 0; ex.ids[11] = tok::kCls; ex.cls_pos = 11;
      ex.icc_label = i ? pack::IccLabel::cross_repo : pack::IccLabel::same_repo;
      ex.mlm_targets = {{4, 5 + static_cast<int>(er.below(11))},
                        {7, 5 + static_cast<int>(er.below(11))}};
      exs.push_back(ex);
    }
    auto loss = [&](const model::ParamSet<double>& q, model::ParamSet<double>* g) {
      return static_cast<double>(train::pretrain_loss(q, exs, -1, g).combined);
    };
    auto grads = model::ParamSet<double>::zeros(cfg);
    loss(p, &grads);
    std::vector<double*> gptr;
    grads.for_each([&](const std::string&, double* d, long) { gptr.push_back(d); });
    double worst = 0;
    size_t ti = 0;
    p.for_each([&](const std::string&, double* d, long sz) {
      Rng pick(ti * 977 + 13);
      for (int t = 0; t < 3 && t < sz; ++t) {
        const long i = static_cast<long>(pick.below(sz));
        const double h = 1e-5, o = d[i];
        d[i] = o + h;
        const double lp = loss(p, nullptr);
        d[i] = o - h;
        const double lm = loss(p, nullptr);
        d[i] = o;
        const double num = (lp - lm) / (2 * h), ana = gptr[ti][i];
        const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-8});
        if (std::abs(num - ana) > 1e-7 && rel > worst) worst = rel;
      }
      ++ti;
    });
    report("gradient_check", worst <= 1e-4, "worst rel err " + std::to_string(worst));

    // prefix consistency: early exit equals the same layer of a deeper run
    bool prefix_ok = true;
    const auto batch = model::Batch::from_examples(exs);
    const auto full = model::forward(p, batch, 2);
    const auto early = model::forward(p, batch, 1);
    prefix_ok &= (full.hidden.at(1) - early.hidden.at(1)).cwiseAbs().maxCoeff() <= 1e-6;
    report("prefix_consistency", prefix_ok);
  }

  // masking statistics over >= 100k maskable tokens
  {
    Rng rng(11);
    long total = 0, masked = 0, to_mask = 0, to_rand = 0, kept = 0;
    while (total < 100000) {
      pack::PackedExample ex;
      ex.ids.assign(128, 10);
      ex.valid.assign(128, 1);
      ex.cls_pos = 127;
      ex.ids[127] = tok::kCls;
      pack::apply_mlm_mask(ex, 0.15, rng, 64);
      total += 127;
      masked += static_cast<long>(ex.mlm_targets.size());
      for (auto [pos, orig] : ex.mlm_targets) {
        (void)orig;
        if (ex.ids[pos] == tok::kMask) ++to_mask;
        else if (ex.ids[pos] == 10) ++kept;
        else ++to_rand;
      }
    }
    const double rate = double(masked) / total;
    const double fm = double(to_mask) / masked, fr = double(to_rand) / masked,
                 fk = double(kept) / masked;
    // random replacement can coincide with the original token; allow for it
    report("masking_stats",
           std::abs(rate - 0.15) <= 0.01 && std::abs(fm - 0.80) <= 0.02 &&
               std::abs(fr - 0.10) <= 0.022 && std::abs(fk - 0.10) <= 0.022,
           "rate " + std::to_string(rate));
  }

  // ranking metrics against a brute-force reference
  {
    Rng rng(17);
    bool ok = true;
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 3 + static_cast<int>(rng.below(8));
      eval::RankedList l;
      l.query_id = "q";
      for (int i = 0; i < n; ++i) l.candidates.push_back("c" + std::to_string(i));
      l.relevant = {"c" + std::to_string(rng.below(n))};
      const std::vector<eval::RankedList> ls = {l};
      int rank = 0;
      for (int i = 0; i < n; ++i)
        if (l.relevant.count(l.candidates[i])) rank = i + 1;
      ok &= std::abs(eval::mrr(ls) - 1.0 / rank) <= 1e-12;
      ok &= std::abs(eval::ndcg_binary(ls) - 1.0 / std::log2(rank + 1.0)) <= 1e-12;
      ok &= std::abs(eval::map_multi(ls) - 1.0 / rank) <= 1e-12;
      ok &= std::abs(eval::recall_at_k(ls, 1) - (rank == 1 ? 1.0 : 0.0)) <= 1e-12;
    }
    report("metric_oracles", ok);
  }

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish("selfcheck", args, {{"failures", failures}}, {}, wall);
  if (failures > 0) return 3;
  return 0;
}

// ---- dispatch + rerun ----

int run_command(const std::string& name, const json& args) {
  const bool f64 = check_mode();
  if (name == "gen") return cmd_gen(args);
  if (name == "dedup") return cmd_dedup(args);
  if (name == "pretrain") return f64 ? do_pretrain<double>(args) : do_pretrain<float>(args);
  if (name == "finetune") return f64 ? do_finetune<double>(args) : do_finetune<float>(args);
  if (name == "embed") return f64 ? do_embed<double>(args) : do_embed<float>(args);
  if (name == "eval") return f64 ? do_eval<double>(args) : do_eval<float>(args);
  if (name == "report") return cmd_report(args);
  if (name == "permtest") return cmd_permtest(args);
  if (name == "selfcheck") return cmd_selfcheck(args);
  throw std::invalid_argument("unknown command " + name);
}

int cmd_rerun(const std::string& manifest_path, const std::string& out_override) {
  const json manifest = load_json(manifest_path);
  json args = manifest.at("args");
  if (!out_override.empty()) args["out"] = out_override;
  return run_command(manifest.at("command"), args);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-exit encoder pipeline"};
  app.require_subcommand(1);

  // common option storage
  std::string config_path, out_dir = ".", exits = "all", in_path, data_path, ckpt_path,
              vocab_path;
  uint64_t seed = 0;
  int threads = 1;
  std::vector<std::string> sets;
  auto add_common = [&](CLI::App* sub, bool with_config = true) {
    sub->add_option("--seed", seed, "RNG seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--threads", threads, "worker cap (default 1, deterministic)");
    if (with_config) {
      sub->add_option("--config", config_path, "JSON config file");
      sub->add_option("--set", sets, "dotted-key override, key=value");
    }
  };

  // gen
  int repos = 4, per_repo = 16, n_triplets = 0, clone_pairs = 0;
  double near_dup_rate = 0.0;
  std::vector<std::string> langs;
  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  add_common(gen, false);
  gen->add_option("--repos", repos);
  gen->add_option("--per-repo", per_repo);
  gen->add_option("--triplets", n_triplets);
  gen->add_option("--clone-pairs", clone_pairs);
  gen->add_option("--near-dup-rate", near_dup_rate);
  gen->add_option("--langs", langs);

  // dedup
  std::string triplets_path;
  double threshold = 0.7;
  auto* dd = app.add_subcommand("dedup", "near-duplicate removal");
  add_common(dd, false);
  dd->add_option("--in", in_path, "corpus JSON");
  dd->add_option("--triplets", triplets_path, "triplet JSON");
  dd->add_option("--threshold", threshold);

  // pretrain
  int vocab_size = 4096;
  auto* pt = app.add_subcommand("pretrain", "masked-token + context pre-training");
  add_common(pt);
  pt->add_option("--corpus", in_path)->required();
  pt->add_option("--vocab-size", vocab_size);

  // finetune
  std::string task;
  auto* ft = app.add_subcommand("finetune", "retrieval or clone fine-tuning");
  add_common(ft);
  ft->add_option("task", task, "retrieval|clone")->required();
  ft->add_option("--ckpt", ckpt_path)->required();
  ft->add_option("--vocab", vocab_path)->required();
  ft->add_option("--data", data_path, "triplets or labeled pairs JSON")->required();

  // embed
  int max_len = 128;
  auto* em = app.add_subcommand("embed", "write per-exit embeddings");
  add_common(em, false);
  em->add_option("--ckpt", ckpt_path)->required();
  em->add_option("--vocab", vocab_path)->required();
  em->add_option("--in", in_path, "JSON array of {id, text}")->required();
  em->add_option("--exits", exits);
  em->add_option("--max-len", max_len);

  // eval
  int n_distractors = 99;
  double clone_threshold = 0.5;
  std::string subtask = "both";
  auto* ev = app.add_subcommand("eval", "retrieval or clone evaluation");
  add_common(ev, false);
  ev->add_option("task", task, "retrieval|clone")->required();
  ev->add_option("--ckpt", ckpt_path)->required();
  ev->add_option("--vocab", vocab_path)->required();
  ev->add_option("--data", data_path)->required();
  ev->add_option("--exits", exits);
  ev->add_option("--n-distractors", n_distractors);
  ev->add_option("--threshold", clone_threshold);
  ev->add_option("--subtask", subtask, "t2c|c2c|both");
  ev->add_option("--max-len", max_len);

  // report
  std::vector<std::string> report_in;
  auto* rp = app.add_subcommand("report", "accuracy-vs-cost trade-off table");
  add_common(rp, false);
  rp->add_option("--in", report_in, "reports JSON files")->required();

  // permtest
  std::string a_path, b_path;
  int n_perm = 10000;
  double alpha = 0.05;
  auto* pm = app.add_subcommand("permtest", "two-sample permutation test");
  add_common(pm, false);
  pm->add_option("--a", a_path)->required();
  pm->add_option("--b", b_path)->required();
  pm->add_option("--n-perm", n_perm);
  pm->add_option("--alpha", alpha);

  // selfcheck
  auto* sc = app.add_subcommand("selfcheck", "run the built-in invariant suite");
  add_common(sc, false);

  // rerun
  std::string manifest_path, out_override;
  auto* rr = app.add_subcommand("rerun", "re-execute a command from its manifest");
  rr->add_option("manifest", manifest_path)->required();
  rr->add_option("--out", out_override, "redirect outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    json args = {{"seed", seed}, {"out", out_dir}, {"threads", threads}};
    if (gen->parsed()) {
      args["repos"] = repos;
      args["per_repo"] = per_repo;
      args["triplets"] = n_triplets;
      args["clone_pairs"] = clone_pairs;
      args["near_dup_rate"] = near_dup_rate;
      if (!langs.empty()) args["langs"] = langs;
      return run_command("gen", args);
    }
    if (dd->parsed()) {
      args["in"] = in_path;
      args["triplets"] = triplets_path;
      args["threshold"] = threshold;
      return run_command("dedup", args);
    }
    if (pt->parsed()) {
      args["config"] = resolve_config(config_path, sets).raw;
      args["corpus"] = in_path;
      args["vocab_size"] = vocab_size;
      return run_command("pretrain", args);
    }
    if (ft->parsed()) {
      args["config"] = resolve_config(config_path, sets).raw;
      args["task"] = task;
      args["ckpt"] = ckpt_path;
      args["vocab"] = vocab_path;
      args["data"] = data_path;
      return run_command("finetune", args);
    }
    if (em->parsed()) {
      args["ckpt"] = ckpt_path;
      args["vocab"] = vocab_path;
      args["in"] = in_path;
      args["exits"] = exits;
      args["max_len"] = max_len;
      return run_command("embed", args);
    }
    if (ev->parsed()) {
      args["task"] = task;
      args["ckpt"] = ckpt_path;
      args["vocab"] = vocab_path;
      args["data"] = data_path;
      args["exits"] = exits;
      args["n_distractors"] = n_distractors;
      args["threshold"] = clone_threshold;
      args["subtask"] = subtask;
      args["max_len"] = max_len;
      return run_command("eval", args);
    }
    if (rp->parsed()) {
      args["in"] = report_in;
      return run_command("report", args);
    }
    if (pm->parsed()) {
      args["a"] = a_path;
      args["b"] = b_path;
      args["n_perm"] = n_perm;
      args["alpha"] = alpha;
      return run_command("permtest", args);
    }
    if (sc->parsed()) return run_command("selfcheck", args);
    if (rr->parsed()) return cmd_rerun(manifest_path, out_override);
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
