// Python bindings for the core operations: data generation, dedup,
// tokenization, the encoder, training loops, evaluation and checkpoints.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mosekit/checkpoint.hpp"
#include "mosekit/datagen.hpp"
#include "mosekit/dedup.hpp"
#include "mosekit/pipeline.hpp"

namespace py = pybind11;
using namespace mosekit;
using nlohmann::json;

namespace {

json py_to_json(const py::handle& h) {
  if (h.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(h)) return h.cast<bool>();
  if (py::isinstance<py::int_>(h)) return h.cast<long long>();
  if (py::isinstance<py::float_>(h)) return h.cast<double>();
  if (py::isinstance<py::str>(h)) return h.cast<std::string>();
  if (py::isinstance<py::dict>(h)) {
    json j = json::object();
    for (auto item : h.cast<py::dict>()) j[item.first.cast<std::string>()] = py_to_json(item.second);
    return j;
  }
  if (py::isinstance<py::list>(h) || py::isinstance<py::tuple>(h)) {
    json j = json::array();
    for (auto item : h.cast<py::sequence>()) j.push_back(py_to_json(item));
    return j;
  }
  throw std::invalid_argument("unsupported value type for JSON conversion");
}

py::object json_to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null: return py::none();
    case json::value_t::boolean: return py::bool_(j.get<bool>());
    case json::value_t::number_integer: return py::int_(j.get<long long>());
    case json::value_t::number_unsigned: return py::int_(j.get<unsigned long long>());
    case json::value_t::number_float: return py::float_(j.get<double>());
    case json::value_t::string: return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const auto& v : j) out.append(json_to_py(v));
      return out;
    }
    case json::value_t::object: {
      py::dict out;
      for (auto it = j.begin(); it != j.end(); ++it) out[py::str(it.key())] = json_to_py(it.value());
      return out;
    }
    default: throw std::invalid_argument("unsupported JSON value");
  }
}

// Partial dicts override the desk-scale defaults.
template <typename Cfg>
Cfg merged_config(const py::dict& overrides) {
  json base = Cfg{};
  base.update(py_to_json(overrides));
  return base.get<Cfg>();
}

TrainPlan merged_plan(const py::dict& overrides) {
  json base = TrainPlan{};
  base.update(py_to_json(overrides));
  return base.get<TrainPlan>();
}

std::vector<Snippet> snippets_from(const py::list& items) {
  return py_to_json(items).get<std::vector<Snippet>>();
}

std::vector<Triplet> triplets_from(const py::list& items) {
  return py_to_json(items).get<std::vector<Triplet>>();
}

std::vector<train::ClonePair> pairs_from(const py::list& items) {
  std::vector<train::ClonePair> out;
  for (const auto& j : py_to_json(items)) {
    out.push_back({j.at("text_a").get<std::string>(), j.at("text_b").get<std::string>(),
                   j.at("label").get<int>()});
  }
  return out;
}

std::vector<eval::RankedList> lists_from(const py::list& items) {
  std::vector<eval::RankedList> out;
  for (const auto& j : py_to_json(items)) {
    eval::RankedList l;
    l.query_id = j.value("query_id", "");
    j.at("candidates").get_to(l.candidates);
    for (const auto& r : j.at("relevant")) l.relevant.insert(r.get<std::string>());
    out.push_back(std::move(l));
  }
  return out;
}

struct PyModel {
  model::ParamSet<double> params;
  long long step = 0;
};

py::list log_to_py(const std::vector<train::StepLog>& log) {
  py::list out;
  for (const auto& l : log) {
    py::dict d;
    d["step"] = l.step;
    d["combined"] = l.combined;
    d["lr"] = l.lr;
    d["per_exit"] = l.per_exit;
    d["alpha"] = l.alpha;
    out.append(d);
  }
  return out;
}

py::list reports_to_py(const std::vector<eval::ExitReport>& reports) {
  return json_to_py(json(reports)).cast<py::list>();
}

}  // namespace

PYBIND11_MODULE(_mosekit, m) {
  m.doc() = "multi-exit code-retrieval encoder toolkit";

  // ---- data generation and dedup ----
  m.def(
      "gen_corpus",
      [](uint64_t seed, int n_repos, int per_repo, const std::vector<std::string>& langs) {
        return json_to_py(json(datagen::gen_corpus(seed, n_repos, per_repo, langs)));
      },
      py::arg("seed"), py::arg("n_repos"), py::arg("per_repo"),
      py::arg("langs") = datagen::kToyLangs);
  m.def(
      "gen_triplets",
      [](uint64_t seed, int n, const std::vector<std::string>& langs) {
        return json_to_py(json(datagen::gen_triplets(seed, n, langs)));
      },
      py::arg("seed"), py::arg("n"), py::arg("langs") = datagen::kToyLangs);
  m.def(
      "plant_near_duplicates",
      [](const py::list& corpus, double rate, uint64_t seed) {
        const auto res = datagen::plant_near_duplicates(snippets_from(corpus), rate, seed);
        return py::make_tuple(json_to_py(json(res.corpus)), json_to_py(json(res.planted)));
      },
      py::arg("corpus"), py::arg("rate"), py::arg("seed"));
  m.def(
      "lsh_dedup",
      [](const py::list& corpus, double threshold) {
        const auto res = dedup::lsh_dedup(snippets_from(corpus), threshold);
        return py::make_tuple(json_to_py(json(res.kept)), json_to_py(json(res.removed)));
      },
      py::arg("corpus"), py::arg("threshold") = 0.7);
  m.def("exact_jaccard", [](const std::string& a, const std::string& b) {
    return dedup::exact_jaccard(dedup::shingle(a), dedup::shingle(b));
  });
  m.def(
      "augment_code",
      [](const std::string& code, uint64_t seed) {
        Rng rng(seed);
        return train::augment_code(code, rng);
      },
      py::arg("code"), py::arg("seed"));

  // ---- tokenizer ----
  py::class_<tok::Vocab>(m, "Vocab")
      .def_static(
          "build",
          [](const std::vector<std::string>& texts, int max_size) {
            return tok::build_vocab(texts, max_size);
          },
          py::arg("texts"), py::arg("max_size") = 4096)
      .def_static("load", &tok::Vocab::load)
      .def("save", &tok::Vocab::save)
      .def("__len__", [](const tok::Vocab& v) { return v.size(); })
      .def("encode", [](const tok::Vocab& v, const std::string& t) { return tok::encode(v, t); })
      .def("decode",
           [](const tok::Vocab& v, const std::vector<int>& ids) { return tok::decode(v, ids); })
      .def("token_of", [](const tok::Vocab& v, int id) { return v.token_of(id); });

  // ---- model ----
  py::class_<PyModel>(m, "Model")
      .def_static(
          "init",
          [](const py::dict& cfg, uint64_t seed) {
            return PyModel{model::init<double>(merged_config<EncoderConfig>(cfg), seed), 0};
          },
          py::arg("config"), py::arg("seed") = 0)
      .def_static("load",
                  [](const std::string& path) {
                    PyModel pm{model::ParamSet<double>{}, 0};
                    pm.params = ckpt::load_checkpoint<double>(path, &pm.step);
                    return pm;
                  })
      .def("save", [](const PyModel& pm,
                      const std::string& path) { ckpt::save_checkpoint(path, pm.params, pm.step); })
      .def_property_readonly("step", [](const PyModel& pm) { return pm.step; })
      .def_property_readonly("config",
                             [](const PyModel& pm) { return json_to_py(json(pm.params.cfg)); })
      .def_property_readonly("num_params",
                             [](PyModel& pm) { return pm.params.num_params(); })
      .def(
          "embed",
          [](const PyModel& pm, const tok::Vocab& vocab, const std::vector<std::string>& texts,
             const std::vector<int>& exits, int max_len) {
            return pipe::embed_texts(pm.params, vocab, texts, exits, max_len);
          },
          py::arg("vocab"), py::arg("texts"), py::arg("exits"), py::arg("max_len") = 128);

  // ---- training ----
  m.def(
      "pretrain",
      [](const PyModel& pm, const py::list& corpus, const tok::Vocab& vocab, const py::dict& plan,
         const py::dict& opt) {
        const auto res =
            train::pretrain(pm.params, snippets_from(corpus), vocab, merged_plan(plan),
                            merged_config<OptimizerConfig>(opt));
        return py::make_tuple(PyModel{res.params, static_cast<long long>(res.log.size())},
                              log_to_py(res.log));
      },
      py::arg("model"), py::arg("corpus"), py::arg("vocab"), py::arg("plan") = py::dict(),
      py::arg("optimizer") = py::dict());
  m.def(
      "finetune_retrieval",
      [](const PyModel& pm, const py::list& triplets, const tok::Vocab& vocab,
         const py::dict& plan, const py::dict& opt) {
        const auto res =
            train::finetune_retrieval(pm.params, triplets_from(triplets), vocab,
                                      merged_plan(plan), merged_config<OptimizerConfig>(opt));
        return py::make_tuple(PyModel{res.params, static_cast<long long>(res.log.size())},
                              log_to_py(res.log));
      },
      py::arg("model"), py::arg("triplets"), py::arg("vocab"), py::arg("plan") = py::dict(),
      py::arg("optimizer") = py::dict());
  m.def(
      "finetune_clone",
      [](const PyModel& pm, const py::list& pairs, const tok::Vocab& vocab, const py::dict& plan,
         const py::dict& opt) {
        const auto res = train::finetune_clone(pm.params, pairs_from(pairs), vocab,
                                               merged_plan(plan),
                                               merged_config<OptimizerConfig>(opt));
        return py::make_tuple(PyModel{res.params, static_cast<long long>(res.log.size())},
                              log_to_py(res.log));
      },
      py::arg("model"), py::arg("pairs"), py::arg("vocab"), py::arg("plan") = py::dict(),
      py::arg("optimizer") = py::dict());

  // ---- evaluation ----
  m.def(
      "retrieval_eval",
      [](const PyModel& pm, const tok::Vocab& vocab, const py::list& triplets,
         const std::vector<int>& exits, int n_distractors, uint64_t seed, const std::string& task,
         int max_len) {
        const auto ts = triplets_from(triplets);
        const auto queries = task == "c2c" ? pipe::c2c_queries(ts) : pipe::t2c_queries(ts);
        return reports_to_py(pipe::retrieval_eval(pm.params, vocab, queries, pipe::code_pool(ts),
                                                  exits, n_distractors, seed, task, max_len));
      },
      py::arg("model"), py::arg("vocab"), py::arg("triplets"), py::arg("exits"),
      py::arg("n_distractors") = 99, py::arg("seed") = 0, py::arg("task") = "t2c",
      py::arg("max_len") = 128);
  m.def(
      "clone_eval",
      [](const PyModel& pm, const tok::Vocab& vocab, const py::list& pairs,
         const std::vector<int>& exits, double threshold, int max_len) {
        std::vector<std::string> warnings;
        const auto reports = pipe::clone_eval(pm.params, vocab, pairs_from(pairs), exits,
                                              threshold, max_len, &warnings);
        return py::make_tuple(reports_to_py(reports), warnings);
      },
      py::arg("model"), py::arg("vocab"), py::arg("pairs"), py::arg("exits"),
      py::arg("threshold") = 0.5, py::arg("max_len") = 128);

  m.def("mrr", [](const py::list& l) { return eval::mrr(lists_from(l)); });
  m.def("ndcg_binary", [](const py::list& l) { return eval::ndcg_binary(lists_from(l)); });
  m.def("map_multi", [](const py::list& l) { return eval::map_multi(lists_from(l)); });
  m.def("recall_at_k",
        [](const py::list& l, int k) { return eval::recall_at_k(lists_from(l), k); },
        py::arg("lists"), py::arg("k"));
  m.def(
      "flops_per_exit",
      [](const py::dict& cfg, int seq_len) {
        return eval::flops_per_exit(merged_config<EncoderConfig>(cfg), seq_len);
      },
      py::arg("config") = py::dict(), py::arg("seq_len") = 128);
  m.def(
      "permutation_test",
      [](const std::vector<double>& a, const std::vector<double>& b, int n_perm, double alpha,
         uint64_t seed) {
        const auto r = eval::permutation_test(a, b, n_perm, alpha, seed);
        return py::make_tuple(r.p_value, r.reject);
      },
      py::arg("scores_a"), py::arg("scores_b"), py::arg("n_perm") = 10000,
      py::arg("alpha") = 0.05, py::arg("seed") = 0);
  m.def("paper_config", [] { return json_to_py(json(EncoderConfig::paper())); });
  m.def("desk_config", [] { return json_to_py(json(EncoderConfig{})); });
}
