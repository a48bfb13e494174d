#include "sgwalk/sgwalk.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "corpus.hpp"
#include "evaluator.hpp"
#include "model.hpp"
#include "scene_graph.hpp"
#include "synthetic.hpp"
#include "trainer.hpp"
#include "walk_env.hpp"

using nlohmann::json;

struct sgw_graph {
  sgw::SceneGraph g;
};
struct sgw_corpus {
  sgw::Corpus c;
};
struct sgw_model {
  sgw::Model m;
};

namespace {

thread_local std::string t_last_error;

void set_error(const std::string& msg) { t_last_error = msg; }

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) return nullptr;
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

sgw_status classify(const std::exception& e) {
  const std::string what = e.what();
  if (what.find("cannot open") != std::string::npos ||
      what.find("cannot write") != std::string::npos ||
      what.find("write failed") != std::string::npos ||
      what.find("truncated") != std::string::npos)
    return SGW_ERR_IO;
  if (dynamic_cast<const json::exception*>(&e) ||
      what.find("parse") != std::string::npos || what.find("unknown key") != std::string::npos)
    return SGW_ERR_PARSE;
  return SGW_ERR_INVALID;
}

template <class Fn>
sgw_status guarded(Fn&& fn) {
  try {
    fn();
    t_last_error.clear();
    return SGW_OK;
  } catch (const std::invalid_argument& e) {
    set_error(e.what());
    return SGW_ERR_INVALID;
  } catch (const std::exception& e) {
    set_error(e.what());
    return classify(e);
  } catch (...) {
    set_error("unknown failure");
    return SGW_ERR_INTERNAL;
  }
}

sgw_status need(bool ok, const char* msg) {
  if (ok) return SGW_OK;
  set_error(msg);
  return SGW_ERR_INVALID;
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

extern "C" {

const char* sgw_version(void) { return "0.1.0"; }

const char* sgw_last_error(void) { return t_last_error.c_str(); }

void sgw_string_free(char* s) { std::free(s); }

sgw_status sgw_graph_load(const char* path, const char* scene_id, sgw_graph** out) {
  if (auto st = need(path && out, "sgw_graph_load: null argument")) return st;
  return guarded([&] {
    const std::string text = read_all(path);
    auto* h = new sgw_graph;
    try {
      if (sgw::looks_like_gqa(text))
        h->g = sgw::import_gqa(text, scene_id ? scene_id : "");
      else
        h->g = sgw::parse_scene_graph_json(text, path);
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

sgw_status sgw_graph_parse(const char* json_text, sgw_graph** out) {
  if (auto st = need(json_text && out, "sgw_graph_parse: null argument")) return st;
  return guarded([&] {
    auto* h = new sgw_graph;
    try {
      h->g = sgw::parse_scene_graph_json(json_text, "graph json");
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

sgw_status sgw_graph_import_gqa(const char* json_text, const char* scene_id, sgw_graph** out) {
  if (auto st = need(json_text && out, "sgw_graph_import_gqa: null argument")) return st;
  return guarded([&] {
    auto* h = new sgw_graph;
    try {
      h->g = sgw::import_gqa(json_text, scene_id ? scene_id : "");
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

sgw_status sgw_graph_validate(const sgw_graph* g, char** violations_json) {
  if (auto st = need(g && violations_json, "sgw_graph_validate: null argument")) return st;
  return guarded([&] {
    json arr = json::array();
    for (const sgw::Violation& v : g->g.validate()) arr.push_back(v.rule + ": " + v.detail);
    *violations_json = dup_string(arr.dump());
  });
}

sgw_status sgw_graph_augment(const sgw_graph* g, sgw_graph** out) {
  if (auto st = need(g && out, "sgw_graph_augment: null argument")) return st;
  return guarded([&] {
    auto* h = new sgw_graph;
    try {
      h->g = g->g.augment();
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

sgw_status sgw_graph_stats(const sgw_graph* g, char** stats_json) {
  if (auto st = need(g && stats_json, "sgw_graph_stats: null argument")) return st;
  return guarded([&] {
    json j;
    j["id"] = g->g.id();
    j["entities"] = g->g.entity_count();
    j["triples"] = g->g.triple_count();
    j["augmented"] = g->g.augmented();
    *stats_json = dup_string(j.dump());
  });
}

sgw_status sgw_graph_to_json(const sgw_graph* g, char** json_out) {
  if (auto st = need(g && json_out, "sgw_graph_to_json: null argument")) return st;
  return guarded([&] { *json_out = dup_string(sgw::scene_graph_to_json(g->g)); });
}

void sgw_graph_free(sgw_graph* g) { delete g; }

sgw_status sgw_corpus_generate(const char* config_json, const char* out_dir) {
  if (auto st = need(out_dir, "sgw_corpus_generate: null out_dir")) return st;
  return guarded([&] {
    const sgw::SynthConfig cfg =
        sgw::synth_config_from_json(config_json && *config_json ? config_json : "{}");
    sgw::generate_synthetic_corpus(cfg, out_dir);
  });
}

sgw_status sgw_corpus_open(const char* dir, sgw_corpus** out) {
  if (auto st = need(dir && out, "sgw_corpus_open: null argument")) return st;
  return guarded([&] {
    auto* h = new sgw_corpus;
    try {
      h->c = sgw::load_corpus(dir);
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

sgw_status sgw_corpus_stats(const sgw_corpus* c, char** stats_json) {
  if (auto st = need(c && stats_json, "sgw_corpus_stats: null argument")) return st;
  return guarded([&] {
    json j;
    j["graphs"] = c->c.graphs.size();
    j["questions"] = c->c.questions.size();
    json splits;
    for (const auto& [name, ids] : c->c.by_split) splits[name] = ids.size();
    j["splits"] = std::move(splits);
    *stats_json = dup_string(j.dump());
  });
}

void sgw_corpus_free(sgw_corpus* c) { delete c; }

sgw_status sgw_train(const char* corpus_dir, const char* model_config_json,
                     const char* train_config_json, const char* embeddings_path,
                     const char* resume_ckpt, const char* ckpt_out,
                     const char* metrics_out) {
  if (auto st = need(corpus_dir && ckpt_out && metrics_out, "sgw_train: null argument"))
    return st;
  return guarded([&] {
    const sgw::Corpus corpus = sgw::load_corpus(corpus_dir);
    const sgw::TrainConfig tcfg = sgw::train_config_from_json(
        train_config_json && *train_config_json ? train_config_json : "{}");

    sgw::Model model;
    if (resume_ckpt && *resume_ckpt) {
      model = sgw::Model::load(resume_ckpt);
      model.check_vocab(corpus.vocabulary());
      if (model_config_json && *model_config_json) {
        const std::string requested =
            sgw::model_config_to_json(sgw::model_config_from_json(model_config_json));
        if (requested != sgw::model_config_to_json(model.cfg))
          throw std::runtime_error(
              "checkpoint: requested model config does not match the checkpoint config");
      }
    } else {
      const sgw::ModelConfig mcfg = sgw::model_config_from_json(
          model_config_json && *model_config_json ? model_config_json : "{}");
      if (embeddings_path && *embeddings_path) {
        const sgw::EmbeddingTable table = sgw::load_embeddings(embeddings_path, mcfg.d);
        model = sgw::Model::init(mcfg, corpus.vocabulary(), &table);
      } else {
        model = sgw::Model::init(mcfg, corpus.vocabulary(), nullptr);
      }
    }
    sgw::Trainer trainer(model, corpus, tcfg);
    trainer.train(ckpt_out, metrics_out);
  });
}

sgw_status sgw_model_load(const char* ckpt_path, sgw_model** out) {
  if (auto st = need(ckpt_path && out, "sgw_model_load: null argument")) return st;
  return guarded([&] {
    auto* h = new sgw_model;
    try {
      h->m = sgw::Model::load(ckpt_path);
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

sgw_status sgw_model_config(const sgw_model* m, char** config_json) {
  if (auto st = need(m && config_json, "sgw_model_config: null argument")) return st;
  return guarded([&] { *config_json = dup_string(sgw::model_config_to_json(m->m.cfg)); });
}

void sgw_model_free(sgw_model* m) { delete m; }

sgw_status sgw_evaluate(const sgw_model* m, const char* corpus_dir, const char* split,
                        char** report_json, char** report_table) {
  if (auto st = need(m && corpus_dir && split && report_json,
                     "sgw_evaluate: null argument"))
    return st;
  return guarded([&] {
    const sgw::Corpus corpus = sgw::load_corpus(corpus_dir);
    m->m.check_vocab(corpus.vocabulary());
    auto it = corpus.by_split.find(split);
    if (it == corpus.by_split.end() || it->second.empty())
      throw std::invalid_argument("evaluate: corpus has no '" + std::string(split) + "' split");

    std::map<std::string, sgw::SceneGraph> augmented;
    std::vector<sgw::QuestionRecord> questions;
    std::map<std::string, std::string> preds;
    for (int qi : it->second) {
      const sgw::QuestionRecord& q = corpus.questions[static_cast<size_t>(qi)];
      if (!augmented.count(q.graph_id))
        augmented.emplace(q.graph_id, corpus.graphs.at(q.graph_id).augment());
      const sgw::SceneGraph& aug = augmented.at(q.graph_id);
      sgw::EpisodeTrace trace = m->m.greedy_trace(aug, q);
      preds[q.qid] = sgw::trace_answer(aug, trace);
      questions.push_back(q);
    }
    const sgw::MetricsReport rep = sgw::evaluate(preds, questions);
    *report_json = dup_string(rep.to_json());
    if (report_table) *report_table = dup_string(rep.to_table());
  });
}

sgw_status sgw_answer(const sgw_model* m, const sgw_graph* g, const char* question_text,
                      char** result_json) {
  if (auto st = need(m && g && question_text && result_json, "sgw_answer: null argument"))
    return st;
  return guarded([&] {
    const sgw::AnswerResult res = sgw::answer_question(m->m, g->g, question_text);
    json j;
    j["answer"] = res.answer;
    j["question_type"] =
        sgw::make_adhoc_question(question_text, "").type == sgw::QType::binary ? "binary"
                                                                               : "open";
    j["trace"] = json::parse(sgw::trace_to_json(res.trace));
    *result_json = dup_string(j.dump());
  });
}

sgw_status sgw_trace_question(const sgw_model* m, const char* corpus_dir, const char* qid,
                              const char* format, char** out_text) {
  if (auto st = need(m && corpus_dir && qid && format && out_text,
                     "sgw_trace_question: null argument"))
    return st;
  return guarded([&] {
    const std::string fmt = format;
    if (fmt != "json" && fmt != "dot")
      throw std::invalid_argument("trace: format must be 'json' or 'dot'");
    const sgw::Corpus corpus = sgw::load_corpus(corpus_dir);
    m->m.check_vocab(corpus.vocabulary());
    const sgw::QuestionRecord* q = corpus.find_question(qid);
    if (!q) throw std::invalid_argument("trace: unknown qid '" + std::string(qid) + "'");
    const sgw::SceneGraph aug = corpus.graphs.at(q->graph_id).augment();
    const sgw::EpisodeTrace trace = m->m.greedy_trace(aug, *q);
    *out_text =
        dup_string(fmt == "json" ? sgw::trace_to_json(trace) : sgw::trace_to_dot(trace, aug));
  });
}

}  // extern "C"
