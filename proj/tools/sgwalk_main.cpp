// sgwalk command-line interface. All heavy lifting happens behind the C API
// in libsgwalk; this binary only parses arguments, assembles config JSON,
// and formats output.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgwalk/sgwalk.h"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int fail(const char* what) {
  std::cerr << "error: " << what << ": " << sgw_last_error() << "\n";
  return kExitFailure;
}

std::string take_string(char* s) {
  std::string out = s ? s : "";
  sgw_string_free(s);
  return out;
}

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw CLI::ValidationError("--config", e.what());
  }
  return j;
}

bool write_output(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  return static_cast<bool>(out);
}

struct TrainArgs {
  std::string corpus, out, metrics, config_file, embeddings, resume;
  int epochs = -1, batch_size = -1, rollouts = -1, workers = -1;
  double lr = -1, entropy_beta = -1, baseline_decay = -1, clip_norm = -1,
         early_stop_acc = -1;
  long long seed = -1;
  bool no_baseline = false, freeze_embeddings = false;
  int d = -1, steps = -1;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sgwalk: answer questions about a scene by learning to walk its graph"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "print help for every subcommand");

  // generate-corpus ---------------------------------------------------------
  auto* gen = app.add_subcommand("generate-corpus", "write a synthetic corpus");
  std::string gen_out, gen_config;
  int gen_graphs = -1, gen_min = -1, gen_max = -1, gen_qpg = -1;
  long long gen_seed = -1;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--graphs", gen_graphs, "number of graphs");
  gen->add_option("--min-entities", gen_min, "minimum entities per graph");
  gen->add_option("--max-entities", gen_max, "maximum entities per graph");
  gen->add_option("--questions-per-graph", gen_qpg, "questions per graph");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--config", gen_config, "JSON config file (flags win)");

  // train -------------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "train a policy on a corpus");
  TrainArgs ta;
  tr->add_option("--corpus", ta.corpus, "corpus directory")->required();
  tr->add_option("--out", ta.out, "checkpoint output path")->required();
  tr->add_option("--metrics", ta.metrics, "metrics JSONL path (default <out>.metrics.jsonl)");
  tr->add_option("--config", ta.config_file, "JSON config file with model/train sections");
  tr->add_option("--embeddings", ta.embeddings, "pretrained word-vector text file");
  tr->add_option("--resume", ta.resume, "checkpoint to resume from");
  tr->add_option("--epochs", ta.epochs, "training epochs");
  tr->add_option("--batch-size", ta.batch_size, "questions per update");
  tr->add_option("--rollouts", ta.rollouts, "rollouts per question");
  tr->add_option("--lr", ta.lr, "learning rate");
  tr->add_option("--entropy-beta", ta.entropy_beta, "entropy bonus coefficient");
  tr->add_option("--baseline-decay", ta.baseline_decay, "reward baseline decay");
  tr->add_option("--clip-norm", ta.clip_norm, "gradient clip norm");
  tr->add_option("--early-stop-acc", ta.early_stop_acc,
                 "stop once validation accuracy reaches this fraction");
  tr->add_option("--seed", ta.seed, "training seed");
  tr->add_option("--workers", ta.workers, "parallel rollout workers");
  tr->add_flag("--no-baseline", ta.no_baseline, "disable the moving-average baseline");
  tr->add_flag("--freeze-embeddings", ta.freeze_embeddings, "do not fine-tune word vectors");
  tr->add_option("--d", ta.d, "embedding dimension");
  tr->add_option("--steps", ta.steps, "walk length T");

  // eval --------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus split");
  std::string ev_corpus, ev_ckpt, ev_split = "test", ev_out;
  ev->add_option("--corpus", ev_corpus, "corpus directory")->required();
  ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--split", ev_split, "split name (train|validation|test)");
  ev->add_option("--out", ev_out, "also write the JSON report here");

  // answer ------------------------------------------------------------------
  auto* an = app.add_subcommand("answer", "answer a free-text question about a graph");
  std::string an_graph, an_scene, an_question, an_ckpt;
  bool an_json = false;
  an->add_option("--graph", an_graph, "scene-graph file (native or GQA)")->required();
  an->add_option("--scene", an_scene, "scene id inside a multi-scene GQA file");
  an->add_option("--question", an_question, "question text")->required();
  an->add_option("--ckpt", an_ckpt, "checkpoint path")->required();
  an->add_flag("--json", an_json, "print the full result JSON");

  // trace -------------------------------------------------------------------
  auto* trc = app.add_subcommand("trace", "export the greedy walk for a corpus question");
  std::string trc_corpus, trc_qid, trc_ckpt, trc_format = "json", trc_out;
  trc->add_option("--corpus", trc_corpus, "corpus directory")->required();
  trc->add_option("--qid", trc_qid, "question id")->required();
  trc->add_option("--ckpt", trc_ckpt, "checkpoint path")->required();
  trc->add_option("--format", trc_format, "dot or json")
      ->check(CLI::IsMember({"dot", "json"}));
  trc->add_option("--out", trc_out, "write to this file instead of stdout");

  // validate ----------------------------------------------------------------
  auto* va = app.add_subcommand("validate", "check a scene-graph file");
  std::string va_graph, va_scene;
  va->add_option("--graph", va_graph, "scene-graph file (native or GQA)")->required();
  va->add_option("--scene", va_scene, "scene id inside a multi-scene GQA file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (gen->parsed()) {
    json cfg;
    try {
      cfg = load_config_file(gen_config);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return kExitUsage;
    }
    if (gen_graphs >= 0) cfg["num_graphs"] = gen_graphs;
    if (gen_min >= 0) cfg["min_entities"] = gen_min;
    if (gen_max >= 0) cfg["max_entities"] = gen_max;
    if (gen_qpg >= 0) cfg["questions_per_graph"] = gen_qpg;
    if (gen_seed >= 0) cfg["seed"] = gen_seed;
    std::cerr << "config: " << cfg.dump() << "\n";
    if (sgw_corpus_generate(cfg.dump().c_str(), gen_out.c_str()) != SGW_OK)
      return fail("generate-corpus");
    std::cout << "corpus written to " << gen_out << "\n";
    return kExitOk;
  }

  if (tr->parsed()) {
    json file_cfg;
    try {
      file_cfg = load_config_file(ta.config_file);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return kExitUsage;
    }
    for (auto it = file_cfg.begin(); it != file_cfg.end(); ++it) {
      if (it.key() != "model" && it.key() != "train") {
        std::cerr << "error: config file: unknown section '" << it.key() << "'\n";
        return kExitUsage;
      }
    }
    json model_cfg = file_cfg.value("model", json::object());
    json train_cfg = file_cfg.value("train", json::object());
    if (ta.d > 0) model_cfg["d"] = ta.d;
    if (ta.steps > 0) model_cfg["episode"]["T"] = ta.steps;
    if (ta.freeze_embeddings) model_cfg["freeze_embeddings"] = true;
    if (ta.epochs >= 0) train_cfg["epochs"] = ta.epochs;
    if (ta.batch_size > 0) train_cfg["batch_size"] = ta.batch_size;
    if (ta.rollouts > 0) train_cfg["rollouts"] = ta.rollouts;
    if (ta.lr > 0) train_cfg["lr"] = ta.lr;
    if (ta.entropy_beta >= 0) train_cfg["entropy_beta"] = ta.entropy_beta;
    if (ta.baseline_decay > 0) train_cfg["baseline_decay"] = ta.baseline_decay;
    if (ta.clip_norm > 0) train_cfg["clip_norm"] = ta.clip_norm;
    if (ta.early_stop_acc >= 0) train_cfg["early_stop_acc"] = ta.early_stop_acc;
    if (ta.seed >= 0) {
      train_cfg["seed"] = ta.seed;
      model_cfg["seed"] = ta.seed;
    }
    if (ta.workers > 0) train_cfg["workers"] = ta.workers;
    if (ta.no_baseline) train_cfg["use_baseline"] = false;
    const std::string metrics =
        ta.metrics.empty() ? ta.out + ".metrics.jsonl" : ta.metrics;
    json resolved{{"model", model_cfg},
                  {"train", train_cfg},
                  {"corpus", ta.corpus},
                  {"out", ta.out},
                  {"metrics", metrics},
                  {"embeddings", ta.embeddings},
                  {"resume", ta.resume}};
    std::cerr << "config: " << resolved.dump() << "\n";
    if (sgw_train(ta.corpus.c_str(), model_cfg.dump().c_str(), train_cfg.dump().c_str(),
                  ta.embeddings.empty() ? nullptr : ta.embeddings.c_str(),
                  ta.resume.empty() ? nullptr : ta.resume.c_str(), ta.out.c_str(),
                  metrics.c_str()) != SGW_OK)
      return fail("train");
    std::cout << "checkpoint written to " << ta.out << "\n";
    return kExitOk;
  }

  if (ev->parsed()) {
    sgw_model* model = nullptr;
    if (sgw_model_load(ev_ckpt.c_str(), &model) != SGW_OK) return fail("eval");
    char* rep_json = nullptr;
    char* rep_table = nullptr;
    const sgw_status st =
        sgw_evaluate(model, ev_corpus.c_str(), ev_split.c_str(), &rep_json, &rep_table);
    sgw_model_free(model);
    if (st != SGW_OK) return fail("eval");
    const std::string jtext = take_string(rep_json);
    std::cout << take_string(rep_table);
    if (!ev_out.empty() && !write_output(ev_out, jtext + "\n")) {
      std::cerr << "error: eval: cannot write '" << ev_out << "'\n";
      return kExitFailure;
    }
    return kExitOk;
  }

  if (an->parsed()) {
    sgw_graph* graph = nullptr;
    if (sgw_graph_load(an_graph.c_str(), an_scene.empty() ? nullptr : an_scene.c_str(),
                       &graph) != SGW_OK)
      return fail("answer");
    sgw_model* model = nullptr;
    if (sgw_model_load(an_ckpt.c_str(), &model) != SGW_OK) {
      sgw_graph_free(graph);
      return fail("answer");
    }
    char* result = nullptr;
    const sgw_status st = sgw_answer(model, graph, an_question.c_str(), &result);
    sgw_model_free(model);
    sgw_graph_free(graph);
    if (st != SGW_OK) return fail("answer");
    const std::string text = take_string(result);
    if (an_json) {
      std::cout << text << "\n";
    } else {
      const json j = json::parse(text);
      std::cout << "answer: " << j["answer"].get<std::string>() << "\n";
      std::cout << "trace: " << j["trace"].dump() << "\n";
    }
    return kExitOk;
  }

  if (trc->parsed()) {
    sgw_model* model = nullptr;
    if (sgw_model_load(trc_ckpt.c_str(), &model) != SGW_OK) return fail("trace");
    char* text = nullptr;
    const sgw_status st = sgw_trace_question(model, trc_corpus.c_str(), trc_qid.c_str(),
                                             trc_format.c_str(), &text);
    sgw_model_free(model);
    if (st != SGW_OK) return fail("trace");
    const std::string out = take_string(text);
    if (trc_out.empty()) {
      std::cout << out << (out.empty() || out.back() == '\n' ? "" : "\n");
    } else if (!write_output(trc_out, out)) {
      std::cerr << "error: trace: cannot write '" << trc_out << "'\n";
      return kExitFailure;
    }
    return kExitOk;
  }

  if (va->parsed()) {
    sgw_graph* graph = nullptr;
    if (sgw_graph_load(va_graph.c_str(), va_scene.empty() ? nullptr : va_scene.c_str(),
                       &graph) != SGW_OK)
      return fail("validate");
    char* violations = nullptr;
    const sgw_status st = sgw_graph_validate(graph, &violations);
    sgw_graph_free(graph);
    if (st != SGW_OK) return fail("validate");
    const json arr = json::parse(take_string(violations));
    for (const json& v : arr) std::cout << v.get<std::string>() << "\n";
    return arr.empty() ? kExitOk : kExitFailure;
  }

  return kExitUsage;
}
