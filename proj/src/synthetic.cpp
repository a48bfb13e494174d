#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rng.hpp"
#include "walk_env.hpp"

namespace sgw {

using nlohmann::json;

void SynthConfig::validate() const {
  if (num_graphs < 1) throw std::invalid_argument("synth config: num_graphs must be >= 1");
  if (min_entities < 4 || max_entities < min_entities)
    throw std::invalid_argument("synth config: entity range is invalid");
  if (questions_per_graph < 1)
    throw std::invalid_argument("synth config: questions_per_graph must be >= 1");
  if (objects.size() < 4) throw std::invalid_argument("synth config: need >= 4 object labels");
  if (attribute_classes.empty() || relations.empty())
    throw std::invalid_argument("synth config: vocabularies must be nonempty");
  if (templates.empty()) throw std::invalid_argument("synth config: no templates");
  std::set<std::string> known = {"attr_lookup", "rel_hop", "exists", "attr_yesno"};
  for (const std::string& t : templates)
    if (!known.count(t))
      throw std::invalid_argument("synth config: unknown template '" + t + "'");
  std::set<std::string> all_values;
  for (const auto& [cls, values] : attribute_classes) {
    if (values.empty())
      throw std::invalid_argument("synth config: attribute class '" + cls + "' is empty");
    for (const std::string& v : values)
      if (!all_values.insert(v).second)
        throw std::invalid_argument("synth config: attribute value '" + v +
                                    "' appears in two classes");
  }
  if (!(train_frac > 0 && val_frac >= 0 && train_frac + val_frac < 1.0))
    throw std::invalid_argument("synth config: split fractions are invalid");
}

std::string synth_config_to_json(const SynthConfig& cfg) {
  json j;
  j["num_graphs"] = cfg.num_graphs;
  j["min_entities"] = cfg.min_entities;
  j["max_entities"] = cfg.max_entities;
  j["questions_per_graph"] = cfg.questions_per_graph;
  j["train_frac"] = cfg.train_frac;
  j["val_frac"] = cfg.val_frac;
  j["seed"] = cfg.seed;
  j["templates"] = cfg.templates;
  j["objects"] = cfg.objects;
  j["attribute_classes"] = cfg.attribute_classes;
  j["relations"] = cfg.relations;
  return j.dump();
}

SynthConfig synth_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  static const std::set<std::string> known = {
      "num_graphs", "min_entities", "max_entities", "questions_per_graph", "train_frac",
      "val_frac",   "seed",         "templates",    "objects",             "attribute_classes",
      "relations"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::runtime_error("synth config: unknown key '" + it.key() + "'");
  SynthConfig cfg;
  cfg.num_graphs = j.value("num_graphs", cfg.num_graphs);
  cfg.min_entities = j.value("min_entities", cfg.min_entities);
  cfg.max_entities = j.value("max_entities", cfg.max_entities);
  cfg.questions_per_graph = j.value("questions_per_graph", cfg.questions_per_graph);
  cfg.train_frac = j.value("train_frac", cfg.train_frac);
  cfg.val_frac = j.value("val_frac", cfg.val_frac);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("templates")) cfg.templates = j["templates"].get<std::vector<std::string>>();
  if (j.contains("objects")) cfg.objects = j["objects"].get<std::vector<std::string>>();
  if (j.contains("attribute_classes"))
    cfg.attribute_classes =
        j["attribute_classes"].get<std::map<std::string, std::vector<std::string>>>();
  if (j.contains("relations")) cfg.relations = j["relations"].get<std::vector<std::string>>();
  cfg.validate();
  return cfg;
}

namespace {

struct ObjectInfo {
  std::string id;
  std::string label;
  // class -> (value, attribute entity id)
  std::map<std::string, std::pair<std::string, std::string>> attrs;
};

struct GraphDraft {
  std::string gid;
  SceneGraph graph;
  SceneGraph augmented;
  std::vector<ObjectInfo> objects;
  std::vector<std::tuple<int, std::string, int>> rel_triples;  // (subj idx, rel, obj idx)
};

// metadata needed to fill validity/plausibility sets in the second pass
struct PendingQuestion {
  QuestionRecord q;
  std::string tmpl;
  std::string cls;        // attr templates
  std::string rel;        // rel_hop
  std::string obj_label;  // queried object label
};

GraphDraft build_graph(const SynthConfig& cfg, int gi) {
  Rng rng(seed_stream(cfg.seed, "graph", static_cast<uint64_t>(gi)));
  GraphDraft draft;
  {
    std::ostringstream os;
    os << "g" << std::setw(4) << std::setfill('0') << gi;
    draft.gid = os.str();
  }
  draft.graph.set_id(draft.gid);

  const int classes = static_cast<int>(cfg.attribute_classes.size());
  const int target_n = cfg.min_entities + rng.uniform_int(cfg.max_entities - cfg.min_entities + 1);
  int m_lo = std::max(2, (target_n + classes) / (classes + 1));
  int m_hi = std::min({target_n - 1, static_cast<int>(cfg.objects.size()), m_lo + 3});
  if (m_hi < m_lo) m_hi = m_lo;
  const int m = m_lo + rng.uniform_int(m_hi - m_lo + 1);

  std::vector<std::string> labels = cfg.objects;
  rng.shuffle(labels);
  labels.resize(static_cast<size_t>(m));

  int counter = 0;
  for (const std::string& label : labels) {
    ObjectInfo info;
    info.label = label;
    info.id = label + "-" + std::to_string(counter++);
    draft.graph.add_entity(SceneEntity{info.id, label, EntityKind::object, std::nullopt});
    draft.objects.push_back(std::move(info));
  }

  std::vector<std::string> class_names;
  for (const auto& [cls, values] : cfg.attribute_classes) class_names.push_back(cls);

  int total = m;
  int guard = 0;
  while (total < target_n && guard++ < 1000) {
    const int oi = rng.uniform_int(m);
    ObjectInfo& obj = draft.objects[static_cast<size_t>(oi)];
    if (static_cast<int>(obj.attrs.size()) == classes) continue;
    std::vector<std::string> open_classes;
    for (const std::string& cls : class_names)
      if (!obj.attrs.count(cls)) open_classes.push_back(cls);
    const std::string cls = open_classes[static_cast<size_t>(
        rng.uniform_int(static_cast<int>(open_classes.size())))];
    const auto& values = cfg.attribute_classes.at(cls);
    const std::string value =
        values[static_cast<size_t>(rng.uniform_int(static_cast<int>(values.size())))];
    const std::string aid = value + "-" + std::to_string(counter++);
    draft.graph.add_entity(SceneEntity{aid, value, EntityKind::attribute, std::nullopt});
    draft.graph.add_triple(obj.id, "is", aid);
    obj.attrs[cls] = {value, aid};
    ++total;
  }

  const int want_rels = (m - 1) + rng.uniform_int(m);
  int added = 0;
  guard = 0;
  while (added < want_rels && guard++ < want_rels * 20) {
    const int a = rng.uniform_int(m);
    const int b = rng.uniform_int(m);
    if (a == b) continue;
    const std::string rel = cfg.relations[static_cast<size_t>(
        rng.uniform_int(static_cast<int>(cfg.relations.size())))];
    const size_t before = draft.graph.triple_count();
    draft.graph.add_triple(draft.objects[static_cast<size_t>(a)].id, rel,
                           draft.objects[static_cast<size_t>(b)].id);
    if (draft.graph.triple_count() > before) {
      draft.rel_triples.emplace_back(a, rel, b);
      ++added;
    }
  }
  draft.augmented = draft.graph.augment();
  return draft;
}

std::string join_tokens(const std::vector<std::string>& toks) {
  std::string out;
  for (const std::string& t : toks) {
    out += t;
    out.push_back(' ');
  }
  return out;
}

void check_oracle(const GraphDraft& draft, const QuestionRecord& q) {
  const SceneGraph& g = draft.augmented;
  std::string at = SceneGraph::kHubId;
  if (q.oracle.size() > 3)
    throw std::logic_error("generator: oracle path longer than 3 hops for '" + q.qid + "'");
  for (const auto& [rel, ent] : q.oracle) {
    if (rel == kToAnswer) {
      if (ent != SceneGraph::kYesId && ent != SceneGraph::kNoId)
        throw std::logic_error("generator: TO_ANSWER hop to '" + ent + "'");
      at = ent;
      continue;
    }
    const auto& edges = g.outgoing(at);
    const bool found = std::any_of(edges.begin(), edges.end(), [&](const auto& e) {
      return e.first.name == rel && e.second == ent;
    });
    if (!found)
      throw std::logic_error("generator: oracle hop (" + at + ", " + rel + ", " + ent +
                             ") is not a graph edge for '" + q.qid + "'");
    at = ent;
  }
  bool ok;
  if (q.type == QType::binary)
    ok = at == (q.answer == "yes" ? SceneGraph::kYesId : SceneGraph::kNoId);
  else
    ok = g.entity(at).label == q.answer;
  if (!ok)
    throw std::logic_error("generator: oracle path for '" + q.qid +
                           "' does not terminate at the gold answer");
}

}  // namespace

CorpusManifest generate_synthetic_corpus(const SynthConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  cfg.validate();

  std::vector<GraphDraft> drafts;
  drafts.reserve(static_cast<size_t>(cfg.num_graphs));
  for (int gi = 0; gi < cfg.num_graphs; ++gi) drafts.push_back(build_graph(cfg, gi));

  // corpus-wide co-occurrence stats for validity/plausibility
  std::map<std::string, std::set<std::string>> class_values_used;
  std::map<std::pair<std::string, std::string>, std::set<std::string>> attr_cooc;
  std::map<std::pair<std::string, std::string>, std::set<std::string>> rel_cooc;
  std::set<std::string> object_labels_used;
  for (const GraphDraft& d : drafts) {
    for (const ObjectInfo& o : d.objects) {
      object_labels_used.insert(o.label);
      for (const auto& [cls, va] : o.attrs) {
        class_values_used[cls].insert(va.first);
        attr_cooc[{o.label, cls}].insert(va.first);
      }
    }
    for (const auto& [ai, rel, bi] : d.rel_triples)
      rel_cooc[{rel, d.objects[static_cast<size_t>(bi)].label}].insert(
          d.objects[static_cast<size_t>(ai)].label);
  }

  std::vector<std::vector<PendingQuestion>> per_graph(drafts.size());
  for (size_t di = 0; di < drafts.size(); ++di) {
    const GraphDraft& d = drafts[di];
    Rng rng(seed_stream(cfg.seed, "questions", di));
    std::set<std::string> used_texts;
    std::vector<PendingQuestion>& out = per_graph[di];
    int serial = 0;
    auto next_qid = [&]() {
      std::ostringstream os;
      os << d.gid << "-q" << std::setw(2) << std::setfill('0') << serial++;
      return os.str();
    };

    int failures = 0;
    size_t tcursor = 0;
    while (static_cast<int>(out.size()) < cfg.questions_per_graph) {
      if (failures >= 100)
        throw std::runtime_error("generator: template unsatisfiable on graph '" + d.gid +
                                 "' after 100 attempts");
      const std::string tmpl = cfg.templates[tcursor % cfg.templates.size()];
      ++tcursor;

      PendingQuestion pq;
      pq.tmpl = tmpl;
      QuestionRecord& q = pq.q;
      q.graph_id = d.gid;

      if (tmpl == "attr_lookup") {
        std::vector<std::pair<int, std::string>> cands;
        for (size_t oi = 0; oi < d.objects.size(); ++oi)
          for (const auto& [cls, va] : d.objects[oi].attrs)
            cands.emplace_back(static_cast<int>(oi), cls);
        if (cands.empty()) {
          ++failures;
          continue;
        }
        const auto [oi, cls] =
            cands[static_cast<size_t>(rng.uniform_int(static_cast<int>(cands.size())))];
        const ObjectInfo& obj = d.objects[static_cast<size_t>(oi)];
        const auto& [value, aid] = obj.attrs.at(cls);
        q.tokens = tokenize("what is the " + cls + " of the " + obj.label);
        if (!used_texts.insert(join_tokens(q.tokens)).second) {
          ++failures;
          continue;
        }
        q.type = QType::open;
        q.answer = value;
        q.oracle = {{kHubEdge, obj.id}, {"is", aid}};
        pq.cls = cls;
        pq.obj_label = obj.label;
        q.qid = next_qid();
        out.push_back(pq);
        failures = 0;

        // entailed companion: the anchor's open answer implies the binary one
        if (static_cast<int>(out.size()) < cfg.questions_per_graph && rng.uniform() < 0.5) {
          PendingQuestion ent;
          ent.tmpl = "attr_yesno";
          ent.cls = cls;
          ent.obj_label = obj.label;
          QuestionRecord& eq = ent.q;
          eq.graph_id = d.gid;
          eq.tokens = tokenize("is the " + obj.label + " " + value);
          if (used_texts.insert(join_tokens(eq.tokens)).second) {
            eq.type = QType::binary;
            eq.answer = "yes";
            eq.oracle = {{kHubEdge, obj.id}, {"is", aid}, {kToAnswer, SceneGraph::kYesId}};
            eq.group = out.back().q.qid;
            out.back().q.group = out.back().q.qid;  // anchor carries its own qid
            eq.qid = next_qid();
            out.push_back(std::move(ent));
          }
        }
        continue;
      }

      if (tmpl == "rel_hop") {
        // unique incoming (x, rel, y): exactly one subject for the (rel, y) pair
        std::map<std::pair<std::string, int>, std::vector<int>> incoming;
        for (const auto& [ai, rel, bi] : d.rel_triples)
          incoming[{rel, bi}].push_back(ai);
        std::vector<std::pair<std::string, std::pair<int, int>>> cands;  // rel, (x, y)
        for (const auto& [key, subs] : incoming)
          if (subs.size() == 1) cands.emplace_back(key.first, std::make_pair(subs[0], key.second));
        if (cands.empty()) {
          ++failures;
          continue;
        }
        const auto& [rel, pair] =
            cands[static_cast<size_t>(rng.uniform_int(static_cast<int>(cands.size())))];
        const ObjectInfo& x = d.objects[static_cast<size_t>(pair.first)];
        const ObjectInfo& y = d.objects[static_cast<size_t>(pair.second)];
        q.tokens = tokenize("what is " + rel + " the " + y.label);
        if (!used_texts.insert(join_tokens(q.tokens)).second) {
          ++failures;
          continue;
        }
        q.type = QType::open;
        q.answer = x.label;
        q.oracle = {{kHubEdge, y.id}, {rel + "^-1", x.id}};
        pq.rel = rel;
        pq.obj_label = y.label;
        q.qid = next_qid();
        out.push_back(std::move(pq));
        failures = 0;
        continue;
      }

      if (tmpl == "exists") {
        const bool positive = rng.uniform() < 0.5;
        if (positive) {
          const ObjectInfo& obj = d.objects[static_cast<size_t>(
              rng.uniform_int(static_cast<int>(d.objects.size())))];
          q.tokens = tokenize("is there a " + obj.label);
          if (!used_texts.insert(join_tokens(q.tokens)).second) {
            ++failures;
            continue;
          }
          q.answer = "yes";
          q.oracle = {{kHubEdge, obj.id}, {kToAnswer, SceneGraph::kYesId}};
        } else {
          std::vector<std::string> absent;
          for (const std::string& label : cfg.objects) {
            const bool present = std::any_of(d.objects.begin(), d.objects.end(),
                                             [&](const ObjectInfo& o) { return o.label == label; });
            if (!present) absent.push_back(label);
          }
          if (absent.empty()) {
            ++failures;
            continue;
          }
          const std::string& label =
              absent[static_cast<size_t>(rng.uniform_int(static_cast<int>(absent.size())))];
          q.tokens = tokenize("is there a " + label);
          if (!used_texts.insert(join_tokens(q.tokens)).second) {
            ++failures;
            continue;
          }
          q.answer = "no";
          q.oracle = {{kToAnswer, SceneGraph::kNoId}};
        }
        q.type = QType::binary;
        q.qid = next_qid();
        out.push_back(std::move(pq));
        failures = 0;
        continue;
      }

      // attr_yesno
      std::vector<std::pair<int, std::string>> cands;
      for (size_t oi = 0; oi < d.objects.size(); ++oi)
        for (const auto& [cls, va] : d.objects[oi].attrs)
          cands.emplace_back(static_cast<int>(oi), cls);
      if (cands.empty()) {
        ++failures;
        continue;
      }
      const auto [oi, cls] =
          cands[static_cast<size_t>(rng.uniform_int(static_cast<int>(cands.size())))];
      const ObjectInfo& obj = d.objects[static_cast<size_t>(oi)];
      const auto& [value, aid] = obj.attrs.at(cls);
      const bool truthy = rng.uniform() < 0.5;
      std::string asked = value;
      if (!truthy) {
        const auto& values = cfg.attribute_classes.at(cls);
        std::vector<std::string> others;
        for (const std::string& v : values)
          if (v != value) others.push_back(v);
        if (others.empty()) {
          ++failures;
          continue;
        }
        asked = others[static_cast<size_t>(rng.uniform_int(static_cast<int>(others.size())))];
      }
      q.tokens = tokenize("is the " + obj.label + " " + asked);
      if (!used_texts.insert(join_tokens(q.tokens)).second) {
        ++failures;
        continue;
      }
      q.type = QType::binary;
      q.answer = truthy ? "yes" : "no";
      q.oracle = {{kHubEdge, obj.id},
                  {"is", aid},
                  {kToAnswer, truthy ? SceneGraph::kYesId : SceneGraph::kNoId}};
      pq.cls = cls;
      pq.obj_label = obj.label;
      q.qid = next_qid();
      out.push_back(std::move(pq));
      failures = 0;
    }
  }

  // second pass: validity and plausibility metadata from corpus-wide stats
  const std::vector<std::string> yesno = {"yes", "no"};
  for (size_t di = 0; di < drafts.size(); ++di) {
    for (PendingQuestion& pq : per_graph[di]) {
      QuestionRecord& q = pq.q;
      if (q.type == QType::binary) {
        q.valid = yesno;
        q.plausible = yesno;
        continue;
      }
      if (pq.tmpl == "attr_lookup") {
        const auto& used = class_values_used.at(pq.cls);
        q.valid = std::vector<std::string>(used.begin(), used.end());
        const auto& co = attr_cooc.at({pq.obj_label, pq.cls});
        q.plausible = std::vector<std::string>(co.begin(), co.end());
      } else {  // rel_hop
        q.valid = std::vector<std::string>(object_labels_used.begin(), object_labels_used.end());
        const auto& co = rel_cooc.at({pq.rel, pq.obj_label});
        q.plausible = std::vector<std::string>(co.begin(), co.end());
      }
    }
  }

  // generation-time soundness check of every stored oracle path
  for (size_t di = 0; di < drafts.size(); ++di)
    for (const PendingQuestion& pq : per_graph[di]) check_oracle(drafts[di], pq.q);

  // graph-level split assignment
  const int n = cfg.num_graphs;
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng split_rng(seed_stream(cfg.seed, "split"));
  split_rng.shuffle(order);
  int n_train = static_cast<int>(std::lround(cfg.train_frac * n));
  int n_val = static_cast<int>(std::lround(cfg.val_frac * n));
  if (n >= 3) {
    n_train = std::clamp(n_train, 1, n - 2);
    n_val = std::clamp(n_val, 1, n - n_train - 1);
  } else {
    n_train = n;
    n_val = 0;
  }
  std::vector<std::string> split_of(static_cast<size_t>(n), "train");
  for (int i = 0; i < n; ++i) {
    const int rank = static_cast<int>(
        std::find(order.begin(), order.end(), i) - order.begin());
    split_of[static_cast<size_t>(i)] =
        rank < n_train ? "train" : (rank < n_train + n_val ? "validation" : "test");
  }

  CorpusManifest manifest;
  manifest.seed = cfg.seed;
  for (int gi = 0; gi < n; ++gi) {
    const GraphDraft& d = drafts[static_cast<size_t>(gi)];
    ManifestEntry e;
    e.graph_file = "graphs/" + d.gid + ".json";
    e.question_file = "questions/" + d.gid + ".jsonl";
    e.split = split_of[static_cast<size_t>(gi)];
    save_scene_graph(d.graph, (fs::path(out_dir) / e.graph_file).string());
    std::vector<QuestionRecord> qs;
    qs.reserve(per_graph[static_cast<size_t>(gi)].size());
    for (const PendingQuestion& pq : per_graph[static_cast<size_t>(gi)]) qs.push_back(pq.q);
    save_questions(qs, (fs::path(out_dir) / e.question_file).string());
    manifest.entries.push_back(std::move(e));
  }
  save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
  return manifest;
}

}  // namespace sgw
