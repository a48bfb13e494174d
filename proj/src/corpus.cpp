#include "corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rng.hpp"

namespace sgw {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

json parse_json(const std::string& text, const std::string& context) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(context + ": " + e.what());
  }
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& context) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key()))
      throw std::runtime_error(context + ": unknown key '" + it.key() + "'");
}

std::string sanitize_id(const std::string& s) {
  std::string out;
  for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

}  // namespace

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

const std::vector<double>& EmbeddingTable::lookup(const std::string& word) const {
  auto it = vectors.find(word);
  return it == vectors.end() ? unk : it->second;
}

SceneGraph parse_scene_graph_json(const std::string& json_text, const std::string& context) {
  const json j = parse_json(json_text, context);
  if (!j.is_object()) throw std::runtime_error(context + ": top level must be an object");
  reject_unknown_keys(j, {"id", "entities", "triples"}, context);
  SceneGraph g(j.value("id", ""));
  if (!j.contains("entities") || !j["entities"].is_array())
    throw std::runtime_error(context + ": missing 'entities' array");
  for (const json& je : j["entities"]) {
    reject_unknown_keys(je, {"id", "label", "kind", "bbox"}, context + ": entity");
    SceneEntity e;
    if (!je.contains("id") || !je.contains("label"))
      throw std::runtime_error(context + ": entity needs 'id' and 'label'");
    e.id = je["id"].get<std::string>();
    e.label = lowercase(je["label"].get<std::string>());
    const std::string kind = je.value("kind", "object");
    if (kind == "object") e.kind = EntityKind::object;
    else if (kind == "attribute") e.kind = EntityKind::attribute;
    else throw std::runtime_error(context + ": entity '" + e.id + "' has bad kind '" + kind + "'");
    if (je.contains("bbox")) {
      const json& jb = je["bbox"];
      if (!jb.is_array() || jb.size() != 4)
        throw std::runtime_error(context + ": entity '" + e.id + "' bbox must be [x,y,w,h]");
      e.bbox = std::array<double, 4>{jb[0].get<double>(), jb[1].get<double>(),
                                     jb[2].get<double>(), jb[3].get<double>()};
    }
    g.add_entity(std::move(e));
  }
  if (j.contains("triples")) {
    if (!j["triples"].is_array())
      throw std::runtime_error(context + ": 'triples' must be an array");
    for (const json& jt : j["triples"]) {
      if (!jt.is_array() || jt.size() != 3)
        throw std::runtime_error(context + ": each triple must be [subject, predicate, object]");
      try {
        g.add_triple(jt[0].get<std::string>(), lowercase(jt[1].get<std::string>()),
                     jt[2].get<std::string>());
      } catch (const std::exception& e) {
        throw std::runtime_error(context + ": " + e.what());
      }
    }
  }
  return g;
}

SceneGraph load_scene_graph(const std::string& path) {
  return parse_scene_graph_json(read_file(path), path);
}

std::string scene_graph_to_json(const SceneGraph& g) {
  json j;
  j["id"] = g.id();
  json ents = json::array();
  for (const SceneEntity* e : g.entities()) {
    json je;
    je["id"] = e->id;
    je["label"] = e->label;
    je["kind"] = e->kind == EntityKind::attribute ? "attribute" : "object";
    if (e->bbox) je["bbox"] = {(*e->bbox)[0], (*e->bbox)[1], (*e->bbox)[2], (*e->bbox)[3]};
    ents.push_back(std::move(je));
  }
  j["entities"] = std::move(ents);
  json triples = json::array();
  for (const Triple& t : g.triples())
    triples.push_back({t.subject, t.predicate.name, t.object});
  j["triples"] = std::move(triples);
  return j.dump(2) + "\n";
}

void save_scene_graph(const SceneGraph& g, const std::string& path) {
  write_file(path, scene_graph_to_json(g));
}

bool looks_like_gqa(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (...) {
    return false;
  }
  if (!j.is_object()) return false;
  if (j.contains("entities")) return false;
  if (j.contains("objects")) return true;
  // map of scenes keyed by id
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.value().is_object() && it.value().contains("objects")) return true;
  return false;
}

namespace {

SceneGraph import_gqa_scene(const json& scene, const std::string& graph_id) {
  if (!scene.is_object() || !scene.contains("objects"))
    throw std::runtime_error("gqa import: scene '" + graph_id + "' has no 'objects'");
  const json& objects = scene["objects"];
  SceneGraph g(graph_id);
  // first pass: object entities
  for (auto it = objects.begin(); it != objects.end(); ++it) {
    const std::string& oid = it.key();
    const json& jo = it.value();
    if (!jo.contains("name"))
      throw std::runtime_error("gqa import: object '" + oid + "' has no name");
    SceneEntity e;
    const std::string name = lowercase(jo["name"].get<std::string>());
    e.id = sanitize_id(name) + "-" + oid;
    e.label = name;
    e.kind = EntityKind::object;
    if (jo.contains("x") && jo.contains("y") && jo.contains("w") && jo.contains("h"))
      e.bbox = std::array<double, 4>{jo["x"].get<double>(), jo["y"].get<double>(),
                                     jo["w"].get<double>(), jo["h"].get<double>()};
    g.add_entity(std::move(e));
  }
  auto entity_id_of = [&](const std::string& oid) -> std::string {
    const json& jo = objects.at(oid);
    return sanitize_id(lowercase(jo["name"].get<std::string>())) + "-" + oid;
  };
  // second pass: attribute entities and relation triples
  for (auto it = objects.begin(); it != objects.end(); ++it) {
    const std::string& oid = it.key();
    const json& jo = it.value();
    const std::string subj = entity_id_of(oid);
    if (jo.contains("attributes")) {
      for (const json& ja : jo["attributes"]) {
        const std::string attr = lowercase(ja.get<std::string>());
        SceneEntity e;
        e.id = sanitize_id(attr) + "-" + oid;
        e.label = attr;
        e.kind = EntityKind::attribute;
        if (!g.has_entity(e.id)) g.add_entity(std::move(e));
        g.add_triple(subj, "is", sanitize_id(attr) + "-" + oid);
      }
    }
    if (jo.contains("relations")) {
      for (const json& jr : jo["relations"]) {
        if (!jr.contains("name") || !jr.contains("object"))
          throw std::runtime_error("gqa import: relation on '" + oid +
                                   "' needs 'name' and 'object'");
        const std::string target = jr["object"].get<std::string>();
        if (!objects.contains(target))
          throw std::runtime_error("gqa import: relation target '" + target +
                                   "' missing from scene '" + graph_id + "'");
        g.add_triple(subj, lowercase(jr["name"].get<std::string>()), entity_id_of(target));
      }
    }
  }
  return g;
}

}  // namespace

SceneGraph import_gqa(const std::string& json_text, const std::string& scene_id) {
  const json j = parse_json(json_text, "gqa import");
  if (!j.is_object()) throw std::runtime_error("gqa import: top level must be an object");
  if (j.contains("objects")) {
    if (!scene_id.empty() && scene_id != j.value("id", scene_id))
      throw std::runtime_error("gqa import: file is a single scene, not '" + scene_id + "'");
    return import_gqa_scene(j, scene_id.empty() ? j.value("id", "gqa-scene") : scene_id);
  }
  if (!scene_id.empty()) {
    if (!j.contains(scene_id))
      throw std::runtime_error("gqa import: scene '" + scene_id + "' not in file");
    return import_gqa_scene(j.at(scene_id), scene_id);
  }
  if (j.size() == 1) return import_gqa_scene(j.begin().value(), j.begin().key());
  throw std::runtime_error("gqa import: file holds " + std::to_string(j.size()) +
                           " scenes; a scene id is required");
}

std::vector<QuestionRecord> load_questions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<QuestionRecord> out;
  std::string line;
  int lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string context = path + ":" + std::to_string(lineno);
    const json j = parse_json(line, context);
    reject_unknown_keys(
        j, {"qid", "graph", "tokens", "answer", "type", "valid", "plausible", "group", "oracle"},
        context);
    QuestionRecord q;
    for (const char* key : {"qid", "graph", "tokens", "answer", "type"})
      if (!j.contains(key))
        throw std::runtime_error(context + ": missing key '" + std::string(key) + "'");
    q.qid = j["qid"].get<std::string>();
    q.graph_id = j["graph"].get<std::string>();
    for (const json& t : j["tokens"]) q.tokens.push_back(lowercase(t.get<std::string>()));
    q.answer = lowercase(j["answer"].get<std::string>());
    const std::string type = j["type"].get<std::string>();
    if (type == "binary") q.type = QType::binary;
    else if (type == "open") q.type = QType::open;
    else throw std::runtime_error(context + ": bad type '" + type + "'");
    if (q.type == QType::binary && q.answer != "yes" && q.answer != "no")
      throw std::runtime_error(context + ": binary question with answer '" + q.answer + "'");
    if (q.tokens.empty()) throw std::runtime_error(context + ": empty token list");
    if (j.contains("valid")) {
      std::vector<std::string> v;
      for (const json& s : j["valid"]) v.push_back(lowercase(s.get<std::string>()));
      if (std::find(v.begin(), v.end(), q.answer) == v.end())
        throw std::runtime_error(context + ": valid-answer-set lacks the gold answer");
      q.valid = std::move(v);
    }
    if (j.contains("plausible")) {
      std::vector<std::string> v;
      for (const json& s : j["plausible"]) v.push_back(lowercase(s.get<std::string>()));
      q.plausible = std::move(v);
    }
    if (j.contains("group")) q.group = j["group"].get<std::string>();
    if (j.contains("oracle")) {
      for (const json& hop : j["oracle"]) {
        if (!hop.is_array() || hop.size() != 2)
          throw std::runtime_error(context + ": oracle hops must be [relation, entity]");
        q.oracle.emplace_back(hop[0].get<std::string>(), hop[1].get<std::string>());
      }
    }
    if (!seen.insert(q.qid).second)
      throw std::runtime_error(context + ": duplicate qid '" + q.qid + "'");
    out.push_back(std::move(q));
  }
  return out;
}

void save_questions(const std::vector<QuestionRecord>& qs, const std::string& path) {
  std::ostringstream os;
  for (const QuestionRecord& q : qs) {
    json j;
    j["qid"] = q.qid;
    j["graph"] = q.graph_id;
    j["tokens"] = q.tokens;
    j["answer"] = q.answer;
    j["type"] = q.type == QType::binary ? "binary" : "open";
    if (q.valid) j["valid"] = *q.valid;
    if (q.plausible) j["plausible"] = *q.plausible;
    if (q.group) j["group"] = *q.group;
    if (!q.oracle.empty()) {
      json hops = json::array();
      for (const auto& [r, e] : q.oracle) hops.push_back({r, e});
      j["oracle"] = std::move(hops);
    }
    os << j.dump() << "\n";
  }
  write_file(path, os.str());
}

EmbeddingTable load_embeddings(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  EmbeddingTable table;
  table.dim = dim;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string word;
    is >> word;
    std::vector<double> vec;
    vec.reserve(static_cast<size_t>(dim));
    double x;
    while (is >> x) vec.push_back(x);
    if (static_cast<int>(vec.size()) != dim)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(dim) + " values, got " +
                               std::to_string(vec.size()));
    table.vectors[lowercase(word)] = std::move(vec);
  }
  // seeded unknown-token vector
  Rng rng(seed_stream(0, "embedding-unk", static_cast<uint64_t>(dim)));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  table.unk.resize(static_cast<size_t>(dim));
  for (double& x : table.unk) x = rng.uniform(-scale, scale);
  return table;
}

CorpusManifest load_manifest(const std::string& path) {
  const json j = parse_json(read_file(path), path);
  reject_unknown_keys(j, {"seed", "entries"}, path);
  CorpusManifest m;
  m.seed = j.value("seed", 0ULL);
  if (!j.contains("entries") || !j["entries"].is_array())
    throw std::runtime_error(path + ": missing 'entries' array");
  for (const json& je : j["entries"]) {
    reject_unknown_keys(je, {"graph", "questions", "split"}, path + ": entry");
    ManifestEntry e;
    e.graph_file = je.at("graph").get<std::string>();
    e.question_file = je.at("questions").get<std::string>();
    e.split = je.at("split").get<std::string>();
    if (e.split != "train" && e.split != "validation" && e.split != "test")
      throw std::runtime_error(path + ": bad split '" + e.split + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const CorpusManifest& m, const std::string& path) {
  json j;
  j["seed"] = m.seed;
  json entries = json::array();
  for (const ManifestEntry& e : m.entries) {
    json je;
    je["graph"] = e.graph_file;
    je["questions"] = e.question_file;
    je["split"] = e.split;
    entries.push_back(std::move(je));
  }
  j["entries"] = std::move(entries);
  write_file(path, j.dump(2) + "\n");
}

Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  Corpus c;
  c.dir = dir;
  c.manifest = load_manifest((fs::path(dir) / "manifest.json").string());
  std::set<std::string> qids;
  for (const ManifestEntry& e : c.manifest.entries) {
    SceneGraph g = load_scene_graph((fs::path(dir) / e.graph_file).string());
    if (g.id().empty()) throw std::runtime_error(e.graph_file + ": graph has no id");
    if (c.graphs.count(g.id()))
      throw std::runtime_error(e.graph_file + ": duplicate graph id '" + g.id() + "'");
    const std::string gid = g.id();
    c.graphs.emplace(gid, std::move(g));
    auto qs = load_questions((fs::path(dir) / e.question_file).string());
    for (QuestionRecord& q : qs) {
      if (!qids.insert(q.qid).second)
        throw std::runtime_error(e.question_file + ": qid '" + q.qid +
                                 "' appears in more than one file");
      c.by_split[e.split].push_back(static_cast<int>(c.questions.size()));
      c.questions.push_back(std::move(q));
    }
  }
  for (const QuestionRecord& q : c.questions)
    if (!c.graphs.count(q.graph_id))
      throw std::runtime_error("question '" + q.qid + "' references unknown graph '" +
                               q.graph_id + "'");
  return c;
}

const QuestionRecord* Corpus::find_question(const std::string& qid) const {
  for (const QuestionRecord& q : questions)
    if (q.qid == qid) return &q;
  return nullptr;
}

const SceneGraph& Corpus::graph_for(const QuestionRecord& q) const {
  auto it = graphs.find(q.graph_id);
  if (it == graphs.end())
    throw std::runtime_error("question '" + q.qid + "' references unknown graph '" +
                             q.graph_id + "'");
  return it->second;
}

std::vector<std::string> Corpus::vocabulary() const {
  std::set<std::string> words;
  auto add_label = [&](const std::string& label) {
    for (const std::string& w : tokenize(label)) words.insert(w);
  };
  for (const auto& [gid, g] : graphs) {
    for (const SceneEntity* e : g.entities()) add_label(e->label);
    for (const Triple& t : g.triples()) add_label(t.predicate.base);
  }
  for (const QuestionRecord& q : questions)
    for (const std::string& t : q.tokens) words.insert(t);
  // tokens the augmentation and the policy introduce
  for (const char* w : {"hub", "yes", "no", "edge", "op", "to", "answer", "inverse"})
    words.insert(w);
  return {words.begin(), words.end()};
}

uint64_t vocab_hash(const std::vector<std::string>& words) {
  uint64_t h = 14695981039346656037ULL;
  for (const std::string& w : words) {
    h = fnv1a(w, h);
    h = fnv1a("\x1f", h);
  }
  return h;
}

Vocab Vocab::build(const std::vector<std::string>& sorted_words) {
  Vocab v;
  v.words.push_back("<unk>");
  for (const std::string& w : sorted_words)
    if (w != "<unk>") v.words.push_back(w);
  for (size_t i = 0; i < v.words.size(); ++i) v.index[v.words[i]] = static_cast<int>(i);
  return v;
}

int Vocab::id(const std::string& word) const {
  auto it = index.find(word);
  return it == index.end() ? 0 : it->second;
}

std::vector<int> Vocab::ids(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) out.push_back(id(t));
  if (out.empty()) out.push_back(0);
  return out;
}

}  // namespace sgw
