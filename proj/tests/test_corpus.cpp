#include <doctest.h>

#include <stdexcept>

#include <filesystem>
#include <fstream>
#include <set>

#include "corpus.hpp"
#include "evaluator.hpp"
#include "synthetic.hpp"
#include "walk_env.hpp"

using namespace sgw;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("sgwalk-tests-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

constexpr const char* kGraphJson = R"({
  "id": "g1",
  "entities": [
    {"id": "m1", "label": "motorcycle", "kind": "object", "bbox": [1, 2, 30, 40]},
    {"id": "t1", "label": "tire", "kind": "object"}
  ],
  "triples": [["m1", "has_part", "t1"]]
})";

constexpr const char* kGqaScene = R"({
  "2407890": {
    "objects": {
      "1": {"name": "motorcycle", "attributes": ["parked"], "x": 1, "y": 2, "w": 3, "h": 4,
             "relations": [{"name": "to the left of", "object": "2"}]},
      "2": {"name": "tire", "attributes": [], "relations": []}
    }
  }
})";

}  // namespace

TEST_SUITE_BEGIN("corpus");

TEST_CASE("scene graph files load with entities and triples") {
  const auto dir = scratch_dir("load-graph");
  write(dir / "g.json", kGraphJson);
  const SceneGraph g = load_scene_graph((dir / "g.json").string());
  CHECK(g.id() == "g1");
  CHECK(g.entity_count() == 2);
  CHECK(g.triple_count() == 1);
  CHECK(g.entity("m1").bbox.has_value());
  CHECK(g.validate().empty());
}

TEST_CASE("dangling entity references are named") {
  CHECK_THROWS_WITH_AS(
      parse_scene_graph_json(
          R"({"id":"x","entities":[{"id":"a","label":"a"}],"triples":[["a","r","ghost"]]})",
          "test"),
      doctest::Contains("ghost"), std::runtime_error);
}

TEST_CASE("unknown keys in graph files are rejected") {
  CHECK_THROWS_WITH_AS(
      parse_scene_graph_json(R"({"id":"x","entities":[],"tripples":[]})", "test"),
      doctest::Contains("tripples"), std::runtime_error);
}

TEST_CASE("graph file round-trip is byte-identical for canonical files") {
  const auto dir = scratch_dir("round-trip");
  const SceneGraph g = parse_scene_graph_json(kGraphJson, "test");
  save_scene_graph(g, (dir / "a.json").string());
  const SceneGraph g2 = load_scene_graph((dir / "a.json").string());
  save_scene_graph(g2, (dir / "b.json").string());
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  CHECK(!slurp(dir / "a.json").empty());
}

TEST_CASE("gqa import maps objects, attributes, and relations") {
  const SceneGraph g = import_gqa(kGqaScene, "");
  CHECK(g.id() == "2407890");
  // motorcycle-1, tire-2, parked-1
  CHECK(g.entity_count() == 3);
  CHECK(g.has_entity("motorcycle-1"));
  CHECK(g.has_entity("tire-2"));
  CHECK(g.has_entity("parked-1"));
  CHECK(g.entity("parked-1").kind == EntityKind::attribute);
  const auto& out = g.outgoing("motorcycle-1");
  REQUIRE(out.size() == 2);
  CHECK(out[0].first.name == "is");
  CHECK(out[0].second == "parked-1");
  CHECK(out[1].first.name == "to the left of");
  CHECK(out[1].second == "tire-2");
  CHECK(g.entity("motorcycle-1").bbox.has_value());

  // equivalent hand-built native graph
  SceneGraph h("2407890");
  h.add_entity(SceneEntity{"motorcycle-1", "motorcycle", EntityKind::object,
                           std::array<double, 4>{1, 2, 3, 4}});
  h.add_entity(SceneEntity{"tire-2", "tire", EntityKind::object, std::nullopt});
  h.add_entity(SceneEntity{"parked-1", "parked", EntityKind::attribute, std::nullopt});
  h.add_triple("motorcycle-1", "is", "parked-1");
  h.add_triple("motorcycle-1", "to the left of", "tire-2");
  CHECK(scene_graph_to_json(h) == scene_graph_to_json(g));
}

TEST_CASE("gqa import: single entity when attributes and relations are empty") {
  const SceneGraph g =
      import_gqa(R"({"objects": {"7": {"name": "sky", "attributes": [], "relations": []}}})",
                 "solo");
  CHECK(g.entity_count() == 1);
  CHECK(g.triple_count() == 0);
}

TEST_CASE("gqa import: missing relation target is an error") {
  CHECK_THROWS_WITH_AS(
      import_gqa(R"({"objects": {"1": {"name": "a",
        "relations": [{"name": "near", "object": "99"}]}}})",
                 "x"),
      doctest::Contains("99"), std::runtime_error);
}

TEST_CASE("question records enforce their invariants at load") {
  const auto dir = scratch_dir("questions");
  write(dir / "q.jsonl",
        R"({"qid":"q1","graph":"g1","tokens":["is","there","a","dog"],"answer":"yes","type":"binary"})"
        "\n"
        R"({"qid":"q2","graph":"g1","tokens":["what","color"],"answer":"red","type":"open","valid":["red","blue"],"oracle":[["HUB_EDGE","m1"]]})"
        "\n");
  const auto qs = load_questions((dir / "q.jsonl").string());
  REQUIRE(qs.size() == 2);
  CHECK(qs[0].type == QType::binary);
  CHECK(qs[1].valid.has_value());
  CHECK(qs[1].oracle.size() == 1);

  write(dir / "bad1.jsonl",
        R"({"qid":"q1","graph":"g1","tokens":["x"],"answer":"red","type":"binary"})" "\n");
  CHECK_THROWS_AS(load_questions((dir / "bad1.jsonl").string()), std::runtime_error);

  write(dir / "bad2.jsonl",
        R"({"qid":"q1","graph":"g1","tokens":["x"],"answer":"red","type":"open","valid":["blue"]})" "\n");
  CHECK_THROWS_AS(load_questions((dir / "bad2.jsonl").string()), std::runtime_error);

  write(dir / "bad3.jsonl",
        R"({"qid":"q1","graph":"g1","tokens":["x"],"answer":"red","type":"open","answr":"x"})" "\n");
  CHECK_THROWS_AS(load_questions((dir / "bad3.jsonl").string()), std::runtime_error);
}

TEST_CASE("embedding tables parse and fall back to the unknown vector") {
  const auto dir = scratch_dir("emb");
  write(dir / "vec.txt", "cat 1 2 3 4\ndog 0 0 1 0\nred -1 0.5 0 2\n");
  const EmbeddingTable t = load_embeddings((dir / "vec.txt").string(), 4);
  CHECK(t.vectors.size() == 3);
  CHECK(t.lookup("cat") == std::vector<double>({1, 2, 3, 4}));
  CHECK(t.lookup("absent") == t.unk);
  CHECK(t.unk.size() == 4);

  write(dir / "bad.txt", "cat 1 2 3 4 5\n");
  CHECK_THROWS_WITH_AS(load_embeddings((dir / "bad.txt").string(), 4),
                       doctest::Contains(":1"), std::runtime_error);
}

TEST_CASE("tokenize lowercases and splits on punctuation") {
  CHECK(tokenize("What is LEFT_OF the ball?") ==
        std::vector<std::string>({"what", "is", "left", "of", "the", "ball"}));
}

TEST_CASE("synthetic corpus: deterministic, sound, disjoint splits") {
  const auto dir1 = scratch_dir("synth1");
  const auto dir2 = scratch_dir("synth2");
  SynthConfig cfg;
  cfg.num_graphs = 12;
  cfg.questions_per_graph = 8;
  cfg.seed = 99;
  generate_synthetic_corpus(cfg, dir1.string());
  generate_synthetic_corpus(cfg, dir2.string());

  // byte-identical regeneration
  for (const auto& entry : fs::recursive_directory_iterator(dir1)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir1);
    CHECK(slurp(entry.path()) == slurp(dir2 / rel));
  }

  const Corpus corpus = load_corpus(dir1.string());
  CHECK(corpus.graphs.size() == 12);
  CHECK(corpus.questions.size() == 12 * 8);

  // split disjointness over qids
  std::set<std::string> seen;
  for (const auto& [split, ids] : corpus.by_split)
    for (int qi : ids) CHECK(seen.insert(corpus.questions[static_cast<size_t>(qi)].qid).second);
  CHECK(seen.size() == corpus.questions.size());
  CHECK(corpus.by_split.count("train"));
  CHECK(corpus.by_split.count("validation"));
  CHECK(corpus.by_split.count("test"));

  // entity counts honor the configured range
  for (const auto& [gid, g] : corpus.graphs) {
    CHECK(g.entity_count() >= 8);
    CHECK(g.entity_count() <= 15);
  }

  // generator soundness: stored oracle paths exist and hit the gold answer
  EpisodeConfig ecfg;
  for (const auto& [gid, g] : corpus.graphs) {
    const SceneGraph aug = g.augment();
    for (const QuestionRecord& q : corpus.questions) {
      if (q.graph_id != gid) continue;
      REQUIRE(!q.oracle.empty());
      std::string at = SceneGraph::kHubId;
      for (const auto& [rel, ent] : q.oracle) {
        if (rel == kToAnswer) {
          at = ent;
          continue;
        }
        const auto& edges = aug.outgoing(at);
        const bool found = std::any_of(edges.begin(), edges.end(), [&](const auto& e) {
          return e.first.name == rel && e.second == ent;
        });
        CHECK(found);
        at = ent;
      }
      if (q.type == QType::binary)
        CHECK(at == (q.answer == "yes" ? SceneGraph::kYesId : SceneGraph::kNoId));
      else
        CHECK(aug.entity(at).label == q.answer);
      // validity metadata contains the gold answer
      REQUIRE(q.valid.has_value());
      CHECK(std::find(q.valid->begin(), q.valid->end(), q.answer) != q.valid->end());
      REQUIRE(q.plausible.has_value());
    }
  }

  // oracle_search agrees with the stored paths (and never needs more hops)
  int checked = 0;
  for (const QuestionRecord& q : corpus.questions) {
    if (checked >= 20) break;
    const SceneGraph aug = corpus.graphs.at(q.graph_id).augment();
    const OracleResult res = oracle_search(aug, q, ecfg);
    CHECK(res.reachable);
    CHECK(res.path.size() <= q.oracle.size());
    ++checked;
  }
}

TEST_CASE("consistency groups are anchored by qid") {
  const auto dir = scratch_dir("synth-groups");
  SynthConfig cfg;
  cfg.num_graphs = 10;
  cfg.questions_per_graph = 10;
  cfg.seed = 3;
  generate_synthetic_corpus(cfg, dir.string());
  const Corpus corpus = load_corpus(dir.string());
  int groups = 0;
  for (const QuestionRecord& q : corpus.questions) {
    if (!q.group) continue;
    ++groups;
    // anchor exists and carries its own qid as group
    const QuestionRecord* anchor = corpus.find_question(*q.group);
    REQUIRE(anchor != nullptr);
    CHECK(anchor->group.has_value());
    CHECK(*anchor->group == anchor->qid);
  }
  CHECK(groups > 0);
}

TEST_CASE("manifest rejects questions whose graph is missing") {
  const auto dir = scratch_dir("bad-manifest");
  write(dir / "g.json", kGraphJson);
  write(dir / "q.jsonl",
        R"({"qid":"q1","graph":"other","tokens":["x"],"answer":"red","type":"open"})" "\n");
  write(dir / "manifest.json",
        R"({"seed": 1, "entries": [{"graph": "g.json", "questions": "q.jsonl", "split": "train"}]})");
  CHECK_THROWS_WITH_AS(load_corpus(dir.string()), doctest::Contains("other"),
                       std::runtime_error);
}

TEST_SUITE_END();
