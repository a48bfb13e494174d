#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <filesystem>

#include <json.hpp>

#include "corpus.hpp"
#include "evaluator.hpp"
#include "synthetic.hpp"

using namespace sgw;

namespace {

QuestionRecord make_q(const std::string& qid, QType type, const std::string& answer,
                      std::optional<std::vector<std::string>> valid = std::nullopt,
                      std::optional<std::vector<std::string>> plausible = std::nullopt,
                      std::optional<std::string> group = std::nullopt) {
  QuestionRecord q;
  q.qid = qid;
  q.graph_id = "g";
  q.tokens = {"q"};
  q.answer = answer;
  q.type = type;
  q.valid = std::move(valid);
  q.plausible = std::move(plausible);
  q.group = std::move(group);
  return q;
}

// ten questions, hand-computed metrics:
//   accuracy 6/10 = 60.0; binary 2/4 = 50.0; open 4/6 = 66.667
//   validity (q04,q05,q07): red in {red,blue}, red in {red,blue},
//     glass not in {wood,metal} -> 2/3 = 66.667
//   plausibility (q04,q05,q07): red in {red}, red in {blue,red},
//     glass not in {wood} -> 2/3 = 66.667
//   consistency: group q04 anchor correct, entailed q01 ok / q02 wrong -> 50
//                group q06 anchor correct, entailed q03 ok -> 100
//                group q05 anchor wrong -> skipped
//     mean(50, 100) = 75.0
std::pair<std::vector<QuestionRecord>, std::map<std::string, std::string>> fixture() {
  std::vector<QuestionRecord> qs;
  std::map<std::string, std::string> preds;
  qs.push_back(make_q("q01", QType::binary, "yes", std::nullopt, std::nullopt, "q04"));
  preds["q01"] = "yes";
  qs.push_back(make_q("q02", QType::binary, "no", std::nullopt, std::nullopt, "q04"));
  preds["q02"] = "yes";
  qs.push_back(make_q("q03", QType::binary, "yes", std::nullopt, std::nullopt, "q06"));
  preds["q03"] = "yes";
  qs.push_back(make_q("q04", QType::open, "red", std::vector<std::string>{"red", "blue"},
                      std::vector<std::string>{"red"}, "q04"));
  preds["q04"] = "red";
  qs.push_back(make_q("q05", QType::open, "blue", std::vector<std::string>{"red", "blue"},
                      std::vector<std::string>{"blue", "red"}, "q05"));
  preds["q05"] = "red";
  qs.push_back(make_q("q06", QType::open, "dog", std::nullopt, std::nullopt, "q06"));
  preds["q06"] = "dog";
  qs.push_back(make_q("q07", QType::open, "wood", std::vector<std::string>{"wood", "metal"},
                      std::vector<std::string>{"wood"}));
  preds["q07"] = "glass";
  qs.push_back(make_q("q08", QType::open, "red"));
  preds["q08"] = "red";
  qs.push_back(make_q("q09", QType::binary, "yes", std::nullopt, std::nullopt, "q05"));
  preds["q09"] = "no";
  qs.push_back(make_q("q10", QType::open, "cat"));
  preds["q10"] = "cat";
  return {qs, preds};
}

}  // namespace

TEST_SUITE_BEGIN("evaluator");

TEST_CASE("metric suite reproduces hand-computed values to 0.1") {
  auto [qs, preds] = fixture();
  const MetricsReport rep = evaluate(preds, qs);
  CHECK(rep.accuracy == doctest::Approx(60.0).epsilon(1e-9));
  REQUIRE(rep.binary.has_value());
  CHECK(*rep.binary == doctest::Approx(50.0).epsilon(1e-9));
  REQUIRE(rep.open.has_value());
  CHECK(std::abs(*rep.open - 66.7) < 0.05);
  REQUIRE(rep.validity.has_value());
  CHECK(std::abs(*rep.validity - 66.7) < 0.05);
  REQUIRE(rep.plausibility.has_value());
  CHECK(std::abs(*rep.plausibility - 66.7) < 0.05);
  REQUIRE(rep.consistency.has_value());
  CHECK(*rep.consistency == doctest::Approx(75.0).epsilon(1e-9));

  const nlohmann::json j = nlohmann::json::parse(rep.to_json());
  CHECK(j["accuracy"] == rep.accuracy);
  CHECK(rep.to_table().find("Binary") != std::string::npos);
}

TEST_CASE("perfect predictions score 100 on every applicable metric") {
  auto [qs, preds] = fixture();
  for (const QuestionRecord& q : qs) preds[q.qid] = q.answer;
  const MetricsReport rep = evaluate(preds, qs);
  CHECK(rep.accuracy == 100.0);
  CHECK(*rep.binary == 100.0);
  CHECK(*rep.open == 100.0);
  CHECK(*rep.validity == 100.0);
  CHECK(*rep.plausibility == 100.0);
  CHECK(*rep.consistency == 100.0);
}

TEST_CASE("two questions one correct is fifty percent") {
  std::vector<QuestionRecord> qs = {make_q("a", QType::open, "x"),
                                    make_q("b", QType::open, "y")};
  std::map<std::string, std::string> preds{{"a", "x"}, {"b", "wrong"}};
  const MetricsReport rep = evaluate(preds, qs);
  CHECK(rep.accuracy == 50.0);
  CHECK(!rep.binary.has_value());
  CHECK(!rep.validity.has_value());
  CHECK(!rep.consistency.has_value());
}

TEST_CASE("qid mismatches are errors") {
  std::vector<QuestionRecord> qs = {make_q("a", QType::open, "x")};
  std::map<std::string, std::string> missing;
  CHECK_THROWS_AS(evaluate(missing, qs), std::invalid_argument);
  std::map<std::string, std::string> extra{{"a", "x"}, {"ghost", "y"}};
  CHECK_THROWS_AS(evaluate(extra, qs), std::invalid_argument);
}

TEST_CASE("evaluate is invariant to question order") {
  auto [qs, preds] = fixture();
  auto rev = qs;
  std::reverse(rev.begin(), rev.end());
  const MetricsReport a = evaluate(preds, qs);
  const MetricsReport b = evaluate(preds, rev);
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("oracle search agrees with hand-enumerable cases") {
  SceneGraph g("g");
  g.add_entity(SceneEntity{"ball-1", "ball", EntityKind::object, std::nullopt});
  g.add_entity(SceneEntity{"red-2", "red", EntityKind::attribute, std::nullopt});
  g.add_triple("ball-1", "is", "red-2");
  const SceneGraph aug = g.augment();
  const EpisodeConfig cfg;

  QuestionRecord open_q = make_q("o", QType::open, "red");
  open_q.graph_id = "g";
  OracleResult res = oracle_search(aug, open_q, cfg);
  CHECK(res.reachable);
  // the hub reaches every original node, so one hop suffices
  REQUIRE(res.path.size() == 1);
  CHECK(res.path[0].first == "HUB_EDGE");
  CHECK(res.path[0].second == "red-2");

  QuestionRecord absent = make_q("a", QType::open, "elephant");
  absent.graph_id = "g";
  CHECK(!oracle_search(aug, absent, cfg).reachable);

  // binary questions are always reachable through the injected transitions
  QuestionRecord yes_q = make_q("y", QType::binary, "yes");
  yes_q.graph_id = "g";
  CHECK(oracle_search(aug, yes_q, cfg).reachable);
  QuestionRecord no_q = make_q("n", QType::binary, "no");
  no_q.graph_id = "g";
  CHECK(oracle_search(aug, no_q, cfg).reachable);
}

TEST_CASE("oracle search refuses oversized search spaces with an estimate") {
  SceneGraph g("big");
  const int n = 40;
  for (int i = 0; i < n; ++i)
    g.add_entity(SceneEntity{"e" + std::to_string(i), "thing", EntityKind::object,
                             std::nullopt});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) g.add_triple("e" + std::to_string(i), "near", "e" + std::to_string(j));
  EpisodeConfig cfg;
  cfg.max_steps = 6;
  QuestionRecord q = make_q("q", QType::open, "thing");
  q.graph_id = "big";
  CHECK_THROWS_WITH_AS(oracle_search(g.augment(), q, cfg), doctest::Contains("budget"),
                       std::invalid_argument);
}

TEST_CASE("chance level: two equally likely terminals, one correct, is 50") {
  SceneGraph g("solo");
  g.add_entity(SceneEntity{"x", "foo", EntityKind::object, std::nullopt});
  const SceneGraph aug = g.augment();
  EpisodeConfig cfg;
  cfg.max_steps = 1;
  QuestionRecord q = make_q("q", QType::open, "foo");
  q.graph_id = "solo";
  // hub offers HUB_EDGE->x and NO_OP->hub, so half the walks end on x
  CHECK(chance_level_question(aug, q, cfg) == doctest::Approx(50.0).epsilon(1e-12));

  // binary with injection at the very first (= final) step: four actions,
  // one of which is the matching answer node
  QuestionRecord b = make_q("b", QType::binary, "yes");
  b.graph_id = "solo";
  CHECK(chance_level_question(aug, b, cfg) == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("monte-carlo random walking matches the exact chance level") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sgwalk-tests-chance";
  fs::remove_all(dir);
  SynthConfig cfg;
  cfg.num_graphs = 8;
  cfg.questions_per_graph = 6;
  cfg.seed = 5;
  generate_synthetic_corpus(cfg, dir.string());
  const Corpus corpus = load_corpus(dir.string());
  std::map<std::string, SceneGraph> augmented;
  for (const auto& [gid, g] : corpus.graphs) augmented.emplace(gid, g.augment());
  const EpisodeConfig ecfg;
  const double exact = chance_level(augmented, corpus.questions, ecfg);
  const double mc = random_walk_accuracy(augmented, corpus.questions, ecfg, 100000, 9);
  CHECK(std::abs(exact - mc) <= 1.0);
  CHECK(exact > 0.0);
  CHECK(exact < 60.0);
}

TEST_SUITE_END();
