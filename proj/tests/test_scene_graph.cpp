#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <set>

#include "rng.hpp"
#include "scene_graph.hpp"

using namespace sgw;

namespace {

SceneGraph one_triple_graph() {
  SceneGraph g("g1");
  g.add_entity(SceneEntity{"a", "motorcycle", EntityKind::object, std::nullopt});
  g.add_entity(SceneEntity{"b", "tire", EntityKind::object, std::nullopt});
  g.add_triple("a", "has_part", "b");
  return g;
}

SceneGraph random_graph(Rng& rng) {
  SceneGraph g("r");
  const int n = 2 + rng.uniform_int(8);
  for (int i = 0; i < n; ++i)
    g.add_entity(SceneEntity{"e" + std::to_string(i), "label" + std::to_string(rng.uniform_int(5)),
                             rng.uniform() < 0.7 ? EntityKind::object : EntityKind::attribute,
                             std::nullopt});
  const int t = rng.uniform_int(2 * n + 1);
  for (int i = 0; i < t; ++i) {
    const std::string s = "e" + std::to_string(rng.uniform_int(n));
    const std::string o = "e" + std::to_string(rng.uniform_int(n));
    g.add_triple(s, "r" + std::to_string(rng.uniform_int(4)), o);
  }
  return g;
}

}  // namespace

TEST_SUITE_BEGIN("scene_graph");

TEST_CASE("inverse labels are an involution, NO_OP is self-inverse") {
  RelationLabel r = RelationLabel::make("has_part");
  CHECK(!r.is_inverse);
  RelationLabel inv = r.inverse();
  CHECK(inv.is_inverse);
  CHECK(inv.name == "has_part^-1");
  CHECK(inv.inverse().name == "has_part");
  CHECK(RelationLabel::make(kNoOp).inverse().name == kNoOp);
}

TEST_CASE("added triples are queryable and idempotent") {
  SceneGraph g = one_triple_graph();
  const auto& out = g.outgoing("a");
  REQUIRE(out.size() == 1);
  CHECK(out[0].first.name == "has_part");
  CHECK(out[0].second == "b");
  g.add_triple("a", "has_part", "b");
  CHECK(g.triple_count() == 1);
}

TEST_CASE("triples need registered endpoints") {
  SceneGraph g = one_triple_graph();
  CHECK_THROWS_WITH_AS(g.add_triple("a", "rel", "ghost"), doctest::Contains("ghost"),
                       std::invalid_argument);
}

TEST_CASE("reserved relations are rejected from user input") {
  SceneGraph g = one_triple_graph();
  CHECK_THROWS_AS(g.add_triple("a", "NO_OP", "a"), std::invalid_argument);
  CHECK_THROWS_AS(g.add_triple("a", "HUB_EDGE", "b"), std::invalid_argument);
  CHECK_THROWS_AS(g.add_triple("a", "HUB_EDGE^-1", "b"), std::invalid_argument);
  CHECK_THROWS_AS(g.add_triple("a", "TO_ANSWER", "b"), std::invalid_argument);
}

TEST_CASE("augmenting the 1-triple graph enumerates exactly the expected sets") {
  const SceneGraph aug = one_triple_graph().augment();
  CHECK(aug.entity_count() == 5);  // a, b, hub, yes, no
  CHECK(aug.has_entity("hub"));
  CHECK(aug.has_entity("yes"));
  CHECK(aug.has_entity("no"));
  // (a,r,b), (b,r^-1,a), 5 NO_OP loops, hub<->a, hub<->b
  CHECK(aug.triple_count() == 2 + 5 + 4);
  const auto triples = aug.triples();
  auto has = [&](const std::string& s, const std::string& p, const std::string& o) {
    return std::any_of(triples.begin(), triples.end(), [&](const Triple& t) {
      return t.subject == s && t.predicate.name == p && t.object == o;
    });
  };
  CHECK(has("a", "has_part", "b"));
  CHECK(has("b", "has_part^-1", "a"));
  CHECK(has("hub", "HUB_EDGE", "a"));
  CHECK(has("a", "HUB_EDGE^-1", "hub"));
  CHECK(has("hub", "HUB_EDGE", "b"));
  CHECK(has("b", "HUB_EDGE^-1", "hub"));
  for (const char* e : {"a", "b", "hub", "yes", "no"}) CHECK(has(e, "NO_OP", e));
  // hub does not point at the artificial nodes
  CHECK(!has("hub", "HUB_EDGE", "yes"));
  CHECK(!has("hub", "HUB_EDGE", "no"));
}

TEST_CASE("augmenting the empty graph leaves hub/yes/no with their loops") {
  const SceneGraph aug = SceneGraph("empty").augment();
  CHECK(aug.entity_count() == 3);
  CHECK(aug.triple_count() == 3);
  CHECK(aug.validate().empty());
}

TEST_CASE("double augmentation fails") {
  const SceneGraph aug = one_triple_graph().augment();
  CHECK_THROWS_AS(aug.augment(), std::invalid_argument);
  CHECK_THROWS_AS(const_cast<SceneGraph&>(aug).add_triple("a", "x", "b"),
                  std::invalid_argument);
}

TEST_CASE("outgoing order is sorted and includes the NO_OP loop") {
  const SceneGraph aug = one_triple_graph().augment();
  const auto& hub = aug.outgoing("hub");
  REQUIRE(hub.size() == 3);
  CHECK(hub[0].first.name == "HUB_EDGE");
  CHECK(hub[0].second == "a");
  CHECK(hub[1].first.name == "HUB_EDGE");
  CHECK(hub[1].second == "b");
  CHECK(hub[2].first.name == "NO_OP");
  CHECK(hub[2].second == "hub");

  SceneGraph iso("iso");
  iso.add_entity(SceneEntity{"n", "node", EntityKind::object, std::nullopt});
  const SceneGraph iso_aug = iso.augment();
  const auto& out = iso_aug.outgoing("n");
  // HUB_EDGE^-1 back to hub plus the NO_OP loop
  REQUIRE(out.size() == 2);
  CHECK(out[0].first.name == "HUB_EDGE^-1");
  CHECK(out[1].first.name == "NO_OP");
  CHECK(out[1].second == "n");

  CHECK_THROWS_AS(aug.outgoing("ghost"), std::invalid_argument);
}

TEST_CASE("outgoing before augmentation lists exactly the user edges") {
  SceneGraph g("g");
  g.add_entity(SceneEntity{"x", "x", EntityKind::object, std::nullopt});
  g.add_entity(SceneEntity{"y", "y", EntityKind::object, std::nullopt});
  g.add_triple("x", "b_rel", "y");
  g.add_triple("x", "a_rel", "y");
  const auto& out = g.outgoing("x");
  REQUIRE(out.size() == 2);
  CHECK(out[0].first.name == "a_rel");  // sorted by relation name
  CHECK(out[1].first.name == "b_rel");
}

TEST_CASE("validate flags missing inverses and extra artificials") {
  SceneGraph g = one_triple_graph();
  CHECK(g.validate().empty());
  const SceneGraph aug = g.augment();
  CHECK(aug.validate().empty());
}

TEST_CASE("multigraph: parallel edges with distinct predicates coexist") {
  SceneGraph g("m");
  g.add_entity(SceneEntity{"x", "x", EntityKind::object, std::nullopt});
  g.add_entity(SceneEntity{"y", "y", EntityKind::object, std::nullopt});
  g.add_triple("x", "left_of", "y");
  g.add_triple("x", "near", "y");
  CHECK(g.outgoing("x").size() == 2);
}

TEST_CASE("augmentation properties hold on random graphs") {
  Rng rng(42);
  for (int round = 0; round < 200; ++round) {
    SceneGraph g = random_graph(rng);
    const size_t before_entities = g.entity_count();
    const size_t before_triples = g.triple_count();
    const SceneGraph aug = g.augment();

    CHECK(aug.entity_count() == before_entities + 3);
    CHECK(aug.validate().empty());

    size_t noop = 0, kept = 0, inverse_marked = 0;
    std::set<std::tuple<std::string, std::string, std::string>> forward;
    for (const Triple& t : aug.triples()) {
      if (t.predicate.base == kNoOp) ++noop;
      if (t.predicate.is_inverse) ++inverse_marked;
    }
    CHECK(noop == before_entities + 3);

    // involution: dropping inverse-marked and artificial triples recovers
    // exactly the original set
    for (const Triple& t : aug.triples())
      if (!t.predicate.is_inverse && t.predicate.base != kNoOp &&
          t.predicate.base != kHubEdge) {
        forward.insert({t.subject, t.predicate.name, t.object});
        ++kept;
      }
    CHECK(kept == before_triples);
    for (const Triple& t : g.triples())
      CHECK(forward.count({t.subject, t.predicate.name, t.object}) == 1);

    // every node keeps its NO_OP loop in the adjacency
    for (const SceneEntity* e : aug.entities()) {
      const auto& out = aug.outgoing(e->id);
      CHECK(std::any_of(out.begin(), out.end(), [&](const auto& p) {
        return p.first.name == kNoOp && p.second == e->id;
      }));
    }
  }
}

TEST_SUITE_END();
