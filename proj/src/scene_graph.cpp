#include "scene_graph.hpp"

#include <algorithm>
#include <stdexcept>

namespace sgw {

namespace {
constexpr const char* kInverseSuffix = "^-1";

bool has_inverse_suffix(const std::string& name) {
  return name.size() > 3 && name.compare(name.size() - 3, 3, kInverseSuffix) == 0;
}
}  // namespace

const char* kind_name(EntityKind k) {
  switch (k) {
    case EntityKind::object: return "object";
    case EntityKind::attribute: return "attribute";
    case EntityKind::hub: return "artificial-hub";
    case EntityKind::yes_node: return "artificial-yes";
    case EntityKind::no_node: return "artificial-no";
  }
  return "?";
}

bool is_artificial(EntityKind k) { return k != EntityKind::object && k != EntityKind::attribute; }

RelationLabel RelationLabel::make(const std::string& name) {
  RelationLabel r;
  r.name = name;
  if (has_inverse_suffix(name)) {
    r.is_inverse = true;
    r.base = name.substr(0, name.size() - 3);
  } else {
    r.base = name;
  }
  return r;
}

RelationLabel RelationLabel::inverse() const {
  if (base == kNoOp) return *this;  // self-loops are their own inverses
  RelationLabel r;
  r.base = base;
  r.is_inverse = !is_inverse;
  r.name = r.is_inverse ? base + kInverseSuffix : base;
  return r;
}

bool is_reserved_relation(const std::string& name) {
  const RelationLabel r = RelationLabel::make(name);
  return r.base == kNoOp || r.base == kHubEdge || r.base == kToAnswer;
}

void SceneGraph::add_entity(SceneEntity e) {
  if (augmented_) throw std::invalid_argument("scene graph: cannot modify an augmented graph");
  if (e.id.empty()) throw std::invalid_argument("scene graph: empty entity-id");
  if (entities_.count(e.id))
    throw std::invalid_argument("scene graph: duplicate entity-id '" + e.id + "'");
  if (is_artificial(e.kind))
    throw std::invalid_argument("scene graph: artificial entities are added by augment()");
  adj_[e.id];  // ensure adjacency slot exists
  entities_.emplace(e.id, std::move(e));
}

const SceneEntity& SceneGraph::entity(const std::string& id) const {
  auto it = entities_.find(id);
  if (it == entities_.end())
    throw std::invalid_argument("scene graph: unknown entity '" + id + "'");
  return it->second;
}

std::vector<const SceneEntity*> SceneGraph::entities() const {
  std::vector<const SceneEntity*> out;
  out.reserve(entities_.size());
  for (const auto& [id, e] : entities_) out.push_back(&e);
  return out;
}

std::vector<Triple> SceneGraph::triples() const {
  std::vector<Triple> out;
  out.reserve(triple_set_.size());
  for (const auto& [s, p, o] : triple_set_)
    out.push_back(Triple{s, RelationLabel::make(p), o});
  return out;
}

void SceneGraph::insert_triple(const std::string& s, const RelationLabel& p,
                               const std::string& o) {
  auto key = std::make_tuple(s, p.name, o);
  if (triple_set_.count(key)) return;  // idempotent
  triple_set_.insert(std::move(key));
  auto& edges = adj_[s];
  auto entry = std::make_pair(p, o);
  auto pos = std::lower_bound(edges.begin(), edges.end(), entry,
                              [](const auto& a, const auto& b) {
                                return std::tie(a.first.name, a.second) <
                                       std::tie(b.first.name, b.second);
                              });
  edges.insert(pos, std::move(entry));
}

void SceneGraph::add_triple(const std::string& subject, const std::string& predicate,
                            const std::string& object) {
  if (augmented_) throw std::invalid_argument("scene graph: cannot modify an augmented graph");
  if (!has_entity(subject))
    throw std::invalid_argument("scene graph: triple references unknown entity '" + subject +
                                "'");
  if (!has_entity(object))
    throw std::invalid_argument("scene graph: triple references unknown entity '" + object +
                                "'");
  if (is_reserved_relation(predicate))
    throw std::invalid_argument("scene graph: relation '" + predicate + "' is reserved");
  insert_triple(subject, RelationLabel::make(predicate), object);
}

const std::vector<std::pair<RelationLabel, std::string>>& SceneGraph::outgoing(
    const std::string& e) const {
  auto it = adj_.find(e);
  if (it == adj_.end())
    throw std::invalid_argument("scene graph: unknown entity '" + e + "'");
  return it->second;
}

SceneGraph SceneGraph::augment() const {
  if (augmented_) throw std::invalid_argument("scene graph: already augmented");
  SceneGraph g;
  g.id_ = id_;
  g.entities_ = entities_;
  for (const char* rid : {kHubId, kYesId, kNoId})
    if (entities_.count(rid))
      throw std::invalid_argument(std::string("scene graph: entity-id '") + rid +
                                  "' is reserved for augmentation");
  SceneEntity hub{kHubId, "hub", EntityKind::hub, std::nullopt};
  SceneEntity yes{kYesId, "yes", EntityKind::yes_node, std::nullopt};
  SceneEntity no{kNoId, "no", EntityKind::no_node, std::nullopt};
  g.entities_.emplace(hub.id, hub);
  g.entities_.emplace(yes.id, yes);
  g.entities_.emplace(no.id, no);
  for (const auto& [id, e] : g.entities_) g.adj_[id];

  // original triples plus inverse completeness
  for (const auto& [s, p, o] : triple_set_) {
    const RelationLabel rel = RelationLabel::make(p);
    g.insert_triple(s, rel, o);
    g.insert_triple(o, rel.inverse(), s);
  }
  // hub edges to every original entity, both directions
  const RelationLabel hub_edge = RelationLabel::make(kHubEdge);
  for (const auto& [id, e] : entities_) {
    g.insert_triple(kHubId, hub_edge, id);
    g.insert_triple(id, hub_edge.inverse(), kHubId);
  }
  // NO_OP self-loop on every node, artificial ones included
  const RelationLabel noop = RelationLabel::make(kNoOp);
  for (const auto& [id, e] : g.entities_) g.insert_triple(id, noop, id);

  g.augmented_ = true;
  return g;
}

std::vector<Violation> SceneGraph::validate() const {
  std::vector<Violation> out;
  auto flag = [&](const std::string& rule, const std::string& detail) {
    out.push_back(Violation{rule, detail});
  };

  size_t hubs = 0, yeses = 0, nos = 0;
  for (const auto& [id, e] : entities_) {
    switch (e.kind) {
      case EntityKind::hub: ++hubs; break;
      case EntityKind::yes_node: ++yeses; break;
      case EntityKind::no_node: ++nos; break;
      default: break;
    }
  }
  if (hubs > 1) flag("hub-uniqueness", std::to_string(hubs) + " hub nodes present");
  if (yeses > 1) flag("yes-uniqueness", std::to_string(yeses) + " yes nodes present");
  if (nos > 1) flag("no-uniqueness", std::to_string(nos) + " no nodes present");
  if (augmented_) {
    if (hubs == 0) flag("hub-presence", "augmented graph has no hub node");
    if (yeses == 0) flag("yes-presence", "augmented graph has no yes node");
    if (nos == 0) flag("no-presence", "augmented graph has no no node");
  } else if (hubs + yeses + nos > 0) {
    flag("artificial-before-augment", "artificial nodes present before augmentation");
  }

  for (const auto& [s, p, o] : triple_set_) {
    if (!entities_.count(s))
      flag("endpoint-exists", "triple (" + s + ", " + p + ", " + o + ") has unknown subject");
    if (!entities_.count(o))
      flag("endpoint-exists", "triple (" + s + ", " + p + ", " + o + ") has unknown object");
    if (!augmented_ && is_reserved_relation(p))
      flag("reserved-relation", "relation '" + p + "' on un-augmented graph");
  }

  if (augmented_) {
    for (const auto& [s, p, o] : triple_set_) {
      const RelationLabel inv = RelationLabel::make(p).inverse();
      if (!triple_set_.count(std::make_tuple(o, inv.name, s)))
        flag("inverse-completeness",
             "(" + s + ", " + p + ", " + o + ") lacks (" + o + ", " + inv.name + ", " + s + ")");
    }
    for (const auto& [id, e] : entities_) {
      if (!triple_set_.count(std::make_tuple(id, kNoOp, id)))
        flag("no-op-loop", "entity '" + id + "' lacks its NO_OP self-loop");
      if (!is_artificial(e.kind) &&
          !triple_set_.count(std::make_tuple(kHubId, kHubEdge, id)))
        flag("hub-connectivity", "hub lacks HUB_EDGE to '" + id + "'");
      if (is_artificial(e.kind) && e.kind != EntityKind::hub &&
          triple_set_.count(std::make_tuple(kHubId, kHubEdge, id)))
        flag("hub-connectivity", "hub has HUB_EDGE to artificial '" + id + "'");
    }
  }
  return out;
}

}  // namespace sgw
