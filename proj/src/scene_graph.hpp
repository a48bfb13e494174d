#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace sgw {

enum class EntityKind { object, attribute, hub, yes_node, no_node };

const char* kind_name(EntityKind k);
bool is_artificial(EntityKind k);

struct SceneEntity {
  std::string id;
  std::string label;
  EntityKind kind = EntityKind::object;
  std::optional<std::array<double, 4>> bbox;  // pass-through metadata
};

// Relation names carry the inverse marker as a "^-1" suffix. NO_OP is its
// own inverse so self-loops stay single edges under inverse completion.
struct RelationLabel {
  std::string name;
  bool is_inverse = false;
  std::string base;

  static RelationLabel make(const std::string& name);
  RelationLabel inverse() const;

  bool operator==(const RelationLabel& o) const { return name == o.name; }
  bool operator<(const RelationLabel& o) const { return name < o.name; }
};

inline const char* kNoOp = "NO_OP";
inline const char* kHubEdge = "HUB_EDGE";
inline const char* kToAnswer = "TO_ANSWER";

bool is_reserved_relation(const std::string& name);

struct Triple {
  std::string subject;
  RelationLabel predicate;
  std::string object;
};

struct Violation {
  std::string rule;
  std::string detail;
};

// Typed directed multigraph of scene entities. Augmentation closes the
// triple set under inverses and adds the hub, NO_OP self-loops, and the
// yes/no answer nodes; augmented graphs are immutable.
class SceneGraph {
 public:
  static constexpr const char* kHubId = "hub";
  static constexpr const char* kYesId = "yes";
  static constexpr const char* kNoId = "no";

  SceneGraph() = default;
  explicit SceneGraph(std::string id) : id_(std::move(id)) {}

  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }

  void add_entity(SceneEntity e);
  void add_triple(const std::string& subject, const std::string& predicate,
                  const std::string& object);

  bool has_entity(const std::string& id) const { return entities_.count(id) > 0; }
  const SceneEntity& entity(const std::string& id) const;
  size_t entity_count() const { return entities_.size(); }
  size_t triple_count() const { return triple_set_.size(); }
  bool augmented() const { return augmented_; }

  // Sorted by entity id.
  std::vector<const SceneEntity*> entities() const;
  std::vector<Triple> triples() const;

  // Outgoing edges of e, sorted by (relation name, target id).
  const std::vector<std::pair<RelationLabel, std::string>>& outgoing(
      const std::string& e) const;

  SceneGraph augment() const;

  std::vector<Violation> validate() const;

 private:
  void insert_triple(const std::string& s, const RelationLabel& p, const std::string& o);

  std::string id_;
  bool augmented_ = false;
  std::map<std::string, SceneEntity> entities_;
  std::set<std::tuple<std::string, std::string, std::string>> triple_set_;
  std::map<std::string, std::vector<std::pair<RelationLabel, std::string>>> adj_;
};

}  // namespace sgw
