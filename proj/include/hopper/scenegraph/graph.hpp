// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <compare>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "hopper/error.hpp"
#include "hopper/types.hpp"

namespace hopper {

enum class EntityKind { object, attribute, auxiliary };
enum class AuxRole { none, hub, yes, no };

struct Entity {
  int id = 0;
  std::string label;
  EntityKind kind = EntityKind::object;
  AuxRole aux_role = AuxRole::none;
  /// Object key in the source document; empty for derived nodes.
  std::string source;

  bool auxiliary() const { return kind == EntityKind::auxiliary; }
};

struct Relation {
  int id = 0;
  std::string label;
  bool is_inverse = false;
  int inverse_id = -1;
  bool is_noop = false;
};

struct Triple {
  int subject = 0;
  int relation = 0;
  int object = 0;
  auto operator<=>(const Triple&) const = default;
};

/// One admissible move: follow `relation` to `target`.
struct Action {
  int relation = 0;
  int target = 0;
  auto operator<=>(const Action&) const = default;
};

namespace labels {
inline constexpr const char* no_op = "NO_OP";
inline constexpr const char* hub_link = "HUB_LINK";
inline constexpr const char* answer_yes = "ANSWER_YES";
inline constexpr const char* answer_no = "ANSWER_NO";
inline constexpr const char* has_attribute = "has_attribute";
inline constexpr const char* hub = "hub";
inline constexpr const char* yes = "yes";
inline constexpr const char* no = "no";
}  // namespace labels

enum class AuxMode { none, query, binary };

/// Typed directed multigraph of scene entities.
///
/// Content entities (objects and attributes) always occupy ids
/// 0..content_count()-1; auxiliary entities are appended after them. Triples
/// are kept as a sorted set, so adjacency lists come out ordered by
/// (relation id, target id).
class SceneGraph {
 public:
  const std::vector<Entity>& entities() const { return entities_; }
  const std::vector<Relation>& relations() const { return relations_; }
  const std::set<Triple>& triples() const { return triples_; }

  std::size_t size() const { return entities_.size(); }
  std::size_t content_count() const { return content_count_; }
  bool closed() const { return closed_; }
  AuxMode aux_mode() const { return aux_mode_; }

  const Entity& entity(int id) const {
    check_entity(id);
    return entities_[static_cast<std::size_t>(id)];
  }
  const Relation& relation(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= relations_.size()) {
      throw Error(Errc::lookup, "unknown relation id " + std::to_string(id));
    }
    return relations_[static_cast<std::size_t>(id)];
  }

  int add_entity(std::string label, EntityKind kind, AuxRole role = AuxRole::none, std::string source = {}) {
    if (kind != EntityKind::auxiliary && content_count_ != entities_.size()) {
      throw Error(Errc::contract_violation, "content entities must precede auxiliary ones");
    }
    const int id = static_cast<int>(entities_.size());
    entities_.push_back(Entity{id, std::move(label), kind, role, std::move(source)});
    if (kind != EntityKind::auxiliary) ++content_count_;
    adjacency_.emplace_back();
    return id;
  }

  std::optional<int> find_relation(std::string_view label, bool inverse) const {
    for (const auto& r : relations_) {
      if (r.label == label && r.is_inverse == inverse) return r.id;
    }
    return std::nullopt;
  }

  int add_relation(std::string label, bool inverse = false, bool noop = false) {
    if (auto existing = find_relation(label, inverse)) return *existing;
    const int id = static_cast<int>(relations_.size());
    relations_.push_back(Relation{id, std::move(label), inverse, noop ? id : -1, noop});
    return id;
  }

  void link_inverse(int a, int b) {
    relations_.at(static_cast<std::size_t>(a)).inverse_id = b;
    relations_.at(static_cast<std::size_t>(b)).inverse_id = a;
  }

  bool add_triple(int s, int r, int o) {
    check_entity(s);
    check_entity(o);
    relation(r);
    const bool inserted = triples_.insert(Triple{s, r, o}).second;
    if (inserted) {
      auto& adj = adjacency_[static_cast<std::size_t>(s)];
      const Action a{r, o};
      adj.insert(std::lower_bound(adj.begin(), adj.end(), a), a);
    }
    return inserted;
  }

  bool has_triple(int s, int r, int o) const { return triples_.count(Triple{s, r, o}) != 0; }

  /// Every outgoing (relation, target) pair of `entity`, sorted.
  std::span<const Action> action_space(int entity) const {
    check_entity(entity);
    return adjacency_[static_cast<std::size_t>(entity)];
  }

  bool is_admissible(int entity, Action a) const {
    auto acts = action_space(entity);
    return std::binary_search(acts.begin(), acts.end(), a);
  }

  std::optional<int> aux_node(AuxRole role) const {
    for (std::size_t i = content_count_; i < entities_.size(); ++i) {
      if (entities_[i].aux_role == role) return static_cast<int>(i);
    }
    return std::nullopt;
  }
  std::optional<int> hub() const { return aux_node(AuxRole::hub); }
  std::optional<int> yes_node() const { return aux_node(AuxRole::yes); }
  std::optional<int> no_node() const { return aux_node(AuxRole::no); }

  std::optional<int> noop_relation() const {
    for (const auto& r : relations_) {
      if (r.is_noop) return r.id;
    }
    return std::nullopt;
  }

  /// "label-k" where k counts entities sharing the label in id order.
  std::string display_name(int id) const {
    const auto& e = entity(id);
    if (e.auxiliary()) return e.label;
    int ordinal = 0;
    for (int i = 0; i <= id; ++i) {
      if (entities_[static_cast<std::size_t>(i)].label == e.label) ++ordinal;
    }
    return e.label + "-" + std::to_string(ordinal);
  }

  std::string relation_display(int id) const {
    const auto& r = relation(id);
    return r.is_inverse ? r.label + "^-1" : r.label;
  }

  void mark_closed() { closed_ = true; }
  void mark_attached(AuxMode m) { aux_mode_ = m; }

  friend bool operator==(const SceneGraph& a, const SceneGraph& b) {
    auto ent_key = [](const Entity& e) { return std::tie(e.id, e.label, e.kind, e.aux_role, e.source); };
    auto rel_key = [](const Relation& r) { return std::tie(r.id, r.label, r.is_inverse, r.inverse_id, r.is_noop); };
    if (a.entities_.size() != b.entities_.size() || a.relations_.size() != b.relations_.size()) return false;
    for (std::size_t i = 0; i < a.entities_.size(); ++i) {
      if (ent_key(a.entities_[i]) != ent_key(b.entities_[i])) return false;
    }
    for (std::size_t i = 0; i < a.relations_.size(); ++i) {
      if (rel_key(a.relations_[i]) != rel_key(b.relations_[i])) return false;
    }
    return a.triples_ == b.triples_ && a.closed_ == b.closed_ && a.aux_mode_ == b.aux_mode_;
  }

 private:
  void check_entity(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= entities_.size()) {
      throw Error(Errc::lookup, "unknown entity id " + std::to_string(id));
    }
  }

  std::vector<Entity> entities_;
  std::vector<Relation> relations_;
  std::set<Triple> triples_;
  std::vector<std::vector<Action>> adjacency_;
  std::size_t content_count_ = 0;
  bool closed_ = false;
  AuxMode aux_mode_ = AuxMode::none;
};

/// Adds inverse relations for every triple and a NO_OP self-loop on every
/// content entity. Idempotent.
inline SceneGraph close_graph(SceneGraph sg) {
  const int noop = sg.add_relation(labels::no_op, false, true);
  const std::size_t n_rel = sg.relations().size();
  for (std::size_t i = 0; i < n_rel; ++i) {
    const auto r = sg.relations()[i];
    if (r.is_noop || r.inverse_id >= 0) continue;
    const int inv = sg.add_relation(r.label, !r.is_inverse);
    sg.link_inverse(r.id, inv);
  }
  const std::vector<Triple> forward(sg.triples().begin(), sg.triples().end());
  for (const auto& t : forward) sg.add_triple(t.object, sg.relation(t.relation).inverse_id, t.subject);
  for (const auto& e : sg.entities()) {
    if (!e.auxiliary()) sg.add_triple(e.id, noop, e.id);
  }
  sg.mark_closed();
  return sg;
}

/// Appends the hub (linked to and from every content entity) and, for binary
/// questions, absorbing YES/NO nodes reachable from every content entity.
/// The hub has no self-loop; YES and NO only allow NO_OP.
inline SceneGraph attach_auxiliary(SceneGraph sg, QuestionType type) {
  if (sg.aux_mode() != AuxMode::none) throw Error(Errc::already_attached, "auxiliary nodes already attached");
  if (sg.content_count() == 0) throw Error(Errc::graph_empty, "cannot attach auxiliary nodes to an empty graph");
  if (!sg.closed()) throw Error(Errc::contract_violation, "attach_auxiliary needs a closed graph");

  const int content = static_cast<int>(sg.content_count());
  const int noop = *sg.noop_relation();
  const int link = sg.add_relation(labels::hub_link);
  const int link_inv = sg.add_relation(labels::hub_link, true);
  sg.link_inverse(link, link_inv);
  const int hub = sg.add_entity(labels::hub, EntityKind::auxiliary, AuxRole::hub);
  for (int e = 0; e < content; ++e) {
    sg.add_triple(hub, link, e);
    sg.add_triple(e, link_inv, hub);
  }
  if (type == QuestionType::binary) {
    const int ry = sg.add_relation(labels::answer_yes);
    const int ry_inv = sg.add_relation(labels::answer_yes, true);
    sg.link_inverse(ry, ry_inv);
    const int rn = sg.add_relation(labels::answer_no);
    const int rn_inv = sg.add_relation(labels::answer_no, true);
    sg.link_inverse(rn, rn_inv);
    const int yes = sg.add_entity(labels::yes, EntityKind::auxiliary, AuxRole::yes);
    const int no = sg.add_entity(labels::no, EntityKind::auxiliary, AuxRole::no);
    for (int e = 0; e < content; ++e) {
      sg.add_triple(e, ry, yes);
      sg.add_triple(e, rn, no);
    }
    sg.add_triple(yes, noop, yes);
    sg.add_triple(no, noop, no);
  }
  sg.mark_attached(type == QuestionType::binary ? AuxMode::binary : AuxMode::query);
  return sg;
}

/// True for ANSWER_YES/ANSWER_NO edges, which are exempt from inverse
/// closure because YES/NO are absorbing.
inline bool is_answer_relation(const SceneGraph& sg, int relation) {
  const auto& r = sg.relation(relation);
  return !r.is_inverse && (r.label == labels::answer_yes || r.label == labels::answer_no);
}

}  // namespace hopper
