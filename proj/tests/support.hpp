// SPDX-License-Identifier: Apache-2.0
// Generators shared by the test suites.
#pragma once

#include <string>
#include <vector>

#include "hopper/numerics/rng.hpp"
#include "hopper/scenegraph/graph.hpp"

namespace hopper::testing {

inline const std::vector<std::string>& object_pool() {
  static const std::vector<std::string> pool{"cup", "table", "man", "dog", "car", "tree", "lamp", "book"};
  return pool;
}

inline const std::vector<std::string>& relation_pool() {
  static const std::vector<std::string> pool{"on", "near", "holding", "behind", "under"};
  return pool;
}

/// Open graph with `nodes` objects and up to `triples` random edges over a
/// small label pool (duplicates collapse).
inline SceneGraph random_open_graph(Rng& rng, int nodes, int triples) {
  SceneGraph sg;
  const auto& objs = object_pool();
  const auto& rels = relation_pool();
  std::vector<int> rel_ids;
  for (const auto& r : rels) rel_ids.push_back(sg.add_relation(r));
  for (int i = 0; i < nodes; ++i) sg.add_entity(objs[rng.below(objs.size())], EntityKind::object);
  for (int k = 0; k < triples && nodes > 0; ++k) {
    sg.add_triple(static_cast<int>(rng.below(nodes)), rel_ids[rng.below(rel_ids.size())],
                  static_cast<int>(rng.below(nodes)));
  }
  return sg;
}

inline SceneGraph random_attached_graph(Rng& rng, int nodes, int triples, QuestionType type) {
  return attach_auxiliary(close_graph(random_open_graph(rng, nodes, triples)), type);
}

}  // namespace hopper::testing
