// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hopper/scenegraph/graph.hpp"

namespace hopper {

namespace detail {

inline void warn(std::vector<std::string>* sink, std::string msg) {
  if (sink != nullptr) sink->push_back(std::move(msg));
}

inline bool looks_like_image_entry(const nlohmann::json& doc) {
  if (!doc.is_object()) return false;
  auto it = doc.find("objects");
  if (it == doc.end() || !it->is_object()) return false;
  // A bare object map keyed "objects" would carry a "name" field.
  return !it->contains("name");
}

}  // namespace detail

/// Builds an open (not yet closed) scene graph from one GQA image entry,
/// `{"objects": {...}, ...}`, or from a bare object map `{id: {...}}`.
///
/// Objects become entities in key order; each (object, attribute) pair then
/// becomes an attribute entity linked by `has_attribute`. Relation ids are
/// assigned in sorted label order. Unknown fields are reported through
/// `warnings` and otherwise ignored.
inline SceneGraph load_scene_graph(const nlohmann::json& doc, std::vector<std::string>* warnings = nullptr) {
  static const std::set<std::string> image_fields{"objects", "width", "height", "location", "weather"};
  static const std::set<std::string> object_fields{"name", "attributes", "relations", "x", "y", "w", "h"};
  static const std::set<std::string> relation_fields{"name", "object"};

  if (!doc.is_object()) throw Error(Errc::ingestion, "scene graph document must be a JSON object");
  const nlohmann::json* objects = &doc;
  if (detail::looks_like_image_entry(doc)) {
    objects = &doc.at("objects");
    for (const auto& [key, _] : doc.items()) {
      if (image_fields.count(key) == 0) detail::warn(warnings, "ignoring unknown image field '" + key + "'");
    }
  }

  std::set<std::string> relation_labels;
  bool any_attribute = false;
  for (const auto& [oid, obj] : objects->items()) {
    if (!obj.is_object()) throw Error(Errc::ingestion, "object '" + oid + "' is not a JSON object");
    if (!obj.contains("name") || !obj.at("name").is_string()) {
      throw Error(Errc::ingestion, "object '" + oid + "' has no name");
    }
    for (const auto& [key, _] : obj.items()) {
      if (object_fields.count(key) == 0) {
        detail::warn(warnings, "ignoring unknown field '" + key + "' on object '" + oid + "'");
      }
    }
    if (auto it = obj.find("attributes"); it != obj.end() && !it->empty()) any_attribute = true;
    if (auto it = obj.find("relations"); it != obj.end()) {
      for (const auto& rel : *it) {
        if (!rel.contains("name") || !rel.contains("object")) {
          throw Error(Errc::ingestion, "relation on object '" + oid + "' needs name and object");
        }
        for (const auto& [key, _] : rel.items()) {
          if (relation_fields.count(key) == 0) {
            detail::warn(warnings, "ignoring unknown relation field '" + key + "' on object '" + oid + "'");
          }
        }
        const auto target = rel.at("object").is_string() ? rel.at("object").get<std::string>()
                                                          : rel.at("object").dump();
        if (!objects->contains(target)) {
          throw Error(Errc::ingestion, "dangling object reference '" + target + "' in relation '" +
                                           rel.at("name").get<std::string>() + "' of object '" + oid + "'");
        }
        relation_labels.insert(rel.at("name").get<std::string>());
      }
    }
  }
  if (any_attribute) relation_labels.insert(labels::has_attribute);

  SceneGraph sg;
  for (const auto& label : relation_labels) sg.add_relation(label);

  std::map<std::string, int> object_id;
  for (const auto& [oid, obj] : objects->items()) {
    object_id[oid] = sg.add_entity(obj.at("name").get<std::string>(), EntityKind::object, AuxRole::none, oid);
  }
  for (const auto& [oid, obj] : objects->items()) {
    auto it = obj.find("attributes");
    if (it == obj.end()) continue;
    std::set<std::string> seen;
    for (const auto& attr : *it) {
      const auto label = attr.get<std::string>();
      if (!seen.insert(label).second) continue;
      const int a = sg.add_entity(label, EntityKind::attribute, AuxRole::none, oid);
      sg.add_triple(object_id.at(oid), *sg.find_relation(labels::has_attribute, false), a);
    }
  }
  for (const auto& [oid, obj] : objects->items()) {
    auto it = obj.find("relations");
    if (it == obj.end()) continue;
    for (const auto& rel : *it) {
      const auto target = rel.at("object").is_string() ? rel.at("object").get<std::string>() : rel.at("object").dump();
      sg.add_triple(object_id.at(oid), *sg.find_relation(rel.at("name").get<std::string>(), false),
                    object_id.at(target));
    }
  }
  return sg;
}

/// Loads a GQA scene-graph file: a map image-id -> image entry. A file that
/// holds a single image entry (or a bare object map) is returned under the
/// key "0".
inline std::map<std::string, SceneGraph> load_scene_graph_file(const std::string& path,
                                                               std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open scene graph file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, path + ": " + e.what());
  }
  std::map<std::string, SceneGraph> out;
  if (detail::looks_like_image_entry(doc)) {
    out.emplace("0", load_scene_graph(doc, warnings));
    return out;
  }
  bool all_images = doc.is_object() && !doc.empty();
  for (const auto& [_, v] : doc.items()) all_images = all_images && detail::looks_like_image_entry(v);
  if (!all_images) {
    out.emplace("0", load_scene_graph(doc, warnings));
    return out;
  }
  for (const auto& [image, entry] : doc.items()) out.emplace(image, load_scene_graph(entry, warnings));
  return out;
}

}  // namespace hopper
