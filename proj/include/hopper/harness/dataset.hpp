// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hopper/lexicon/tokenize.hpp"
#include "hopper/scenegraph/gqa.hpp"
#include "hopper/scenegraph/graph.hpp"
#include "hopper/types.hpp"

namespace hopper {

inline const std::set<std::string>& structural_tags() {
  static const std::set<std::string> tags{"query", "verify", "choose", "compare", "logical"};
  return tags;
}

inline const std::set<std::string>& semantic_tags() {
  static const std::set<std::string> tags{"object", "attribute", "category", "relation", "global"};
  return tags;
}

/// One question over one graph. `min_hops` is the hub-BFS distance to the
/// nearest answer node; `hops` is 1 + the content-graph distance from the
/// question's anchor entity, when the record knows it.
struct QARecord {
  std::string id;
  std::string question;
  std::string answer;
  std::string graph;
  QuestionType type = QuestionType::query;
  std::string structural = "query";
  std::string semantic = "object";
  std::optional<int> min_hops;
  std::optional<int> hops;
};

inline void to_json(nlohmann::json& j, const QARecord& r) {
  j = nlohmann::json{{"id", r.id},
                     {"question", r.question},
                     {"answer", r.answer},
                     {"graph", r.graph},
                     {"type", std::string(to_string(r.type))},
                     {"structural", r.structural},
                     {"semantic", r.semantic},
                     {"min_hops", r.min_hops ? nlohmann::json(*r.min_hops) : nlohmann::json(nullptr)},
                     {"hops", r.hops ? nlohmann::json(*r.hops) : nlohmann::json(nullptr)}};
}

inline QARecord record_from_json(const nlohmann::json& j, const std::string& where) {
  QARecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.graph = j.at("graph").get<std::string>();
    r.type = parse_question_type(j.at("type").get<std::string>());
    r.structural = j.value("structural", r.type == QuestionType::binary ? "verify" : "query");
    r.semantic = j.value("semantic", "object");
    if (j.contains("min_hops") && !j.at("min_hops").is_null()) r.min_hops = j.at("min_hops").get<int>();
    if (j.contains("hops") && !j.at("hops").is_null()) r.hops = j.at("hops").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, where + ": " + e.what());
  }
  if (structural_tags().count(r.structural) == 0) throw Error(Errc::parse, where + ": unknown structural tag " + r.structural);
  if (semantic_tags().count(r.semantic) == 0) throw Error(Errc::parse, where + ": unknown semantic tag " + r.semantic);
  return r;
}

inline std::vector<QARecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<QARecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse, where + ": " + e.what());
    }
    out.push_back(record_from_json(j, where));
  }
  return out;
}

inline void write_records(const std::filesystem::path& path, const std::vector<QARecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  for (const auto& r : records) out << nlohmann::json(r).dump() << "\n";
}

/// Entities a walk may stop on to answer: YES/NO for yes/no questions,
/// content nodes whose label matches the gold answer otherwise.
inline std::vector<int> answer_nodes(const SceneGraph& sg, const std::string& gold, QuestionType type) {
  std::vector<int> out;
  const auto g = to_lower(gold);
  for (const auto& e : sg.entities()) {
    if (type == QuestionType::binary) {
      if ((e.aux_role == AuxRole::yes && g == labels::yes) || (e.aux_role == AuxRole::no && g == labels::no)) {
        out.push_back(e.id);
      }
    } else if (!e.auxiliary() && to_lower(e.label) == g) {
      out.push_back(e.id);
    }
  }
  return out;
}

/// Breadth-first distance from the hub to the nearest of `targets` over the
/// attached graph's action space; nullopt when none is reachable.
inline std::optional<int> min_hops(const SceneGraph& sg, const std::vector<int>& targets) {
  auto hub = sg.hub();
  if (!hub) throw Error(Errc::hub_missing, "min_hops needs an attached graph");
  std::set<int> want(targets.begin(), targets.end());
  std::vector<int> dist(sg.size(), -1);
  std::deque<int> queue{*hub};
  dist[*hub] = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    if (want.count(u)) return dist[u];
    for (const auto& a : sg.action_space(u)) {
      if (dist[a.target] < 0) {
        dist[a.target] = dist[u] + 1;
        queue.push_back(a.target);
      }
    }
  }
  return std::nullopt;
}

/// Distance over content edges only (no hub, answer or NO_OP edges) from any
/// of `sources` to any of `targets`; nullopt when disconnected.
inline std::optional<int> content_distance(const SceneGraph& sg, const std::vector<int>& sources,
                                           const std::vector<int>& targets) {
  std::set<int> want(targets.begin(), targets.end());
  std::vector<int> dist(sg.size(), -1);
  std::deque<int> queue;
  for (int s : sources) {
    dist[s] = 0;
    queue.push_back(s);
  }
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    if (want.count(u)) return dist[u];
    for (const auto& a : sg.action_space(u)) {
      const auto& r = sg.relation(a.relation);
      if (r.is_noop || r.label == labels::hub_link || is_answer_relation(sg, a.relation)) continue;
      if (sg.entity(a.target).auxiliary() || dist[a.target] >= 0) continue;
      dist[a.target] = dist[u] + 1;
      queue.push_back(a.target);
    }
  }
  return std::nullopt;
}

/// Questions plus their closed graphs, keyed by graph id.
struct Dataset {
  std::vector<QARecord> records;
  std::map<std::string, SceneGraph> graphs;

  const SceneGraph& graph(const QARecord& r) const {
    auto it = graphs.find(r.graph);
    if (it == graphs.end()) throw Error(Errc::lookup, "record " + r.id + " references unknown graph " + r.graph);
    return it->second;
  }
};

/// Reads `dir`/questions.jsonl and `dir`/scene_graphs.json; graphs are
/// closed and every graph reference is checked.
inline Dataset load_dataset(const std::filesystem::path& dir, std::vector<std::string>* warnings = nullptr) {
  Dataset ds;
  ds.records = read_records(dir / "questions.jsonl");
  for (auto& [id, sg] : load_scene_graph_file((dir / "scene_graphs.json").string(), warnings)) {
    ds.graphs.emplace(id, close_graph(std::move(sg)));
  }
  for (const auto& r : ds.records) ds.graph(r);
  return ds;
}

/// Writes graphs in the GQA layout the loader reads back. Object keys are
/// zero-padded so their sorted order is the entity order.
inline nlohmann::json graphs_to_gqa(const std::map<std::string, SceneGraph>& graphs) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [id, sg] : graphs) {
    nlohmann::json objects = nlohmann::json::object();
    auto key = [](int i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "o%04d", i);
      return std::string(buf);
    };
    for (const auto& e : sg.entities()) {
      if (e.kind != EntityKind::object) continue;
      objects[key(e.id)] = {{"name", e.label}, {"attributes", nlohmann::json::array()},
                            {"relations", nlohmann::json::array()}};
    }
    for (const auto& t : sg.triples()) {
      const auto& r = sg.relation(t.relation);
      if (r.is_inverse || r.is_noop) continue;
      if (r.label == labels::has_attribute) {
        objects[key(t.subject)]["attributes"].push_back(sg.entity(t.object).label);
      } else if (sg.entity(t.subject).kind == EntityKind::object && sg.entity(t.object).kind == EntityKind::object) {
        objects[key(t.subject)]["relations"].push_back({{"name", r.label}, {"object", key(t.object)}});
      }
    }
    doc[id] = {{"objects", objects}};
  }
  return doc;
}

}  // namespace hopper
