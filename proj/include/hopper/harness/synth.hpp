// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hopper/harness/dataset.hpp"
#include "hopper/numerics/rng.hpp"

namespace hopper {

enum class TaskFamily { one_hop, chain, exists };

inline TaskFamily parse_task_family(const std::string& s) {
  if (s == "one_hop") return TaskFamily::one_hop;
  if (s == "chain") return TaskFamily::chain;
  if (s == "exists") return TaskFamily::exists;
  throw Error(Errc::config, "unknown question family '" + s + "' (one_hop, chain, exists)");
}

inline std::string to_string(TaskFamily f) {
  switch (f) {
    case TaskFamily::one_hop: return "one_hop";
    case TaskFamily::chain: return "chain";
    case TaskFamily::exists: return "exists";
  }
  return "?";
}

struct SynthSpec {
  int n_graphs = 50;
  int nodes = 8;
  int relations = 4;
  /// Outgoing edges per node; each node uses that many distinct relations.
  int out_degree = 1;
  int hop_depth = 1;
  TaskFamily family = TaskFamily::one_hop;
  int questions_per_graph = 4;
  /// Width of the generated word vectors.
  int dim = 300;
  /// Episode length T the questions are meant for.
  int max_steps = 4;
  /// Attempts per question before the spec is declared unsatisfiable.
  int max_attempts = 200;

  void validate() const {
    if (n_graphs < 1 || questions_per_graph < 1 || dim < 1) throw Error(Errc::config, "synth sizes must be positive");
    if (nodes < 2) throw Error(Errc::config, "synth graphs need at least 2 nodes");
    if (relations < 1) throw Error(Errc::config, "synth graphs need at least one relation type");
    if (out_degree < 1 || out_degree > relations || out_degree >= nodes / 2 + 1) {
      throw Error(Errc::config, "out degree must lie in [1, min(relations, nodes / 2)]");
    }
    if (hop_depth < 1) throw Error(Errc::config, "hop depth must be at least 1");
    if (family != TaskFamily::exists && hop_depth > max_steps) {
      throw Error(Errc::config, "hop depth " + std::to_string(hop_depth) + " does not fit in " +
                                    std::to_string(max_steps) + " steps");
    }
  }
};

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.n_graphs = j.value("n_graphs", s.n_graphs);
    s.nodes = j.value("nodes", s.nodes);
    s.relations = j.value("relations", s.relations);
    s.out_degree = j.value("out_degree", s.out_degree);
    s.hop_depth = j.value("hop_depth", s.hop_depth);
    s.family = parse_task_family(j.value("question_family", to_string(s.family)));
    s.questions_per_graph = j.value("questions_per_graph", s.questions_per_graph);
    s.dim = j.value("dim", s.dim);
    s.max_steps = j.value("max_steps", s.max_steps);
    s.max_attempts = j.value("max_attempts", s.max_attempts);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config, std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

inline const std::vector<std::string>& synth_object_labels() {
  static const std::vector<std::string> pool{
      "cup",    "table", "man",    "dog",    "car",   "tree",  "lamp",  "book",   "chair",  "window",
      "bottle", "plate", "woman",  "cat",    "bus",   "bench", "shelf", "clock",  "bag",    "horse",
      "door",   "fence", "bowl",   "knife",  "sign",  "pole",  "shirt", "helmet", "bike",   "boat",
      "laptop", "phone", "pillow", "mirror", "sink",  "towel", "vase",  "apple",  "banana", "pizza"};
  return pool;
}

inline const std::vector<std::string>& synth_relation_labels() {
  static const std::vector<std::string> pool{"on", "near", "behind", "under", "holding", "beside", "above", "inside"};
  return pool;
}

/// A generated dataset in memory; `write_synthetic` puts it on disk in the
/// layout `load_dataset` reads.
struct SyntheticDataset {
  Dataset data;
  std::vector<std::string> words;
  Matrix<double> vectors;
};

namespace synth_detail {

struct Edge {
  int s, r, o;
};

inline std::vector<Edge> out_edges(const std::vector<Edge>& edges, int s, int r) {
  std::vector<Edge> out;
  for (const auto& e : edges) {
    if (e.s == s && (r < 0 || e.r == r)) out.push_back(e);
  }
  return out;
}

}  // namespace synth_detail

/// Random graphs with distinct object labels and templated questions.
///
///   one_hop: "what is <rel> of the <s> ?"  -> label of the unique <rel> target of <s>
///   chain:   "what is <rel_k> of the thing <rel_k-1> of ... the <s> ?"
///   exists:  "is there a <a> <rel> a <b> ?" -> yes/no, alternating per question
///
/// Distinct labels and one edge per (node, relation) make every answer unique
/// by construction; a chain that revisits a node is redrawn.
inline SyntheticDataset generate_synthetic_tasks(const SynthSpec& spec, std::uint64_t seed) {
  using namespace synth_detail;
  spec.validate();
  const auto& obj_pool = synth_object_labels();
  const auto& rel_pool = synth_relation_labels();
  if (spec.nodes > static_cast<int>(obj_pool.size())) {
    throw Error(Errc::config, "at most " + std::to_string(obj_pool.size()) + " nodes per synthetic graph");
  }
  if (spec.relations > static_cast<int>(rel_pool.size())) {
    throw Error(Errc::config, "at most " + std::to_string(rel_pool.size()) + " relation types");
  }
  Rng rng(seed);
  std::vector<std::string> rel_labels(rel_pool.begin(), rel_pool.begin() + spec.relations);

  SyntheticDataset out;
  int qid = 0;
  for (int g = 0; g < spec.n_graphs; ++g) {
    char gid[16];
    std::snprintf(gid, sizeof(gid), "g%04d", g);
    std::vector<std::string> labels = obj_pool;
    rng.shuffle(labels);
    labels.resize(static_cast<std::size_t>(spec.nodes));

    // out_degree random n-cycles give every node the same in- and out-degree,
    // so degree carries no hint, and any chain shorter than n can avoid
    // revisits; a node's out-edges get distinct relation labels, so
    // (node, relation) names one neighbour
    std::vector<Edge> edges;
    std::vector<std::vector<int>> rel_of(static_cast<std::size_t>(spec.nodes));
    for (auto& rs : rel_of) {
      std::vector<int> all(static_cast<std::size_t>(spec.relations));
      for (int r = 0; r < spec.relations; ++r) all[r] = r;
      rng.shuffle(all);
      rs.assign(all.begin(), all.begin() + spec.out_degree);
    }
    for (int k = 0; k < spec.out_degree; ++k) {
      std::vector<int> perm(static_cast<std::size_t>(spec.nodes));
      bool clash = true;
      while (clash) {
        std::vector<int> order(static_cast<std::size_t>(spec.nodes));
        for (int i = 0; i < spec.nodes; ++i) order[i] = i;
        rng.shuffle(order);
        for (int i = 0; i < spec.nodes; ++i) perm[order[i]] = order[(i + 1) % spec.nodes];
        clash = false;
        for (int i = 0; i < spec.nodes; ++i) {
          for (const auto& e : edges) clash = clash || (e.s == i && e.o == perm[i]);
        }
      }
      for (int s = 0; s < spec.nodes; ++s) edges.push_back({s, rel_of[s][k], perm[s]});
    }
    SceneGraph sg;
    for (const auto& l : rel_labels) sg.add_relation(l);
    for (const auto& l : labels) sg.add_entity(l, EntityKind::object);
    for (const auto& e : edges) sg.add_triple(e.s, e.r, e.o);
    auto closed = close_graph(sg);

    auto triple_exists = [&](const std::string& a, int r, const std::string& b) {
      for (const auto& e : edges) {
        if (labels[e.s] == a && e.r == r && labels[e.o] == b) return true;
      }
      return false;
    };

    for (int k = 0; k < spec.questions_per_graph; ++k) {
      QARecord rec;
      rec.graph = gid;
      bool made = false;
      for (int attempt = 0; attempt < spec.max_attempts && !made; ++attempt) {
        if (spec.family == TaskFamily::exists) {
          const bool positive = qid % 2 == 0;
          std::string a, b;
          int r = 0;
          if (positive) {
            const auto& e = edges[rng.below(edges.size())];
            a = labels[e.s];
            r = e.r;
            b = labels[e.o];
          } else {
            a = labels[rng.below(labels.size())];
            b = labels[rng.below(labels.size())];
            r = static_cast<int>(rng.below(rel_labels.size()));
            if (a == b || triple_exists(a, r, b)) continue;
          }
          rec.question = "is there a " + a + " " + rel_labels[r] + " a " + b + " ?";
          rec.answer = positive ? "yes" : "no";
          rec.type = QuestionType::binary;
          rec.structural = "verify";
          rec.semantic = "relation";
          made = true;
        } else {
          const int depth = spec.family == TaskFamily::one_hop ? 1 : spec.hop_depth;
          const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.nodes)));
          int cur = start;
          std::vector<int> rels;
          std::set<int> visited{start};
          bool ok = true;
          for (int h = 0; h < depth && ok; ++h) {
            auto outs = out_edges(edges, cur, -1);
            if (outs.empty()) {
              ok = false;
              break;
            }
            const auto e = outs[rng.below(outs.size())];
            // the step must be determined by (node, relation) and must not loop back
            if (out_edges(edges, cur, e.r).size() != 1 || !visited.insert(e.o).second) ok = false;
            rels.push_back(e.r);
            cur = e.o;
          }
          if (!ok) continue;
          std::string q = "what is " + rel_labels[rels[depth - 1]] + " of";
          for (int h = depth - 2; h >= 0; --h) q += " the thing " + rel_labels[rels[h]] + " of";
          rec.question = q + " the " + labels[start] + " ?";
          rec.answer = labels[cur];
          rec.type = QuestionType::query;
          rec.structural = "query";
          rec.semantic = "relation";
          auto attached = attach_auxiliary(closed, QuestionType::query);
          auto d = content_distance(attached, {start}, answer_nodes(attached, rec.answer, QuestionType::query));
          rec.hops = 1 + *d;
          made = true;
        }
      }
      if (!made) {
        throw Error(Errc::config, "could not build a question with a unique answer on graph " + std::string(gid) +
                                      " after " + std::to_string(spec.max_attempts) + " attempts");
      }
      char id[16];
      std::snprintf(id, sizeof(id), "q%06d", qid++);
      rec.id = id;
      auto attached = attach_auxiliary(closed, rec.type);
      rec.min_hops = min_hops(attached, answer_nodes(attached, rec.answer, rec.type));
      if (rec.type == QuestionType::binary) rec.hops = rec.min_hops;
      out.data.records.push_back(rec);
    }
    out.data.graphs.emplace(gid, std::move(closed));
  }

  std::set<std::string> words(obj_pool.begin(), obj_pool.end());
  words.insert(rel_pool.begin(), rel_pool.end());
  for (const char* w : {"what", "is", "the", "thing", "of", "there", "a", "?", "yes", "no"}) words.insert(w);
  out.words.assign(words.begin(), words.end());
  Rng vrng(seed ^ 0x5eedf00dULL);
  out.vectors.resize(static_cast<Eigen::Index>(out.words.size()), spec.dim);
  for (Eigen::Index i = 0; i < out.vectors.size(); ++i) out.vectors.data()[i] = 0.4 * vrng.normal();
  return out;
}

/// questions.jsonl, scene_graphs.json and vectors.txt under `dir`.
inline void write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_records(dir / "questions.jsonl", ds.data.records);
  {
    std::ofstream out(dir / "scene_graphs.json", std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + (dir / "scene_graphs.json").string());
    out << graphs_to_gqa(ds.data.graphs).dump(1) << "\n";
  }
  std::ofstream out(dir / "vectors.txt", std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + (dir / "vectors.txt").string());
  out << std::setprecision(9);
  for (std::size_t i = 0; i < ds.words.size(); ++i) {
    out << ds.words[i];
    for (Eigen::Index c = 0; c < ds.vectors.cols(); ++c) out << ' ' << ds.vectors(static_cast<Eigen::Index>(i), c);
    out << '\n';
  }
}

/// The in-memory table matching the vectors written by `write_synthetic`.
template <typename S>
EmbeddingTable<S> synthetic_lexicon(const SyntheticDataset& ds) {
  return EmbeddingTable<S>(ds.words, ds.vectors.cast<S>());
}

}  // namespace hopper
