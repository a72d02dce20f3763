// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hopper/lexicon/tokenize.hpp"
#include "hopper/scenegraph/graph.hpp"

namespace hopper {

enum class LabelCategory { object, relation, attribute };

struct VocabularyLimits {
  std::size_t classes = 800;
  std::size_t relations = 170;
  std::size_t attributes = 200;
};

using LabelCounts = std::map<std::string, std::size_t>;

/// Frequencies per category plus the retained top-k of each.
struct Vocabulary {
  LabelCounts objects;
  LabelCounts relations;
  LabelCounts attributes;
  std::vector<std::string> kept_objects;
  std::vector<std::string> kept_relations;
  std::vector<std::string> kept_attributes;
  /// Fraction of answers expressible with the retained labels (yes/no count
  /// as expressible). 1.0 when there are no answers.
  double coverage = 1.0;

  bool retains(const std::string& label) const {
    auto has = [&](const std::vector<std::string>& v) { return std::find(v.begin(), v.end(), label) != v.end(); };
    return has(kept_objects) || has(kept_relations) || has(kept_attributes);
  }
};

/// Top-k labels by descending count; equal counts go to the lexicographically
/// smaller label.
inline std::vector<std::string> top_k_labels(const LabelCounts& counts, std::size_t k) {
  std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < items.size() && i < k; ++i) out.push_back(items[i].first);
  return out;
}

inline double answer_coverage(const Vocabulary& v, const std::vector<std::string>& answers) {
  if (answers.empty()) return 1.0;
  std::size_t hit = 0;
  for (const auto& a : answers) {
    const auto norm = to_lower(a);
    if (norm == labels::yes || norm == labels::no || v.retains(norm)) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(answers.size());
}

/// Prunes from precomputed frequencies.
inline Vocabulary prune_counts(LabelCounts objects, LabelCounts relations, LabelCounts attributes,
                               VocabularyLimits limits, const std::vector<std::string>& answers = {}) {
  if (limits.classes == 0 || limits.relations == 0 || limits.attributes == 0) {
    throw Error(Errc::config, "vocabulary limits must be positive");
  }
  Vocabulary v;
  v.objects = std::move(objects);
  v.relations = std::move(relations);
  v.attributes = std::move(attributes);
  v.kept_objects = top_k_labels(v.objects, limits.classes);
  v.kept_relations = top_k_labels(v.relations, limits.relations);
  v.kept_attributes = top_k_labels(v.attributes, limits.attributes);
  v.coverage = answer_coverage(v, answers);
  return v;
}

/// Candidate labels per category, typically collected from scene graphs.
struct LabelInventory {
  std::set<std::string> objects;
  std::set<std::string> relations;
  std::set<std::string> attributes;

  void add(const SceneGraph& sg) {
    for (const auto& e : sg.entities()) {
      if (e.kind == EntityKind::object) objects.insert(to_lower(e.label));
      if (e.kind == EntityKind::attribute) attributes.insert(to_lower(e.label));
    }
    for (const auto& r : sg.relations()) {
      if (!r.is_noop && !r.is_inverse && r.label != labels::has_attribute && r.label != labels::hub_link &&
          r.label != labels::answer_yes && r.label != labels::answer_no) {
        relations.insert(to_lower(r.label));
      }
    }
  }
};

/// Counts how often each candidate label occurs (as a whole token sequence)
/// in the questions, plus exact answer matches, then keeps the most frequent
/// labels per category.
inline Vocabulary prune_vocabulary(const LabelInventory& inventory, const std::vector<std::string>& questions,
                                   const std::vector<std::string>& answers, VocabularyLimits limits = {}) {
  struct Candidate {
    std::vector<std::string> tokens;
    LabelCounts* counts;
    std::string label;
  };
  LabelCounts objects, relations, attributes;
  std::map<std::string, std::vector<Candidate>> by_first;
  auto index = [&](const std::set<std::string>& labels_in, LabelCounts& counts) {
    for (const auto& l : labels_in) {
      counts[l] = 0;
      auto toks = tokenize(l);
      if (!toks.empty()) by_first[toks.front()].push_back(Candidate{toks, &counts, l});
    }
  };
  index(inventory.objects, objects);
  index(inventory.relations, relations);
  index(inventory.attributes, attributes);

  for (const auto& q : questions) {
    const auto toks = tokenize(q);
    for (std::size_t i = 0; i < toks.size(); ++i) {
      auto it = by_first.find(toks[i]);
      if (it == by_first.end()) continue;
      for (const auto& c : it->second) {
        if (i + c.tokens.size() <= toks.size() && std::equal(c.tokens.begin(), c.tokens.end(), toks.begin() + i)) {
          ++(*c.counts)[c.label];
        }
      }
    }
  }
  for (const auto& a : answers) {
    const auto norm = to_lower(a);
    for (auto* counts : {&objects, &relations, &attributes}) {
      auto it = counts->find(norm);
      if (it != counts->end()) ++it->second;
    }
  }
  return prune_counts(std::move(objects), std::move(relations), std::move(attributes), limits, answers);
}

/// Reads "category<TAB>label<TAB>count" lines (category: object, relation or
/// attribute) into per-category counts.
inline void read_label_counts(const std::string& path, LabelCounts& objects, LabelCounts& relations,
                              LabelCounts& attributes) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open label counts " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string cat, label, count;
    if (!std::getline(ls, cat, '\t') || !std::getline(ls, label, '\t') || !std::getline(ls, count)) {
      throw Error(Errc::parse, path + ":" + std::to_string(lineno) + ": expected category, label, count");
    }
    LabelCounts* target = cat == "object" ? &objects : cat == "relation" ? &relations : cat == "attribute" ? &attributes : nullptr;
    if (target == nullptr) throw Error(Errc::parse, path + ":" + std::to_string(lineno) + ": unknown category " + cat);
    (*target)[label] += std::stoull(count);
  }
}

}  // namespace hopper
