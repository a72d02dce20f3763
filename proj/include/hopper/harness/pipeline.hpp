// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "hopper/agent/train.hpp"
#include "hopper/harness/dataset.hpp"

namespace hopper {

/// Words a model over `data` can ever look up: question tokens plus the words
/// of every entity and relation label.
inline std::vector<std::string> dataset_words(const Dataset& data) {
  auto label_tokens = [](std::string s) {
    std::replace(s.begin(), s.end(), '_', ' ');
    return tokenize(s);
  };
  std::set<std::string> words;
  for (const auto& r : data.records) {
    for (auto& t : tokenize(r.question)) words.insert(std::move(t));
  }
  for (const auto& [_, sg] : data.graphs) {
    for (const auto& e : sg.entities()) {
      words.insert(to_lower(e.label));
      for (auto& t : label_tokens(e.label)) words.insert(std::move(t));
    }
    for (const auto& rel : sg.relations()) {
      for (auto& t : label_tokens(rel.label)) words.insert(std::move(t));
    }
  }
  return {words.begin(), words.end()};
}

/// A fresh model whose vocabularies cover every graph in `data`; the lexicon
/// is cut down to the words the dataset uses.
template <typename S>
std::unique_ptr<Model<S>> build_model(const Dataset& data, const EmbeddingTable<S>& vectors, ModelConfig cfg) {
  std::vector<const SceneGraph*> graphs;
  for (const auto& [_, sg] : data.graphs) graphs.push_back(&sg);
  auto [ents, rels] = collect_vocabularies(graphs);
  if (cfg.word_dim != vectors.dim()) cfg.set_width(vectors.dim());
  return std::make_unique<Model<S>>(cfg, std::move(ents), std::move(rels), vectors.subset(dataset_words(data)));
}

/// Records paired with their graph, attached for the gold question type.
inline std::vector<TrainingExample> training_examples(const Dataset& data) {
  std::map<std::pair<std::string, QuestionType>, std::shared_ptr<const SceneGraph>> cache;
  std::vector<TrainingExample> out;
  out.reserve(data.records.size());
  for (const auto& r : data.records) {
    auto& g = cache[{r.graph, r.type}];
    if (!g) g = std::make_shared<const SceneGraph>(attach_auxiliary(data.graph(r), r.type));
    out.push_back(TrainingExample{r.id, r.question, tokenize(r.question), r.answer, r.type, g});
  }
  return out;
}

}  // namespace hopper
