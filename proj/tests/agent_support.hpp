// SPDX-License-Identifier: Apache-2.0
// Small models over the shared test vocabularies.
#pragma once

#include <memory>

#include "hopper/agent/model.hpp"
#include "support.hpp"

namespace hopper::testing {

inline std::vector<std::string> lexicon_words() {
  std::vector<std::string> w = object_pool();
  for (const auto& r : relation_pool()) w.push_back(r);
  for (const char* s : {"what", "is", "the", "there", "a", "?", "yes", "no", "red", "blue", "of"}) w.emplace_back(s);
  return w;
}

template <typename S = double>
EmbeddingTable<S> random_lexicon(int dim, std::uint64_t seed) {
  Rng rng(seed);
  const auto words = lexicon_words();
  Matrix<S> m(static_cast<Eigen::Index>(words.size()), dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(rng.uniform(-1, 1));
  return EmbeddingTable<S>(words, m);
}

template <typename S = double>
std::unique_ptr<Model<S>> tiny_model(std::uint64_t seed, int d = 6, int hidden = 5) {
  auto cfg = ModelConfig::tiny(d, hidden);
  cfg.seed = seed;
  std::vector<std::string> rels = relation_pool();
  std::sort(rels.begin(), rels.end());
  std::vector<std::string> ents = object_pool();
  std::sort(ents.begin(), ents.end());
  return std::make_unique<Model<S>>(cfg, ents, rels, random_lexicon<S>(d, seed + 1));
}

}  // namespace hopper::testing
