// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hopper/agent/reinforce.hpp"
#include "hopper/numerics/gradcheck.hpp"

namespace hopper {

struct PipelineCheckOptions {
  int dim = 8;
  int hidden = 8;
  std::uint64_t seed = 0;
  int rollouts = 3;
  GradCheckOptions check;
};

/// Finite-difference check of every trainable tensor through the whole agent:
/// GAT and question encoder, LSTM and MLP policy over replayed rollouts on a
/// 4-node graph (query and yes/no schedules) and the question classifier, all
/// summed into one scalar loss.
inline GradCheckReport pipeline_gradcheck(const PipelineCheckOptions& opt) {
  using S = double;
  const std::vector<std::string> words{"cup", "table", "dog", "red", "on", "near", "has", "attribute",
                                       "what", "is", "the", "there", "a", "?"};
  Rng rng(opt.seed);
  Matrix<S> vecs(static_cast<Eigen::Index>(words.size()), opt.dim);
  for (Eigen::Index i = 0; i < vecs.size(); ++i) vecs.data()[i] = rng.uniform(-1, 1);
  auto cfg = ModelConfig::tiny(opt.dim, opt.hidden);
  cfg.seed = opt.seed + 1;
  Model<S> model(cfg, {"cup", "dog", "red", "table"}, {labels::has_attribute, "near", "on"},
                 EmbeddingTable<S>(words, vecs));

  SceneGraph open;
  const int on = open.add_relation("on"), near = open.add_relation("near");
  const int attr = open.add_relation(labels::has_attribute);
  const int cup = open.add_entity("cup", EntityKind::object);
  const int table = open.add_entity("table", EntityKind::object);
  const int dog = open.add_entity("dog", EntityKind::object);
  const int red = open.add_entity("red", EntityKind::attribute);
  open.add_triple(cup, on, table);
  open.add_triple(dog, near, table);
  open.add_triple(cup, attr, red);
  const auto closed = close_graph(open);

  struct Case {
    SceneGraph sg;
    EpisodeSchedule sched;
    std::vector<std::string> tokens;
    std::vector<std::vector<Action>> paths;
    Matrix<S> adv;
  };
  std::vector<Case> cases;
  for (auto type : {QuestionType::query, QuestionType::binary}) {
    Case c{attach_auxiliary(closed, type), EpisodeSchedule::for_type(type),
           type == QuestionType::query ? std::vector<std::string>{"what", "is", "red"}
                                       : std::vector<std::string>{"is", "there", "dog"},
           {},
           {}};
    Rng draw = rng.fork(c.sched.steps);
    for (const auto& tr : sample_rollouts(model, c.sg, c.tokens, c.sched, opt.rollouts, draw)) {
      std::vector<Action> p;
      for (const auto& st : tr.steps) p.push_back(st.action);
      c.paths.push_back(p);
    }
    c.adv.resize(opt.rollouts, c.sched.steps);
    for (Eigen::Index i = 0; i < c.adv.size(); ++i) c.adv.data()[i] = rng.uniform(-1, 1);
    cases.push_back(std::move(c));
  }

  auto build = [&](Tape<S>& tape) {
    std::vector<Var<S>> parts;
    for (const auto& c : cases) {
      auto ctx = model.encode(tape, c.sg, c.tokens, false, nullptr);
      auto rb = run_episodes(model, tape, ctx, c.sg, c.sched, opt.rollouts, replay_chooser<S>(c.paths));
      parts.push_back(reinforce_surrogate(rb, c.adv, 0.2, opt.rollouts, opt.rollouts * c.sched.steps));
      const auto& clf = model.classifier();
      parts.push_back(clf.loss(tape, clf.pool(c.tokens, model.lexicon()), {c.sched.steps == 4 ? 0 : 1}));
    }
    auto total = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) total = ops::add(total, parts[i]);
    return total;
  };
  return finite_diff_check<S>(build, model.params().trainable(), opt.check);
}

}  // namespace hopper
