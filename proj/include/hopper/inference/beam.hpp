// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hopper/agent/policy.hpp"

namespace hopper {

/// A complete length-T walk with per-step and cumulative log-probabilities.
/// `entities[t]` is where the walker stands after step t (the hub after a
/// reset point).
struct RankedPath {
  std::vector<Action> actions;
  std::vector<int> entities;
  std::vector<double> step_logp;
  double logp = 0;

  int terminal() const { return entities.empty() ? -1 : entities.back(); }
};

/// Higher log-probability first; exact ties go to the lexicographically
/// smaller (relation, entity) sequence.
inline bool ranks_before(const RankedPath& a, const RankedPath& b) {
  if (a.logp != b.logp) return a.logp > b.logp;
  return a.actions < b.actions;
}

/// Global top-k beam search over length-T walks from the hub. Each beam keeps
/// its own LSTM history; at every step all extensions of all beams compete and
/// the best k survive.
template <typename S>
std::vector<RankedPath> beam_search(const Model<S>& model, const SceneGraph& sg, const std::vector<std::string>& tokens,
                                    const EpisodeSchedule& schedule, int k) {
  if (k < 1) throw Error(Errc::config, "beam width must be at least 1, got " + std::to_string(k));
  Tape<S> tape(false);
  auto ctx = model.encode(tape, sg, tokens, false, nullptr);
  Environment env(sg, schedule);
  Walker<S> walker(model, tape, ctx, sg, 1);
  std::vector<RankedPath> beams(1);
  std::vector<AgentState> states{env.reset()};

  struct Candidate {
    RankedPath path;
    int parent;
    AgentState next;
  };
  for (int t = 0; t < schedule.steps; ++t) {
    std::vector<int> entities;
    for (const auto& s : states) entities.push_back(s.entity);
    auto sc = walker.score(entities);
    std::vector<Candidate> cands;
    for (int b = 0; b < static_cast<int>(beams.size()); ++b) {
      for (int j = sc.offset[b]; j < sc.offset[b + 1]; ++j) {
        Candidate c{beams[b], b, env.step(states[b], sc.actions[j])};
        const double lp = static_cast<double>(sc.logp.value()(j, 0));
        c.path.actions.push_back(sc.actions[j]);
        c.path.entities.push_back(c.next.entity);
        c.path.step_logp.push_back(lp);
        c.path.logp += lp;
        cands.push_back(std::move(c));
      }
    }
    const auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) { return ranks_before(a.path, b.path); });
    cands.resize(keep);
    beams.clear();
    states.clear();
    std::vector<int> parents;
    std::vector<Action> moves;
    for (auto& c : cands) {
      parents.push_back(c.parent);
      moves.push_back(c.path.actions.back());
      states.push_back(c.next);
      beams.push_back(std::move(c.path));
    }
    if (t + 1 < schedule.steps) walker.advance(moves, schedule.is_reset_point(t + 1), parents);
  }
  return beams;
}

/// Number of length-T walks from the hub, saturating at `cap` + 1.
inline std::size_t count_paths(const SceneGraph& sg, const EpisodeSchedule& schedule, std::size_t cap) {
  Environment env(sg, schedule);
  std::function<std::size_t(const AgentState&)> walk = [&](const AgentState& s) -> std::size_t {
    if (env.done(s)) return 1;
    std::size_t n = 0;
    for (const auto& a : env.actions(s)) {
      n += walk(env.step(s, a));
      if (n > cap) return cap + 1;
    }
    return n;
  };
  return walk(env.reset());
}

/// Every length-T walk with its exact log-probability, sorted like beam
/// search output. Refuses graphs with more than `limit` walks.
template <typename S>
std::vector<RankedPath> exhaustive_paths(const Model<S>& model, const SceneGraph& sg,
                                         const std::vector<std::string>& tokens, const EpisodeSchedule& schedule,
                                         std::size_t limit = 1000000) {
  const auto total = count_paths(sg, schedule, limit);
  if (total > limit) {
    throw Error(Errc::oracle_too_large, "more than " + std::to_string(limit) + " paths of length " +
                                            std::to_string(schedule.steps));
  }
  Tape<S> tape(false);
  auto ctx = model.encode(tape, sg, tokens, false, nullptr);
  Environment env(sg, schedule);
  std::vector<RankedPath> out;
  out.reserve(total);
  std::function<void(Walker<S>, const AgentState&, RankedPath&)> dfs = [&](Walker<S> w, const AgentState& s,
                                                                           RankedPath& path) {
    if (env.done(s)) {
      out.push_back(path);
      return;
    }
    auto sc = w.score({s.entity});
    for (std::size_t j = 0; j < sc.actions.size(); ++j) {
      const auto a = sc.actions[j];
      const auto next = env.step(s, a);
      const double lp = static_cast<double>(sc.logp.value()(static_cast<Eigen::Index>(j), 0));
      path.actions.push_back(a);
      path.entities.push_back(next.entity);
      path.step_logp.push_back(lp);
      const double saved = path.logp;
      path.logp += lp;
      if (env.done(next)) {
        out.push_back(path);
      } else {
        Walker<S> child = w;
        child.advance({a}, schedule.is_reset_point(next.t));
        dfs(child, next, path);
      }
      path.logp = saved;
      path.actions.pop_back();
      path.entities.pop_back();
      path.step_logp.pop_back();
    }
  };
  RankedPath root;
  dfs(Walker<S>(model, tape, ctx, sg, 1), env.reset(), root);
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

struct AnswerResult {
  std::string answer;
  bool answered = false;
  /// Index into the ranked paths of the path the answer came from.
  int path = -1;
  int entity = -1;
};

/// Reads the answer off ranked paths. Yes/no questions take the best path
/// ending on YES or NO; open questions take the best path ending on a content
/// node (the hub is never an answer). No such path leaves `answered` false.
inline AnswerResult answer(const std::vector<RankedPath>& paths, QuestionType type, const SceneGraph& sg) {
  if (paths.empty()) throw Error(Errc::contract_violation, "answer needs at least one path");
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const int e = paths[i].terminal();
    const auto& ent = sg.entity(e);
    const bool ok = type == QuestionType::binary ? (ent.aux_role == AuxRole::yes || ent.aux_role == AuxRole::no)
                                                 : !ent.auxiliary();
    if (ok) return AnswerResult{ent.label, true, static_cast<int>(i), e};
  }
  return AnswerResult{};
}

/// Ranked paths as structured text: per path, the steps with relation and
/// entity labels, step probability and running log-probability.
inline nlohmann::json path_trace(const std::vector<RankedPath>& paths, const SceneGraph& sg) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& p = paths[i];
    nlohmann::json steps = nlohmann::json::array();
    double cum = 0;
    for (std::size_t t = 0; t < p.actions.size(); ++t) {
      cum += p.step_logp[t];
      steps.push_back({{"step", t + 1},
                       {"relation", sg.relation_display(p.actions[t].relation)},
                       {"entity", sg.display_name(p.actions[t].target)},
                       {"probability", std::exp(p.step_logp[t])},
                       {"cumulative_logp", cum}});
    }
    out.push_back({{"rank", i + 1}, {"logp", p.logp}, {"probability", std::exp(p.logp)}, {"steps", steps}});
  }
  return out;
}

/// One line per step, e.g. "1. HUB_LINK -> motorcycle-1 (p=0.93)".
inline std::string format_trace(const RankedPath& p, const SceneGraph& sg) {
  std::string s;
  for (std::size_t t = 0; t < p.actions.size(); ++t) {
    char prob[32];
    std::snprintf(prob, sizeof(prob), "%.4f", std::exp(p.step_logp[t]));
    s += std::to_string(t + 1) + ". " + sg.relation_display(p.actions[t].relation) + " -> " +
         sg.display_name(p.actions[t].target) + " (p=" + prob + ")\n";
  }
  return s;
}

}  // namespace hopper
