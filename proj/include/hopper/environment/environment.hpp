// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <span>
#include <string>

#include "hopper/lexicon/tokenize.hpp"
#include "hopper/scenegraph/graph.hpp"
#include "hopper/types.hpp"

namespace hopper {

/// Episode length and optional hub-reset period (0 means no resets).
struct EpisodeSchedule {
  int steps = 4;
  int reset_period = 0;

  /// Step counts after which the agent is returned to the hub: t with
  /// t % reset_period == 0 and 0 < t < steps.
  bool is_reset_point(int t) const { return reset_period > 0 && t > 0 && t < steps && t % reset_period == 0; }

  static EpisodeSchedule for_type(QuestionType type, int steps_query = 4, int steps_binary = 8, int reset = 4) {
    return type == QuestionType::binary ? EpisodeSchedule{steps_binary, reset} : EpisodeSchedule{steps_query, 0};
  }
};

/// Position of the walker. `dummy` marks that the last recorded action is the
/// dummy start/return action (at t = 0 and at reset points).
struct AgentState {
  int entity = 0;
  int t = 0;
  bool dummy = true;
  Action last{};

  auto operator<=>(const AgentState&) const = default;
};

/// Deterministic walk over one auxiliary-attached graph.
class Environment {
 public:
  Environment(const SceneGraph& sg, EpisodeSchedule schedule) : sg_(&sg), schedule_(schedule) {
    auto hub = sg.hub();
    if (!hub) throw Error(Errc::hub_missing, "graph has no hub node; attach auxiliary nodes first");
    hub_ = *hub;
    if (schedule.steps < 1 || schedule.reset_period < 0) throw Error(Errc::config, "invalid episode schedule");
  }

  const SceneGraph& graph() const { return *sg_; }
  const EpisodeSchedule& schedule() const { return schedule_; }
  int hub() const { return hub_; }

  AgentState reset() const { return AgentState{hub_, 0, true, Action{}}; }

  std::span<const Action> actions(const AgentState& s) const { return sg_->action_space(s.entity); }

  bool done(const AgentState& s) const { return s.t >= schedule_.steps; }

  AgentState step(const AgentState& s, Action a) const {
    if (done(s)) throw Error(Errc::episode_over, "episode already has " + std::to_string(schedule_.steps) + " steps");
    if (!sg_->is_admissible(s.entity, a)) {
      throw Error(Errc::contract_violation, "action (" + sg_->relation_display(a.relation) + ", " +
                                                std::to_string(a.target) + ") not admissible at " +
                                                sg_->display_name(s.entity));
    }
    AgentState next{a.target, s.t + 1, false, a};
    if (schedule_.is_reset_point(next.t)) {
      next.entity = hub_;
      next.dummy = true;
      next.last = Action{};
    }
    return next;
  }

 private:
  const SceneGraph* sg_;
  EpisodeSchedule schedule_;
  int hub_ = 0;
};

inline AgentState reset(const SceneGraph& sg) {
  auto hub = sg.hub();
  if (!hub) throw Error(Errc::hub_missing, "graph has no hub node; attach auxiliary nodes first");
  return AgentState{*hub, 0, true, Action{}};
}

/// 1 when the walk ends on the answer: for open questions any content node
/// whose label matches the gold string case-insensitively, for yes/no
/// questions the matching auxiliary node.
inline int terminal_reward(const SceneGraph& sg, int final_entity, const std::string& gold, QuestionType type) {
  const auto& e = sg.entity(final_entity);
  const auto g = to_lower(gold);
  if (type == QuestionType::binary) {
    return (e.aux_role == AuxRole::yes && g == labels::yes) || (e.aux_role == AuxRole::no && g == labels::no) ? 1 : 0;
  }
  return !e.auxiliary() && to_lower(e.label) == g ? 1 : 0;
}

}  // namespace hopper
