// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hopper/harness/dataset.hpp"
#include "hopper/inference/beam.hpp"

namespace hopper {

inline constexpr const char* metrics_schema = "hopper-metrics/1";

struct Tally {
  int correct = 0;
  int total = 0;

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
  void add(bool ok) {
    ++total;
    correct += ok ? 1 : 0;
  }
};

inline void to_json(nlohmann::json& j, const Tally& t) {
  j = nlohmann::json{{"accuracy", t.accuracy()}, {"correct", t.correct}, {"total", t.total}};
}

struct QuestionOutcome {
  std::string id;
  std::string predicted;
  bool answered = false;
  bool correct = false;
  QuestionType predicted_type = QuestionType::query;
  nlohmann::json trace;
};

/// Hits@1 overall and split by answer type, tags and hop counts. Questions
/// whose answer node cannot be reached or does not exist are counted in the
/// splits they belong to and, separately, in `unreachable`/`unanswerable`.
struct MetricsReport {
  Tally overall;
  std::map<std::string, Tally> by_type;
  std::map<std::string, Tally> by_semantic;
  std::map<std::string, Tally> by_structural;
  std::map<std::string, Tally> by_min_hops;
  std::map<std::string, Tally> by_hops;
  int unreachable = 0;
  int unanswerable = 0;
  int beam = 0;
  std::vector<QuestionOutcome> questions;

  void add(const QARecord& r, bool correct, std::optional<int> min_hop, bool has_answer_node) {
    overall.add(correct);
    by_type[r.type == QuestionType::binary ? "binary" : "open"].add(correct);
    by_semantic[r.semantic].add(correct);
    by_structural[r.structural].add(correct);
    by_min_hops[min_hop ? std::to_string(*min_hop) : "unreachable"].add(correct);
    by_hops[r.hops ? std::to_string(*r.hops) : "unknown"].add(correct);
    if (!has_answer_node) {
      ++unanswerable;
    } else if (!min_hop) {
      ++unreachable;
    }
  }
};

/// Largest gap between overall accuracy and the count-weighted mean of each
/// split; zero up to rounding for any consistent report.
inline double split_identity_gap(const MetricsReport& m) {
  double worst = 0;
  for (const auto* split : {&m.by_type, &m.by_semantic, &m.by_structural, &m.by_min_hops, &m.by_hops}) {
    double acc = 0;
    int n = 0;
    for (const auto& [_, t] : *split) {
      acc += t.accuracy() * t.total;
      n += t.total;
    }
    if (n != m.overall.total) return 1.0;
    if (n > 0) worst = std::max(worst, std::abs(acc / n - m.overall.accuracy()));
  }
  return worst;
}

inline nlohmann::json report_json(const MetricsReport& m, bool with_questions = false) {
  nlohmann::json j{{"schema", metrics_schema},
                   {"beam", m.beam},
                   {"overall", m.overall},
                   {"by_type", m.by_type},
                   {"by_semantic", m.by_semantic},
                   {"by_structural", m.by_structural},
                   {"by_min_hops", m.by_min_hops},
                   {"by_content_hops", m.by_hops},
                   {"unreachable", m.unreachable},
                   {"unanswerable", m.unanswerable},
                   {"consistency", "unavailable"},
                   {"validity", "unavailable"},
                   {"plausibility", "unavailable"}};
  if (with_questions) {
    nlohmann::json qs = nlohmann::json::array();
    for (const auto& q : m.questions) {
      nlohmann::json e{{"id", q.id},
                       {"predicted", q.predicted},
                       {"answered", q.answered},
                       {"correct", q.correct},
                       {"predicted_type", std::string(to_string(q.predicted_type))}};
      if (!q.trace.is_null()) e["paths"] = q.trace;
      qs.push_back(e);
    }
    j["questions"] = qs;
  }
  return j;
}

inline std::string report_table(const MetricsReport& m) {
  std::ostringstream os;
  char line[128];
  auto row = [&](const std::string& name, const Tally& t) {
    std::snprintf(line, sizeof(line), "  %-22s %7.4f  %6d / %-6d\n", name.c_str(), t.accuracy(), t.correct, t.total);
    os << line;
  };
  os << "accuracy (Hits@1), beam " << m.beam << "\n";
  row("overall", m.overall);
  auto section = [&](const char* title, const std::map<std::string, Tally>& split) {
    os << title << "\n";
    for (const auto& [k, t] : split) row(k, t);
  };
  section("by answer type", m.by_type);
  section("by structural type", m.by_structural);
  section("by semantic type", m.by_semantic);
  section("by min hops from hub", m.by_min_hops);
  section("by content hops", m.by_hops);
  os << "unreachable " << m.unreachable << ", unanswerable " << m.unanswerable << "\n";
  os << "consistency, validity, plausibility: unavailable\n";
  return os.str();
}

struct EvalOptions {
  int beam = 20;
  int steps_query = 4;
  int steps_binary = 8;
  int reset = 4;
  bool traces = false;
  /// Trace at most this many paths per question.
  int trace_paths = 3;

  EpisodeSchedule schedule(QuestionType t) const {
    return EpisodeSchedule::for_type(t, steps_query, steps_binary, reset);
  }
};

/// Scores every record: `classify(tokens)` picks the question type, the
/// graph is attached for that type, `decode(sg, tokens, schedule)` ranks
/// paths and the answer read off them is compared with the gold label.
template <typename Classify, typename Decode>
MetricsReport evaluate_with(const Dataset& data, const EvalOptions& opt, Classify&& classify, Decode&& decode) {
  MetricsReport report;
  report.beam = opt.beam;
  std::map<std::pair<std::string, QuestionType>, SceneGraph> attached;
  auto graph_for = [&](const QARecord& r, QuestionType t) -> const SceneGraph& {
    auto key = std::make_pair(r.graph, t);
    auto it = attached.find(key);
    if (it == attached.end()) it = attached.emplace(key, attach_auxiliary(data.graph(r), t)).first;
    return it->second;
  };
  for (const auto& r : data.records) {
    const auto tokens = tokenize(r.question);
    const QuestionType type = classify(tokens);
    const auto& sg = graph_for(r, type);
    const std::vector<RankedPath> paths = decode(sg, tokens, opt.schedule(type));
    const auto ans = answer(paths, type, sg);
    const bool correct = ans.answered && to_lower(ans.answer) == to_lower(r.answer);

    // hop statistics use the gold type's graph, whatever the classifier said
    const auto& gold_graph = graph_for(r, r.type);
    const auto targets = answer_nodes(gold_graph, r.answer, r.type);
    const auto hops = targets.empty() ? std::nullopt : min_hops(gold_graph, targets);
    report.add(r, correct, hops, !targets.empty());

    QuestionOutcome q{r.id, ans.answer, ans.answered, correct, type, nullptr};
    if (opt.traces) {
      const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(opt.trace_paths, 0)), paths.size());
      q.trace = path_trace(std::vector<RankedPath>(paths.begin(), paths.begin() + static_cast<std::ptrdiff_t>(n)), sg);
    }
    report.questions.push_back(std::move(q));
  }
  return report;
}

/// The full pipeline: the model's classifier, auxiliaries for the predicted
/// type and beam search of width `opt.beam`.
template <typename S>
MetricsReport evaluate(const Model<S>& model, const Dataset& data, const EvalOptions& opt) {
  return evaluate_with(
      data, opt, [&](const std::vector<std::string>& tokens) { return model.classify(tokens); },
      [&](const SceneGraph& sg, const std::vector<std::string>& tokens, const EpisodeSchedule& sched) {
        return beam_search(model, sg, tokens, sched, opt.beam);
      });
}

}  // namespace hopper
