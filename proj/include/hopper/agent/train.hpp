// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hopper/agent/checkpoint.hpp"
#include "hopper/agent/reinforce.hpp"
#include "hopper/lexicon/tokenize.hpp"

namespace hopper {

struct TrainConfig {
  int epochs = 10;
  int batch = 64;
  int rollouts = 20;
  double learning_rate = 1e-4;
  double gamma = 1.0;
  double entropy = 0.2;
  double entropy_decay = 0.99;
  double baseline_decay = 0.95;
  int steps_query = 4;
  int steps_binary = 8;
  int reset = 4;
  std::uint64_t seed = 0;
  /// Weight of the question-type cross entropy added to every batch.
  double classifier_weight = 1.0;
  /// Supervised classifier epochs run once before policy training.
  int classifier_epochs = 30;
  /// Checkpoints and metrics go here; empty keeps everything in memory.
  std::string out_dir;

  void validate() const {
    if (epochs < 0 || batch < 1 || rollouts < 1) throw Error(Errc::config, "epochs, batch and rollouts must be positive");
    if (!(learning_rate > 0)) throw Error(Errc::config, "learning rate must be positive");
    if (!(gamma >= 0 && gamma <= 1)) throw Error(Errc::config, "gamma must lie in [0, 1]");
    if (!(baseline_decay >= 0 && baseline_decay < 1)) throw Error(Errc::config, "baseline decay must lie in [0, 1)");
    if (!(entropy >= 0) || !(entropy_decay > 0 && entropy_decay <= 1)) throw Error(Errc::config, "bad entropy schedule");
    if (steps_query < 1 || steps_binary < 1 || reset < 0) throw Error(Errc::config, "bad step schedule");
  }

  EpisodeSchedule schedule(QuestionType type) const {
    return EpisodeSchedule::for_type(type, steps_query, steps_binary, reset);
  }
  EntropySchedule entropy_schedule() const { return EntropySchedule{entropy, entropy_decay}; }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch", c.batch},
                     {"rollouts", c.rollouts},
                     {"lr", c.learning_rate},
                     {"gamma", c.gamma},
                     {"entropy", c.entropy},
                     {"entropy_decay", c.entropy_decay},
                     {"baseline_decay", c.baseline_decay},
                     {"steps_query", c.steps_query},
                     {"steps_binary", c.steps_binary},
                     {"reset", c.reset},
                     {"seed", c.seed},
                     {"classifier_weight", c.classifier_weight},
                     {"classifier_epochs", c.classifier_epochs}};
}

/// One training question with its graph already closed and attached for the
/// question's type.
struct TrainingExample {
  std::string id;
  std::string question;
  std::vector<std::string> tokens;
  std::string answer;
  QuestionType type = QuestionType::query;
  std::shared_ptr<const SceneGraph> graph;
};

struct EpochMetrics {
  int epoch = 0;
  double mean_reward = 0;
  double mean_entropy = 0;
  double loss = 0;
  double baseline = 0;
  double entropy_weight = 0;
  std::uint64_t optimizer_steps = 0;
};

inline void to_json(nlohmann::json& j, const EpochMetrics& m) {
  j = nlohmann::json{{"epoch", m.epoch},
                     {"mean_reward", m.mean_reward},
                     {"mean_entropy", m.mean_entropy},
                     {"loss", m.loss},
                     {"baseline", m.baseline},
                     {"beta", m.entropy_weight},
                     {"optimizer_steps", m.optimizer_steps}};
}

/// Policy-gradient trainer. Holds the model, optimiser state, baseline and
/// RNG so a run can be stepped batch by batch or epoch by epoch.
template <typename S>
class Trainer {
 public:
  Trainer(Model<S>& model, TrainConfig cfg) : model_(&model), cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
    state_.adam.config.learning_rate = cfg_.learning_rate;
  }

  /// Resumes from a loaded checkpoint's trainer state.
  Trainer(Model<S>& model, TrainConfig cfg, TrainerState<S> state) : Trainer(model, cfg) {
    state_ = std::move(state);
    state_.adam.config.learning_rate = cfg_.learning_rate;
    if (!state_.rng_state.empty()) rng_.set_state(state_.rng_state);
  }

  const TrainConfig& config() const { return cfg_; }
  TrainerState<S> state() const {
    auto s = state_;
    s.rng_state = rng_.state();
    return s;
  }
  double baseline() const { return state_.baseline; }
  double entropy_weight() const { return cfg_.entropy_schedule().at(state_.entropy_step); }
  std::uint64_t optimizer_steps() const { return state_.adam.step; }

  /// Supervised pass over the question types; returns training accuracy.
  double pretrain_classifier(const std::vector<TrainingExample>& data) {
    std::vector<std::pair<std::string, QuestionType>> corpus;
    for (const auto& ex : data) corpus.emplace_back(ex.question, ex.type);
    ClassifierTrainOptions opts;
    opts.epochs = cfg_.classifier_epochs;
    opts.seed = cfg_.seed;
    auto clf = QuestionClassifier<S>::bind(model_->params());
    return train_classifier(clf, corpus, model_->lexicon(), opts);
  }

  /// Samples rollouts for one batch, applies one Adam step, then updates the
  /// baseline and the entropy step counter. Returns (mean reward, surrogate).
  std::pair<double, double> train_batch(const std::vector<const TrainingExample*>& batch, double* mean_entropy = nullptr) {
    if (batch.empty()) throw Error(Errc::config, "empty training batch");
    model_->params().zero_grad();
    std::vector<RecordedQuestion<S>> recorded;
    recorded.reserve(batch.size());
    std::vector<std::vector<Trajectory<S>>> trajs;
    const auto clf = QuestionClassifier<S>::bind(model_->params());
    double ent_sum = 0;
    std::size_t ent_n = 0;
    for (const auto* ex : batch) {
      Rng qrng = rng_.fork(static_cast<std::uint64_t>(recorded.size()));
      RecordedQuestion<S> rq;
      rq.tape = std::make_unique<Tape<S>>(true);
      auto& tape = *rq.tape;
      auto ctx = model_->encode(tape, *ex->graph, ex->tokens, true, &qrng);
      rq.rollouts = run_episodes(*model_, tape, ctx, *ex->graph, cfg_.schedule(ex->type), cfg_.rollouts,
                                 sampling_chooser<S>(qrng));
      assign_rewards(rq.rollouts.trajectories, *ex->graph, ex->answer, ex->type);
      if (cfg_.classifier_weight > 0) {
        auto pooled = QuestionClassifier<S>::pool(ex->tokens, model_->lexicon());
        auto ce = clf.loss(tape, pooled, {ex->type == QuestionType::binary ? 1 : 0});
        rq.extra_loss = ops::scale(ce, static_cast<S>(cfg_.classifier_weight / static_cast<double>(batch.size())));
        rq.has_extra = true;
      }
      for (const auto& tr : rq.rollouts.trajectories) {
        for (const auto& st : tr.steps) {
          ent_sum += static_cast<double>(st.entropy);
          ++ent_n;
        }
      }
      trajs.push_back(rq.rollouts.trajectories);
      recorded.push_back(std::move(rq));
    }
    const double beta = entropy_weight();
    const double loss = reinforce_gradients(recorded, cfg_.gamma, state_.baseline, beta);
    recorded.clear();
    if (!std::isfinite(loss)) throw Error(Errc::training_divergence, "non-finite loss");
    adam_update(model_->params(), state_.adam);
    state_.entropy_step += 1;
    double reward = 0;
    std::size_t n = 0;
    for (const auto& q : trajs) {
      for (const auto& tr : q) {
        reward += tr.reward;
        ++n;
      }
    }
    state_.baseline = update_baseline(state_.baseline, trajs, cfg_.baseline_decay);
    if (mean_entropy != nullptr) *mean_entropy = ent_n ? ent_sum / static_cast<double>(ent_n) : 0.0;
    return {reward / static_cast<double>(n), loss};
  }

  /// Shuffles, splits into batches and trains one epoch.
  EpochMetrics train_epoch(const std::vector<TrainingExample>& data) {
    if (data.empty()) throw Error(Errc::config, "empty training set");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(order);
    EpochMetrics m;
    m.epoch = ++state_.epoch;
    double reward = 0, entropy = 0, loss = 0;
    std::size_t batches = 0, questions = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch));
      std::vector<const TrainingExample*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
      double ent = 0;
      auto [r, l] = train_batch(batch, &ent);
      reward += r * static_cast<double>(batch.size());
      entropy += ent * static_cast<double>(batch.size());
      loss += l;
      questions += batch.size();
      ++batches;
    }
    m.mean_reward = reward / static_cast<double>(questions);
    m.mean_entropy = entropy / static_cast<double>(questions);
    m.loss = loss / static_cast<double>(batches);
    m.baseline = state_.baseline;
    m.entropy_weight = entropy_weight();
    m.optimizer_steps = state_.adam.step;
    return m;
  }

 private:
  Model<S>* model_;
  TrainConfig cfg_;
  Rng rng_;
  TrainerState<S> state_;
};

/// Full run: classifier pretraining, then `epochs` policy epochs. With an
/// output directory, every epoch rewrites checkpoint.bin and appends a line
/// to metrics.jsonl. A divergent batch aborts the run and leaves the last
/// good checkpoint in place.
template <typename S>
std::vector<EpochMetrics> train(Model<S>& model, const std::vector<TrainingExample>& data, const TrainConfig& cfg,
                                const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  Trainer<S> trainer(model, cfg);
  std::filesystem::path dir(cfg.out_dir);
  std::ofstream log;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(dir);
    log.open(dir / "metrics.jsonl", std::ios::trunc);
    if (!log) throw Error(Errc::io, "cannot write " + (dir / "metrics.jsonl").string());
  }
  if (cfg.classifier_epochs > 0) {
    const double acc = trainer.pretrain_classifier(data);
    if (log) log << nlohmann::json{{"classifier_accuracy", acc}}.dump() << "\n";
  }
  std::vector<EpochMetrics> out;
  for (int e = 0; e < cfg.epochs; ++e) {
    auto m = trainer.train_epoch(data);
    out.push_back(m);
    if (!cfg.out_dir.empty()) {
      log << nlohmann::json(m).dump() << "\n";
      log.flush();
      save_checkpoint(dir / "checkpoint.bin", model, trainer.state(), nlohmann::json{{"train", cfg}});
    }
    if (on_epoch) on_epoch(m);
  }
  return out;
}

}  // namespace hopper
