// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "agent_support.hpp"
#include "hopper/agent/checkpoint.hpp"
#include "hopper/agent/policy.hpp"
#include "hopper/agent/reinforce.hpp"
#include "hopper/agent/train.hpp"
#include "hopper/numerics/gradcheck.hpp"

using namespace hopper;
using M = Matrix<double>;
using hopper::testing::tiny_model;

namespace {

const std::vector<std::string> kQuestion{"what", "is", "on", "the", "table", "?"};

SceneGraph star(const std::vector<std::string>& labels, QuestionType type) {
  SceneGraph sg;
  for (const auto& l : labels) sg.add_entity(l, EntityKind::object);
  return attach_auxiliary(close_graph(sg), type);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST(ActionDistribution, SingletonIsCertain) {
  auto model = tiny_model(1);
  auto sg = star({"cup"}, QuestionType::query);
  auto dist = action_distribution(*model, sg, kQuestion, EpisodeSchedule{1, 0});
  ASSERT_EQ(dist.size(), 1u);
  EXPECT_DOUBLE_EQ(dist[0].second, 1.0);
}

TEST(ActionDistribution, IdenticalCandidatesSplitEvenly) {
  auto model = tiny_model(2);
  auto sg = star({"cup", "cup"}, QuestionType::query);
  auto dist = action_distribution(*model, sg, kQuestion, EpisodeSchedule{4, 0});
  ASSERT_EQ(dist.size(), 2u);
  EXPECT_NEAR(dist[0].second, 0.5, 1e-15);
  EXPECT_NEAR(dist[1].second, 0.5, 1e-15);
}

TEST(ActionDistribution, MatchesReferenceRecomputation) {
  auto model = tiny_model(3);
  auto& ps = model->params();
  // non-zero biases so every term contributes
  Rng rng(5);
  for (auto* p : ps.trainable()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += 0.3 * rng.uniform(-1, 1);
  }
  auto sg = star({"cup", "dog", "book"}, QuestionType::query);
  auto dist = action_distribution(*model, sg, kQuestion, EpisodeSchedule{4, 0});
  ASSERT_EQ(dist.size(), 3u);

  Tape<double> tape(false);
  auto ctx = model->encode(tape, sg, kQuestion, false, nullptr);
  const M& E = ctx.entities.value();
  const M& R = ctx.relations.value();
  const M& Q = ctx.question.value();
  const int h = model->config().hidden;
  const int d = model->config().word_dim;
  M gates = ps.at("policy.dummy").value * ps.at("policy.lstm.w_ih").value + ps.at("policy.lstm.bias").value;
  Eigen::VectorXd hv(h);
  for (int j = 0; j < h; ++j) {
    const double c = sigmoid(gates(0, j)) * std::tanh(gates(0, 2 * h + j));
    hv(j) = sigmoid(gates(0, 3 * h + j)) * std::tanh(c);
  }
  M hq(1, h + d);
  hq << hv.transpose(), Q;
  M z = hq * ps.at("policy.mlp.w1").value + ps.at("policy.mlp.b1").value;
  z = z.cwiseMax(0.0);
  M m = z * ps.at("policy.mlp.w2").value + ps.at("policy.mlp.b2").value;
  std::vector<double> scores;
  for (const auto& [a, p] : dist) {
    scores.push_back(m.leftCols(d).row(0).dot(R.row(a.relation)) + m.rightCols(d).row(0).dot(E.row(a.target)));
  }
  double mx = *std::max_element(scores.begin(), scores.end()), total = 0;
  for (double s : scores) total += std::exp(s - mx);
  for (std::size_t k = 0; k < dist.size(); ++k) EXPECT_NEAR(dist[k].second, std::exp(scores[k] - mx) / total, 1e-12);
}

TEST(ActionDistribution, EmptyActionSetIsAnError) {
  auto model = tiny_model(1);
  SceneGraph sg;
  sg.add_entity("cup", EntityKind::object);
  sg.add_entity(labels::hub, EntityKind::auxiliary, AuxRole::hub);
  try {
    action_distribution(*model, sg, kQuestion, EpisodeSchedule{1, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_action_set);
  }
}

TEST(ActionDistribution, SumsToOneAlongSampledPaths) {
  Rng rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    auto model = tiny_model(100 + trial);
    const auto type = trial % 2 ? QuestionType::binary : QuestionType::query;
    auto sg = hopper::testing::random_attached_graph(rng, 1 + static_cast<int>(rng.below(6)), 6, type);
    const auto sched = EpisodeSchedule::for_type(type);
    Rng srng(trial);
    auto trajs = sample_rollouts(*model, sg, kQuestion, sched, 3, srng);
    for (const auto& tr : trajs) {
      std::vector<Action> prefix;
      for (const auto& st : tr.steps) {
        double total = 0;
        for (const auto& [a, p] : action_distribution(*model, sg, kQuestion, sched, prefix)) total += p;
        ASSERT_NEAR(total, 1.0, 1e-9);
        prefix.push_back(st.action);
      }
    }
  }
}

TEST(SampleRollouts, FrequenciesMatchDistribution) {
  auto model = tiny_model(4);
  auto sg = star({"cup", "dog", "book", "lamp"}, QuestionType::query);
  const EpisodeSchedule one{1, 0};
  auto dist = action_distribution(*model, sg, kQuestion, one);
  const int n = 100000;
  Rng rng(21);
  auto trajs = sample_rollouts(*model, sg, kQuestion, one, n, rng);
  std::map<Action, int> counts;
  for (const auto& tr : trajs) counts[tr.steps[0].action]++;
  for (const auto& [a, p] : dist) {
    const double sigma = std::sqrt(n * p * (1 - p));
    EXPECT_LE(std::abs(counts[a] - n * p), 3 * sigma) << sg.display_name(a.target);
  }
}

TEST(SampleRollouts, ShapeLogProbAndDeterminism) {
  auto model = tiny_model(5);
  Rng g(2);
  auto sg = hopper::testing::random_attached_graph(g, 6, 8, QuestionType::query);
  const auto sched = EpisodeSchedule::for_type(QuestionType::query);
  Rng r1(9), r2(9);
  auto a = sample_rollouts(*model, sg, kQuestion, sched, 20, r1);
  auto b = sample_rollouts(*model, sg, kQuestion, sched, 20, r2);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].steps.size(), 4u);
    double sum = 0;
    for (std::size_t t = 0; t < 4; ++t) {
      EXPECT_LE(a[i].steps[t].logp, 0.0);
      EXPECT_GE(a[i].steps[t].entropy, -1e-12);
      EXPECT_EQ(a[i].steps[t].action, b[i].steps[t].action);
      sum += a[i].steps[t].logp;
    }
    EXPECT_DOUBLE_EQ(a[i].logp(), sum);
  }
}

TEST(SampleRollouts, ForcedPathHasLogProbZero) {
  auto model = tiny_model(6);
  auto sg = star({"cup"}, QuestionType::query);
  Rng rng(1);
  auto trajs = sample_rollouts(*model, sg, kQuestion, EpisodeSchedule{1, 0}, 20, rng);
  for (const auto& tr : trajs) {
    EXPECT_EQ(tr.steps[0].action, trajs[0].steps[0].action);
    EXPECT_EQ(tr.logp(), 0.0);
  }
}

TEST(SampleRollouts, BinaryEpisodesResetAndAbsorb) {
  auto model = tiny_model(7);
  Rng g(4);
  const auto sched = EpisodeSchedule::for_type(QuestionType::binary);
  int absorbed = 0;
  for (int k = 0; k < 10; ++k) {
    auto sg = hopper::testing::random_attached_graph(g, 5, 6, QuestionType::binary);
    Rng rng(k);
    auto trajs = sample_rollouts(*model, sg, kQuestion, sched, 100, rng);
    for (const auto& tr : trajs) {
      ASSERT_EQ(tr.steps.size(), 8u);
      EXPECT_EQ(tr.steps[4].state.entity, *sg.hub());
      EXPECT_TRUE(tr.steps[4].state.dummy);
      for (int t = 0; t + 1 < 8; ++t) {
        const auto role = sg.entity(tr.steps[t].action.target).aux_role;
        if ((role == AuxRole::yes || role == AuxRole::no) && t + 1 != 4) {
          ++absorbed;
          EXPECT_EQ(tr.steps[t + 1].state.entity, tr.steps[t].action.target);
          EXPECT_EQ(tr.steps[t + 1].action.target, tr.steps[t].action.target);
        }
      }
    }
  }
  EXPECT_GT(absorbed, 0);
}

TEST(Reinforce, AdvantagesNormalisedAndConstantPerRollout) {
  std::vector<std::vector<Trajectory<double>>> batch(2);
  for (int q = 0; q < 2; ++q) {
    for (int r = 0; r < 3; ++r) {
      Trajectory<double> tr;
      tr.steps.resize(4);
      tr.reward = (q + r) % 2;
      batch[q].push_back(tr);
    }
  }
  auto adv = normalized_advantages(batch, 1.0, 0.3);
  double sum = 0, sq = 0;
  for (const auto& a : adv) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      for (Eigen::Index t = 1; t < a.cols(); ++t) EXPECT_EQ(a(r, t), a(r, 0));
    }
    sum += a.sum();
    sq += a.squaredNorm();
  }
  EXPECT_NEAR(sum / 24, 0.0, 1e-12);
  EXPECT_NEAR(sq / 24, 1.0, 1e-6);
  for (auto& q : batch) {
    for (auto& tr : q) tr.reward = 0;
  }
  for (const auto& a : normalized_advantages(batch, 1.0, 0.0)) EXPECT_TRUE(a.isZero(0.0));
}

namespace {

// One frozen question: fixed sampled paths replayed on a fresh tape.
struct Frozen {
  SceneGraph sg;
  std::vector<std::vector<Action>> paths;
  EpisodeSchedule sched;
};

Frozen freeze(const Model<double>& model, std::uint64_t seed, QuestionType type) {
  Rng g(seed);
  Frozen f{hopper::testing::random_attached_graph(g, 4, 5, type), {}, EpisodeSchedule::for_type(type)};
  Rng rng(seed + 1);
  for (const auto& tr : sample_rollouts(model, f.sg, kQuestion, f.sched, 3, rng)) {
    std::vector<Action> p;
    for (const auto& st : tr.steps) p.push_back(st.action);
    f.paths.push_back(p);
  }
  return f;
}

Var<double> surrogate(Tape<double>& tape, const Model<double>& model, const Frozen& f, const M& adv, double beta) {
  auto ctx = model.encode(tape, f.sg, kQuestion, false, nullptr);
  auto rb = run_episodes(model, tape, ctx, f.sg, f.sched, 3, replay_chooser<double>(f.paths));
  return reinforce_surrogate(rb, adv, beta, 3, 3 * f.paths[0].size());
}

}  // namespace

TEST(Reinforce, SurrogateGradientMatchesFiniteDifferences) {
  auto model = tiny_model(11);
  auto f = freeze(*model, 3, QuestionType::query);
  Rng rng(2);
  M adv(3, 4);
  for (Eigen::Index i = 0; i < adv.size(); ++i) adv.data()[i] = rng.uniform(-1, 1);
  GradCheckOptions opts;
  opts.max_coords_per_tensor = 30;
  auto report = finite_diff_check<double>([&](Tape<double>& t) { return surrogate(t, *model, f, adv, 0.2); },
                                          model->params().trainable(), opts);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst.tensor;
}

TEST(Reinforce, ZeroRewardsLeaveOnlyEntropyGradient) {
  auto model = tiny_model(12);
  auto f = freeze(*model, 5, QuestionType::query);
  std::vector<std::vector<Trajectory<double>>> batch(1);
  batch[0].resize(3);
  for (auto& tr : batch[0]) tr.steps.resize(4);
  auto adv = normalized_advantages(batch, 1.0, 0.0)[0];
  auto grads = [&](const M& a, double beta) {
    model->params().zero_grad();
    Tape<double> tape;
    tape.backward(surrogate(tape, *model, f, a, beta));
    std::vector<M> g;
    for (auto* p : model->params().trainable()) g.push_back(p->grad);
    return g;
  };
  auto full = grads(adv, 0.2);
  auto entropy_only = grads(M::Zero(3, 4), 0.2);
  auto pg_only = grads(adv, 0.0);
  for (std::size_t i = 0; i < full.size(); ++i) {
    EXPECT_EQ(full[i], entropy_only[i]);
    EXPECT_TRUE(pg_only[i].isZero(0.0));
  }
}

TEST(Reinforce, RewardedPathGainsProbability) {
  auto model = tiny_model(13);
  Frozen f = freeze(*model, 9, QuestionType::query);
  f.paths.resize(1);
  f.paths.resize(3, f.paths[0]);
  auto logp = [&]() {
    Tape<double> tape(false);
    auto ctx = model->encode(tape, f.sg, kQuestion, false, nullptr);
    return run_episodes(*model, tape, ctx, f.sg, f.sched, 1, replay_chooser<double>(f.paths)).trajectories[0].logp();
  };
  const double before = logp();
  model->params().zero_grad();
  {
    Tape<double> tape;
    tape.backward(surrogate(tape, *model, f, M::Ones(3, 4), 0.0));
  }
  for (auto* p : model->params().trainable()) p->value -= 1e-3 * p->grad;
  EXPECT_GT(logp(), before);
}

TEST(Schedules, EntropyAndBaseline) {
  EntropySchedule s;
  EXPECT_EQ(s.at(0), 0.2);
  EXPECT_DOUBLE_EQ(s.at(1), 0.198);
  EXPECT_DOUBLE_EQ(s.at(10), 0.2 * std::pow(0.99, 10));
  EXPECT_DOUBLE_EQ(s.at(100), 0.2 * std::pow(0.99, 100));
  std::vector<std::vector<Trajectory<double>>> batch(1);
  batch[0].resize(1);
  batch[0][0].reward = 1;
  EXPECT_DOUBLE_EQ(update_baseline(0.0, batch, 0.9), 0.1);
  EXPECT_EQ(update_baseline(0.37, batch, 0.0), 1.0);
  double b = 0;
  for (int i = 0; i < 2000; ++i) b = update_baseline(b, batch, 0.95);
  EXPECT_NEAR(b, 1.0, 1e-12);
}

namespace {

std::vector<TrainingExample> bandit_data() {
  auto sg = std::make_shared<SceneGraph>(star({"cup", "dog"}, QuestionType::query));
  TrainingExample ex{"q0", "what is the cup ?", {"what", "is", "the", "cup", "?"}, "cup", QuestionType::query, sg};
  return {ex};
}

}  // namespace

TEST(Train, TwoActionBanditConverges) {
  auto model = tiny_model(14);
  TrainConfig cfg;
  cfg.steps_query = 1;
  cfg.learning_rate = 1e-3;
  cfg.classifier_epochs = 0;
  cfg.classifier_weight = 0;
  cfg.epochs = 500;
  auto data = bandit_data();
  auto metrics = train(*model, data, cfg);
  EXPECT_EQ(metrics.back().optimizer_steps, 500u);
  auto dist = action_distribution(*model, *data[0].graph, data[0].tokens, EpisodeSchedule{1, 0});
  for (const auto& [a, p] : dist) {
    if (data[0].graph->entity(a.target).label == "cup") {
      EXPECT_GT(p, 0.95);
    }
  }
}

TEST(Train, EntropyWeightFollowsOptimizerSteps) {
  auto model = tiny_model(15);
  TrainConfig cfg;
  cfg.classifier_epochs = 0;
  cfg.rollouts = 2;
  Trainer<double> trainer(*model, cfg);
  auto data = bandit_data();
  EXPECT_EQ(trainer.entropy_weight(), 0.2);
  trainer.train_batch({&data[0]});
  EXPECT_DOUBLE_EQ(trainer.entropy_weight(), 0.198);
  for (int i = 1; i < 10; ++i) trainer.train_batch({&data[0]});
  EXPECT_DOUBLE_EQ(trainer.entropy_weight(), 0.2 * std::pow(0.99, 10));
}

TEST(Train, SameSeedSameParameters) {
  auto run = []() {
    auto model = tiny_model(16);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.rollouts = 4;
    cfg.classifier_epochs = 2;
    cfg.seed = 77;
    Rng g(1);
    std::vector<TrainingExample> data;
    for (int i = 0; i < 5; ++i) {
      auto sg = std::make_shared<SceneGraph>(hopper::testing::random_attached_graph(g, 4, 5, QuestionType::query));
      data.push_back({"q", "what is on the table ?", kQuestion, sg->entity(0).label, QuestionType::query, sg});
    }
    train(*model, data, cfg);
    std::vector<M> w;
    for (auto* p : model->params().trainable()) w.push_back(p->value);
    return w;
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  auto dir = std::filesystem::temp_directory_path() / "hopper_ck_test";
  std::filesystem::create_directories(dir);
  auto model = tiny_model(17);
  TrainConfig cfg;
  cfg.classifier_epochs = 0;
  cfg.rollouts = 3;
  Trainer<double> trainer(*model, cfg);
  auto data = bandit_data();
  trainer.train_batch({&data[0]});
  save_checkpoint(dir / "a.bin", *model, trainer.state(), nlohmann::json{{"note", 1}});
  auto loaded = load_checkpoint<double>(dir / "a.bin");
  save_checkpoint(dir / "b.bin", *loaded.model, loaded.state, loaded.extra);
  EXPECT_EQ(read_bytes(dir / "a.bin"), read_bytes(dir / "b.bin"));
  EXPECT_EQ(loaded.state.entropy_step, 1u);
  EXPECT_EQ(checkpoint_scalar_size(dir / "a.bin"), 8u);
  std::size_t total = 0;
  for (const auto& [name, n] : checkpoint_tensor_sizes(dir / "a.bin")) total += n;
  EXPECT_EQ(total, model->params().count());
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ShapeMismatchNamesTensor) {
  auto model = tiny_model(18);
  std::stringstream buf;
  write_checkpoint(buf, *model, TrainerState<double>{});
  std::string bytes = buf.str();
  // grow the stored hidden width so restored LSTM tensors disagree
  const std::string from = "\"hidden\":5";
  auto pos = bytes.find(from);
  ASSERT_NE(pos, std::string::npos);
  bytes.replace(pos, from.size(), "\"hidden\":4");
  std::istringstream in(bytes);
  try {
    read_checkpoint<double>(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::load);
    EXPECT_NE(std::string(e.what()).find("tensor policy.lstm"), std::string::npos) << e.what();
  }
}

TEST(Train, DivergenceKeepsLastGoodCheckpoint) {
  auto dir = std::filesystem::temp_directory_path() / "hopper_nan_test";
  std::filesystem::remove_all(dir);
  auto model = tiny_model(19);
  TrainConfig cfg;
  cfg.classifier_epochs = 0;
  cfg.rollouts = 2;
  cfg.epochs = 1;
  cfg.out_dir = dir.string();
  auto data = bandit_data();
  train(*model, data, cfg);
  const auto good = read_bytes(dir / "checkpoint.bin");
  model->params().at("policy.mlp.w2").value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    train(*model, data, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::training_divergence);
  }
  EXPECT_EQ(read_bytes(dir / "checkpoint.bin"), good);
  std::filesystem::remove_all(dir);
}
