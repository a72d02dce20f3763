// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hopper/lexicon/tokenize.hpp"
#include "hopper/lexicon/word_vectors.hpp"
#include "hopper/numerics/adam.hpp"
#include "hopper/numerics/ops.hpp"
#include "hopper/types.hpp"

namespace hopper {

/// Two-layer MLP over mean-pooled frozen word vectors deciding whether a
/// question is open (query) or yes/no (binary). Class 0 is query, 1 binary.
template <typename S>
class QuestionClassifier {
 public:
  static constexpr const char* module_name = "classifier";

  QuestionClassifier() = default;

  QuestionClassifier(ParameterSet<S>& params, int input_dim, int hidden, Rng& rng) {
    w1_ = &params.add(module_name, "classifier.w1", glorot_uniform<S>(input_dim, hidden, rng));
    b1_ = &params.add(module_name, "classifier.b1", Matrix<S>::Zero(1, hidden));
    w2_ = &params.add(module_name, "classifier.w2", glorot_uniform<S>(hidden, 2, rng));
    b2_ = &params.add(module_name, "classifier.b2", Matrix<S>::Zero(1, 2));
  }

  /// Rebinds to parameters already registered (e.g. after loading).
  static QuestionClassifier bind(ParameterSet<S>& params) {
    QuestionClassifier c;
    c.w1_ = &params.at("classifier.w1");
    c.b1_ = &params.at("classifier.b1");
    c.w2_ = &params.at("classifier.w2");
    c.b2_ = &params.at("classifier.b2");
    return c;
  }

  std::vector<Parameter<S>*> parameters() const { return {w1_, b1_, w2_, b2_}; }

  int input_dim() const { return static_cast<int>(w1_->value.rows()); }

  /// Mean of the token vectors (unknown tokens use the table fallback).
  static Matrix<S> pool(const std::vector<std::string>& tokens, const EmbeddingTable<S>& table) {
    if (tokens.empty()) throw Error(Errc::classification, "cannot classify an empty question");
    Matrix<S> acc = Matrix<S>::Zero(1, table.dim());
    for (const auto& t : tokens) acc += table.lookup(t);
    return acc / static_cast<S>(tokens.size());
  }

  /// rows x 2 logits for rows of pooled vectors.
  Var<S> logits(Tape<S>& tape, Var<S> pooled) const {
    auto h = ops::relu(ops::linear(pooled, tape.param(*w1_), tape.param(*b1_)));
    return ops::linear(h, tape.param(*w2_), tape.param(*b2_));
  }

  /// Mean cross entropy of `pooled` rows against `labels` (0 query, 1 binary).
  Var<S> loss(Tape<S>& tape, const Matrix<S>& pooled, const std::vector<int>& labels) const {
    auto logp = ops::log_softmax_rows(logits(tape, tape.constant(pooled)));
    Matrix<S> pick = Matrix<S>::Zero(pooled.rows(), 2);
    for (std::size_t i = 0; i < labels.size(); ++i) pick(static_cast<Eigen::Index>(i), labels[i]) = S(-1) / static_cast<S>(labels.size());
    return ops::weighted_sum(logp, std::move(pick));
  }

  QuestionType classify(const std::vector<std::string>& tokens, const EmbeddingTable<S>& table) const {
    Tape<S> tape(false);
    auto z = logits(tape, tape.constant(pool(tokens, table)));
    return z.value()(0, 1) > z.value()(0, 0) ? QuestionType::binary : QuestionType::query;
  }

 private:
  Parameter<S>* w1_ = nullptr;
  Parameter<S>* b1_ = nullptr;
  Parameter<S>* w2_ = nullptr;
  Parameter<S>* b2_ = nullptr;
};

template <typename S>
QuestionType classify_question(const QuestionClassifier<S>& clf, const std::vector<std::string>& tokens,
                               const EmbeddingTable<S>& table) {
  return clf.classify(tokens, table);
}

struct ClassifierTrainOptions {
  int epochs = 30;
  int batch = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

/// Supervised pretraining on (question, type) pairs with its own Adam state.
/// Returns the final training accuracy.
template <typename S>
double train_classifier(QuestionClassifier<S>& clf, const std::vector<std::pair<std::string, QuestionType>>& data,
                        const EmbeddingTable<S>& table, ClassifierTrainOptions opts = {}) {
  if (data.empty()) return 1.0;
  std::vector<Matrix<S>> pooled;
  std::vector<int> labels;
  for (const auto& [q, t] : data) {
    pooled.push_back(QuestionClassifier<S>::pool(tokenize(q), table));
    labels.push_back(t == QuestionType::binary ? 1 : 0);
  }
  AdamState<S> adam;
  adam.config.learning_rate = opts.learning_rate;
  auto params = clf.parameters();
  Rng rng(opts.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto dim = pooled.front().cols();
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opts.batch));
      Matrix<S> x(static_cast<Eigen::Index>(end - start), dim);
      std::vector<int> y;
      for (std::size_t i = start; i < end; ++i) {
        x.row(static_cast<Eigen::Index>(i - start)) = pooled[order[i]];
        y.push_back(labels[order[i]]);
      }
      for (auto* p : params) p->zero_grad();
      Tape<S> tape(true);
      tape.backward(clf.loss(tape, x, y));
      adam_update(params, adam);
    }
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto t = clf.classify(tokenize(data[i].first), table);
    if ((t == QuestionType::binary ? 1 : 0) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace hopper
