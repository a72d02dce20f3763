// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hopper/encoders/gat.hpp"
#include "hopper/encoders/question_encoder.hpp"
#include "hopper/lexicon/classifier.hpp"
#include "hopper/lexicon/word_vectors.hpp"
#include "hopper/scenegraph/graph.hpp"

namespace hopper {

struct ModelConfig {
  int word_dim = 300;
  int hidden = 300;
  int classifier_hidden = 128;
  GatConfig gat;
  QuestionEncoderConfig question;
  std::uint64_t seed = 0;

  /// Same architecture with every width shrunk; used by tests and gradcheck.
  static ModelConfig tiny(int d = 6, int hidden = 5) {
    ModelConfig c;
    c.word_dim = d;
    c.hidden = hidden;
    c.classifier_hidden = 4;
    c.gat.input_dim = d;
    c.gat.heads1 = 2;
    c.gat.features1 = 3;
    c.gat.heads2 = 2;
    c.gat.output_dim = d;
    c.question.model_dim = d;
    c.question.heads = 2;
    c.question.head_dim = 3;
    c.question.ffn_dim = d;
    return c;
  }

  /// Sets the word width and every encoder width that must follow it; the
  /// question encoder keeps its head count and splits the width among heads.
  void set_width(int d) {
    word_dim = d;
    gat.input_dim = d;
    gat.output_dim = d;
    question.model_dim = d;
    question.ffn_dim = d;
    question.head_dim = std::max(1, d / std::max(1, question.heads));
  }

  void validate() const {
    if (word_dim < 1 || hidden < 1 || classifier_hidden < 1) throw Error(Errc::config, "model widths must be positive");
    if (gat.input_dim != word_dim || gat.output_dim != word_dim || question.model_dim != word_dim) {
      throw Error(Errc::config, "encoder widths must equal the word dimension");
    }
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"word_dim", c.word_dim},
                     {"hidden", c.hidden},
                     {"classifier_hidden", c.classifier_hidden},
                     {"seed", c.seed},
                     {"gat",
                      {{"heads1", c.gat.heads1},
                       {"features1", c.gat.features1},
                       {"heads2", c.gat.heads2},
                       {"attention_dropout", c.gat.attention_dropout},
                       {"layer_dropout", c.gat.layer_dropout},
                       {"leaky_slope", c.gat.leaky_slope}}},
                     {"question",
                      {{"layers", c.question.layers},
                       {"heads", c.question.heads},
                       {"head_dim", c.question.head_dim},
                       {"ffn_dim", c.question.ffn_dim},
                       {"dropout", c.question.dropout}}}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.word_dim = j.at("word_dim");
  c.hidden = j.at("hidden");
  c.classifier_hidden = j.at("classifier_hidden");
  c.seed = j.at("seed");
  const auto& g = j.at("gat");
  c.gat.input_dim = c.word_dim;
  c.gat.output_dim = c.word_dim;
  c.gat.heads1 = g.at("heads1");
  c.gat.features1 = g.at("features1");
  c.gat.heads2 = g.at("heads2");
  c.gat.attention_dropout = g.at("attention_dropout");
  c.gat.layer_dropout = g.at("layer_dropout");
  c.gat.leaky_slope = g.at("leaky_slope");
  const auto& q = j.at("question");
  c.question.model_dim = c.word_dim;
  c.question.layers = q.at("layers");
  c.question.heads = q.at("heads");
  c.question.head_dim = q.at("head_dim");
  c.question.ffn_dim = q.at("ffn_dim");
  c.question.dropout = q.at("dropout");
}

/// Relation key used by the embedding vocabulary: the label, with "^-1"
/// appended for inverse directions.
inline std::string relation_key(const Relation& r) {
  return r.is_inverse ? r.label + "^-1" : r.label;
}

/// Relations that never come from word vectors.
inline const std::vector<std::string>& reserved_relation_keys() {
  static const std::vector<std::string> keys{
      labels::no_op,           labels::hub_link,           std::string(labels::hub_link) + "^-1",
      labels::answer_yes,      std::string(labels::answer_yes) + "^-1", labels::answer_no,
      std::string(labels::answer_no) + "^-1"};
  return keys;
}

/// Embeddings of one question and its graph on a tape. Row i of `entities`
/// belongs to entity id i and row j of `relations` to relation id j.
template <typename S>
struct Context {
  Var<S> entities;
  Var<S> relations;
  Var<S> question;
};

/// Every trainable piece of the agent plus the frozen lexicon.
///
/// Parameters are registered in a fixed order, so two models built from the
/// same config, vocabularies and seed are bitwise identical.
template <typename S>
class Model {
 public:
  Model(ModelConfig cfg, std::vector<std::string> entity_labels, std::vector<std::string> relation_labels,
        EmbeddingTable<S> lexicon)
      : cfg_(cfg),
        entity_labels_(std::move(entity_labels)),
        relation_labels_(std::move(relation_labels)),
        lexicon_(std::move(lexicon)) {
    cfg_.validate();
    if (lexicon_.dim() != cfg_.word_dim) {
      throw Error(Errc::config, "word vectors have width " + std::to_string(lexicon_.dim()) + ", model expects " +
                                    std::to_string(cfg_.word_dim));
    }
    index_vocabularies();
    Rng rng(cfg_.seed);
    const int d = cfg_.word_dim;
    const int h = cfg_.hidden;

    Matrix<S> ent(static_cast<Eigen::Index>(std::max<std::size_t>(entity_labels_.size(), 1)), d);
    ent.setZero();
    for (std::size_t i = 0; i < entity_labels_.size(); ++i) {
      ent.row(static_cast<Eigen::Index>(i)) = embed_label(label_words(entity_labels_[i]), lexicon_, &oov_);
    }
    params_.add("embeddings", "embed.entity", std::move(ent));
    params_.add("embeddings", "embed.auxiliary", glorot_uniform<S>(3, d, rng));

    const auto& reserved = reserved_relation_keys();
    Matrix<S> rel(static_cast<Eigen::Index>(reserved.size() + 2 * relation_labels_.size()), d);
    rel.topRows(static_cast<Eigen::Index>(reserved.size())) = glorot_uniform<S>(reserved.size(), d, rng);
    for (std::size_t i = 0; i < relation_labels_.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(reserved.size() + 2 * i);
      rel.row(row) = embed_label(label_words(relation_labels_[i]), lexicon_, &oov_);
      rel.row(row + 1) = -rel.row(row);
    }
    params_.add("embeddings", "embed.relation", std::move(rel));

    gat_ = GatEncoder<S>(params_, cfg_.gat, rng);
    question_ = QuestionEncoder<S>(params_, cfg_.question, rng);

    params_.add("policy", "policy.dummy", glorot_uniform<S>(1, 2 * d, rng));
    params_.add("policy", "policy.lstm.w_ih", glorot_uniform<S>(2 * d, 4 * h, rng));
    params_.add("policy", "policy.lstm.w_hh", glorot_uniform<S>(h, 4 * h, rng));
    params_.add("policy", "policy.lstm.bias", Matrix<S>::Zero(1, 4 * h));
    params_.add("policy", "policy.mlp.w1", glorot_uniform<S>(h + d, 2 * d, rng));
    params_.add("policy", "policy.mlp.b1", Matrix<S>::Zero(1, 2 * d));
    params_.add("policy", "policy.mlp.w2", glorot_uniform<S>(2 * d, 2 * d, rng));
    params_.add("policy", "policy.mlp.b2", Matrix<S>::Zero(1, 2 * d));

    classifier_ = QuestionClassifier<S>(params_, d, cfg_.classifier_hidden, rng);
    bind_policy();
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<S>& params() { return params_; }
  const ParameterSet<S>& params() const { return params_; }
  const EmbeddingTable<S>& lexicon() const { return lexicon_; }
  const std::vector<std::string>& entity_labels() const { return entity_labels_; }
  const std::vector<std::string>& relation_labels() const { return relation_labels_; }
  const std::vector<std::string>& oov_labels() const { return oov_; }
  const GatEncoder<S>& gat() const { return gat_; }
  const QuestionEncoder<S>& question_encoder() const { return question_; }
  const QuestionClassifier<S>& classifier() const { return classifier_; }

  /// Parameter count per module name, trainable tensors only.
  std::map<std::string, std::size_t> module_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& p : params_) {
      if (p->trainable) out[p->module] += p->size();
    }
    return out;
  }

  QuestionType classify(const std::vector<std::string>& tokens) const { return classifier_.classify(tokens, lexicon_); }

  /// Embeds `sg` (auxiliary nodes attached) and the question on `tape`.
  Context<S> encode(Tape<S>& tape, const SceneGraph& sg, const std::vector<std::string>& tokens, bool training,
                    Rng* rng) const {
    const int content = static_cast<int>(sg.content_count());
    std::vector<int> ent_rows;
    std::vector<std::string> unknown_ents;
    for (int i = 0; i < content; ++i) {
      const auto key = to_lower(sg.entity(i).label);
      auto it = entity_index_.find(key);
      if (it != entity_index_.end()) {
        ent_rows.push_back(it->second);
      } else {
        ent_rows.push_back(-1 - static_cast<int>(unknown_ents.size()));
        unknown_ents.push_back(key);
      }
    }
    Var<S> content_vecs;
    if (content > 0) {
      auto base = lookup_rows(tape, params_.at("embed.entity"), ent_rows, unknown_ents, false);
      content_vecs = gat_.encode(tape, base, gat_edges(sg), training, rng);
    }
    std::vector<int> aux_rows;
    for (std::size_t i = sg.content_count(); i < sg.size(); ++i) {
      const auto role = sg.entity(static_cast<int>(i)).aux_role;
      aux_rows.push_back(role == AuxRole::hub ? 0 : role == AuxRole::yes ? 1 : 2);
    }
    Var<S> entities = content_vecs;
    if (!aux_rows.empty()) {
      auto aux = ops::gather_rows(tape.param(*aux_), aux_rows);
      entities = content > 0 ? ops::concat_rows<S>({content_vecs, aux}) : aux;
    }

    std::vector<int> rel_rows;
    std::vector<std::string> unknown_rels;
    for (const auto& r : sg.relations()) {
      auto it = relation_index_.find(relation_key(r));
      if (it != relation_index_.end()) {
        rel_rows.push_back(it->second);
      } else {
        rel_rows.push_back(-1 - static_cast<int>(unknown_rels.size()));
        unknown_rels.push_back(relation_key(r));
      }
    }
    auto relations = lookup_rows(tape, params_.at("embed.relation"), rel_rows, unknown_rels, true);
    auto question = question_.encode(tape, token_matrix(tokens, lexicon_), training, rng);
    return Context<S>{entities, relations, question};
  }

  /// One recurrence of the history encoder over a batch of rows.
  std::pair<Var<S>, Var<S>> lstm(Tape<S>& tape, Var<S> input, Var<S> h, Var<S> c) const {
    auto hc = ops::lstm_cell(input, h, c, tape.param(*w_ih_), tape.param(*w_hh_), tape.param(*lstm_bias_));
    return {ops::slice_cols(hc, 0, cfg_.hidden), ops::slice_cols(hc, cfg_.hidden, cfg_.hidden)};
  }

  /// Per-row query vectors m = W2 ReLU(W1 [h; Q] + b1) + b2 (rows x 2d).
  Var<S> query(Tape<S>& tape, Var<S> h, Var<S> question) const {
    auto q = ops::gather_rows(question, std::vector<int>(static_cast<std::size_t>(h.rows()), 0));
    auto hidden = ops::relu(ops::linear(ops::concat_cols<S>({h, q}), tape.param(*w1_), tape.param(*b1_)));
    return ops::linear(hidden, tape.param(*w2_), tape.param(*b2_));
  }

  /// The dummy start/return action embedding repeated over `rows`.
  Var<S> dummy(Tape<S>& tape, int rows) const {
    return ops::gather_rows(tape.param(*dummy_), std::vector<int>(static_cast<std::size_t>(rows), 0));
  }

  Var<S> zero_state(Tape<S>& tape, int rows) const { return tape.constant(Matrix<S>::Zero(rows, cfg_.hidden)); }

  /// Rebuilds a model around loaded tensors; every tensor must be present
  /// with the expected shape.
  static std::unique_ptr<Model> restore(ModelConfig cfg, std::vector<std::string> entity_labels,
                                        std::vector<std::string> relation_labels, EmbeddingTable<S> lexicon,
                                        const std::map<std::string, Matrix<S>>& tensors) {
    auto m = std::make_unique<Model>(cfg, std::move(entity_labels), std::move(relation_labels), std::move(lexicon));
    for (const auto& p : m->params_) {
      auto it = tensors.find(p->name);
      if (it == tensors.end()) throw Error(Errc::load, "checkpoint lacks tensor " + p->name);
      if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
        throw Error(Errc::load, "tensor " + p->name + " has shape " + std::to_string(it->second.rows()) + "x" +
                                    std::to_string(it->second.cols()) + ", model expects " +
                                    std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
      }
      p->value = it->second;
    }
    return m;
  }

 private:
  static std::string label_words(const std::string& label) {
    std::string out = label;
    for (auto& ch : out) {
      if (ch == '_') ch = ' ';
    }
    return out;
  }

  void index_vocabularies() {
    for (std::size_t i = 0; i < entity_labels_.size(); ++i) {
      if (!entity_index_.emplace(entity_labels_[i], static_cast<int>(i)).second) {
        throw Error(Errc::config, "duplicate entity label " + entity_labels_[i]);
      }
    }
    const auto& reserved = reserved_relation_keys();
    for (std::size_t i = 0; i < reserved.size(); ++i) relation_index_.emplace(reserved[i], static_cast<int>(i));
    for (std::size_t i = 0; i < relation_labels_.size(); ++i) {
      const int row = static_cast<int>(reserved.size() + 2 * i);
      if (!relation_index_.emplace(relation_labels_[i], row).second) {
        throw Error(Errc::config, "duplicate relation label " + relation_labels_[i]);
      }
      relation_index_.emplace(relation_labels_[i] + "^-1", row + 1);
    }
  }

  /// Rows of `table` by index; negative indices -1-j take the constant word
  /// embedding of `unknown[j]` (negated for inverse relation keys).
  Var<S> lookup_rows(Tape<S>& tape, Parameter<S>& table, std::vector<int> rows, const std::vector<std::string>& unknown,
                     bool relation_keys) const {
    auto t = tape.param(table);
    if (unknown.empty()) return ops::gather_rows(t, std::move(rows));
    Matrix<S> extra(static_cast<Eigen::Index>(unknown.size()), cfg_.word_dim);
    for (std::size_t j = 0; j < unknown.size(); ++j) {
      std::string key = unknown[j];
      S sign = S(1);
      if (relation_keys && key.size() > 3 && key.compare(key.size() - 3, 3, "^-1") == 0) {
        key.resize(key.size() - 3);
        sign = S(-1);
      }
      extra.row(static_cast<Eigen::Index>(j)) = sign * embed_label(label_words(key), lexicon_);
    }
    const int base = static_cast<int>(table.value.rows());
    for (auto& r : rows) {
      if (r < 0) r = base + (-1 - r);
    }
    return ops::gather_rows(ops::concat_rows<S>({t, tape.constant(std::move(extra))}), std::move(rows));
  }

  void bind_policy() {
    aux_ = &params_.at("embed.auxiliary");
    dummy_ = &params_.at("policy.dummy");
    w_ih_ = &params_.at("policy.lstm.w_ih");
    w_hh_ = &params_.at("policy.lstm.w_hh");
    lstm_bias_ = &params_.at("policy.lstm.bias");
    w1_ = &params_.at("policy.mlp.w1");
    b1_ = &params_.at("policy.mlp.b1");
    w2_ = &params_.at("policy.mlp.w2");
    b2_ = &params_.at("policy.mlp.b2");
  }

  ModelConfig cfg_;
  std::vector<std::string> entity_labels_;
  std::vector<std::string> relation_labels_;
  EmbeddingTable<S> lexicon_;
  std::vector<std::string> oov_;
  std::map<std::string, int> entity_index_;
  std::map<std::string, int> relation_index_;
  ParameterSet<S> params_;
  GatEncoder<S> gat_;
  QuestionEncoder<S> question_;
  QuestionClassifier<S> classifier_;
  Parameter<S>*aux_ = nullptr, *dummy_ = nullptr, *w_ih_ = nullptr, *w_hh_ = nullptr, *lstm_bias_ = nullptr;
  Parameter<S>*w1_ = nullptr, *b1_ = nullptr, *w2_ = nullptr, *b2_ = nullptr;
};

/// Sorted, lower-cased content labels and forward relation labels over a set
/// of graphs; the vocabularies a model is built with.
inline std::pair<std::vector<std::string>, std::vector<std::string>> collect_vocabularies(
    const std::vector<const SceneGraph*>& graphs) {
  std::set<std::string> ents, rels;
  for (const auto* sg : graphs) {
    for (const auto& e : sg->entities()) {
      if (!e.auxiliary()) ents.insert(to_lower(e.label));
    }
    for (const auto& r : sg->relations()) {
      if (r.is_inverse || r.is_noop) continue;
      const auto& reserved = reserved_relation_keys();
      if (std::find(reserved.begin(), reserved.end(), r.label) != reserved.end()) continue;
      rels.insert(r.label);
    }
  }
  return {std::vector<std::string>(ents.begin(), ents.end()), std::vector<std::string>(rels.begin(), rels.end())};
}

}  // namespace hopper
