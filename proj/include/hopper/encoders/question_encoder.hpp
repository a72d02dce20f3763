// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hopper/lexicon/word_vectors.hpp"
#include "hopper/numerics/ops.hpp"

namespace hopper {

struct QuestionEncoderConfig {
  int model_dim = 300;
  int layers = 2;
  int heads = 4;
  int head_dim = 64;
  int ffn_dim = 300;
  double dropout = 0.1;
};

/// Fixed sinusoidal position codes, n x d.
template <typename S>
Matrix<S> sinusoidal_positions(int n, int d) {
  Matrix<S> pe(n, d);
  for (int pos = 0; pos < n; ++pos) {
    for (int i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d);
      pe(pos, i) = static_cast<S>(i % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq));
    }
  }
  return pe;
}

/// Post-norm self-attention encoder with mean pooling over positions.
template <typename S>
class QuestionEncoder {
 public:
  QuestionEncoder() = default;

  QuestionEncoder(ParameterSet<S>& ps, QuestionEncoderConfig cfg, Rng& rng) : cfg_(cfg) {
    const int d = cfg.model_dim;
    const int hd = cfg.heads * cfg.head_dim;
    for (int l = 0; l < cfg.layers; ++l) {
      const auto p = prefix(l);
      ps.add("question", p + ".wq", glorot_uniform<S>(d, hd, rng));
      ps.add("question", p + ".wk", glorot_uniform<S>(d, hd, rng));
      ps.add("question", p + ".wv", glorot_uniform<S>(d, hd, rng));
      ps.add("question", p + ".wo", glorot_uniform<S>(hd, d, rng));
      ps.add("question", p + ".bo", Matrix<S>::Zero(1, d));
      ps.add("question", p + ".ln1.gain", Matrix<S>::Ones(1, d));
      ps.add("question", p + ".ln1.bias", Matrix<S>::Zero(1, d));
      ps.add("question", p + ".ff1", glorot_uniform<S>(d, cfg.ffn_dim, rng));
      ps.add("question", p + ".ff1.bias", Matrix<S>::Zero(1, cfg.ffn_dim));
      ps.add("question", p + ".ff2", glorot_uniform<S>(cfg.ffn_dim, d, rng));
      ps.add("question", p + ".ff2.bias", Matrix<S>::Zero(1, d));
      ps.add("question", p + ".ln2.gain", Matrix<S>::Ones(1, d));
      ps.add("question", p + ".ln2.bias", Matrix<S>::Zero(1, d));
    }
    bind_layers(ps);
  }

  static QuestionEncoder bind(ParameterSet<S>& ps, QuestionEncoderConfig cfg) {
    QuestionEncoder q;
    q.cfg_ = cfg;
    q.bind_layers(ps);
    return q;
  }

  const QuestionEncoderConfig& config() const { return cfg_; }

  /// n x d token vectors -> 1 x d question vector. `attention`, when given,
  /// receives every head's n x n probability matrix (before dropout).
  Var<S> encode(Tape<S>& tape, const Matrix<S>& tokens, bool training, Rng* rng,
                std::vector<Matrix<S>>* attention = nullptr) const {
    if (tokens.rows() == 0) throw Error(Errc::invalid_shape, "question encoder needs at least one token");
    if (tokens.cols() != cfg_.model_dim) {
      throw Error(Errc::invalid_shape, "question encoder expects width " + std::to_string(cfg_.model_dim) +
                                           ", got " + std::to_string(tokens.cols()));
    }
    const int n = static_cast<int>(tokens.rows());
    Matrix<S> in = tokens + sinusoidal_positions<S>(n, cfg_.model_dim);
    auto x = ops::dropout(tape.constant(std::move(in)), cfg_.dropout, training, rng);
    const S scale = S(1) / std::sqrt(static_cast<S>(cfg_.head_dim));
    for (const auto& L : layers_) {
      auto q = ops::matmul(x, tape.param(*L.wq));
      auto k = ops::matmul(x, tape.param(*L.wk));
      auto v = ops::matmul(x, tape.param(*L.wv));
      std::vector<Var<S>> heads;
      for (int h = 0; h < cfg_.heads; ++h) {
        const Eigen::Index off = static_cast<Eigen::Index>(h) * cfg_.head_dim;
        auto qh = ops::slice_cols(q, off, cfg_.head_dim);
        auto kh = ops::slice_cols(k, off, cfg_.head_dim);
        auto vh = ops::slice_cols(v, off, cfg_.head_dim);
        auto p = ops::row_softmax(ops::scale(ops::matmul_nt(qh, kh), scale));
        if (attention != nullptr) attention->push_back(p.value());
        p = ops::dropout(p, cfg_.dropout, training, rng);
        heads.push_back(ops::matmul(p, vh));
      }
      auto att = ops::linear(ops::concat_cols(heads), tape.param(*L.wo), tape.param(*L.bo));
      att = ops::dropout(att, cfg_.dropout, training, rng);
      x = ops::layer_norm(ops::add(x, att), tape.param(*L.ln1_gain), tape.param(*L.ln1_bias));
      auto ff = ops::relu(ops::linear(x, tape.param(*L.ff1), tape.param(*L.ff1_bias)));
      ff = ops::linear(ff, tape.param(*L.ff2), tape.param(*L.ff2_bias));
      ff = ops::dropout(ff, cfg_.dropout, training, rng);
      x = ops::layer_norm(ops::add(x, ff), tape.param(*L.ln2_gain), tape.param(*L.ln2_bias));
    }
    return ops::mean_rows(x);
  }

 private:
  struct Layer {
    Parameter<S>*wq, *wk, *wv, *wo, *bo, *ln1_gain, *ln1_bias, *ff1, *ff1_bias, *ff2, *ff2_bias, *ln2_gain, *ln2_bias;
  };

  static std::string prefix(int l) { return "question.l" + std::to_string(l + 1); }

  void bind_layers(ParameterSet<S>& ps) {
    layers_.clear();
    for (int l = 0; l < cfg_.layers; ++l) {
      const auto p = prefix(l);
      layers_.push_back(Layer{&ps.at(p + ".wq"), &ps.at(p + ".wk"), &ps.at(p + ".wv"), &ps.at(p + ".wo"),
                              &ps.at(p + ".bo"), &ps.at(p + ".ln1.gain"), &ps.at(p + ".ln1.bias"),
                              &ps.at(p + ".ff1"), &ps.at(p + ".ff1.bias"), &ps.at(p + ".ff2"),
                              &ps.at(p + ".ff2.bias"), &ps.at(p + ".ln2.gain"), &ps.at(p + ".ln2.bias")});
    }
  }

  QuestionEncoderConfig cfg_;
  std::vector<Layer> layers_;
};

/// Token vectors for a tokenized question (unknown tokens use the fallback).
template <typename S>
Matrix<S> token_matrix(const std::vector<std::string>& tokens, const EmbeddingTable<S>& table) {
  if (tokens.empty()) throw Error(Errc::invalid_shape, "empty question");
  Matrix<S> m(static_cast<Eigen::Index>(tokens.size()), table.dim());
  for (std::size_t i = 0; i < tokens.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = table.lookup(tokens[i]);
  return m;
}

/// Module-level entry: question vector without recording gradients.
template <typename S>
Matrix<S> encode_question(const QuestionEncoder<S>& enc, const std::vector<std::string>& tokens,
                          const EmbeddingTable<S>& table, bool training = false, Rng* rng = nullptr) {
  Tape<S> tape(false);
  return enc.encode(tape, token_matrix(tokens, table), training, rng).value();
}

}  // namespace hopper
