// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "hopper/numerics/ops.hpp"
#include "hopper/scenegraph/graph.hpp"

namespace hopper {

struct GatConfig {
  int input_dim = 300;
  int heads1 = 8;
  int features1 = 8;
  int heads2 = 8;
  int output_dim = 300;
  double attention_dropout = 0.1;
  double layer_dropout = 0.1;
  double leaky_slope = 0.2;
};

/// Directed message edges over content nodes: row k sends from src[k] to
/// dst[k]. Every node receives from itself.
struct GatEdges {
  int nodes = 0;
  std::vector<int> src;
  std::vector<int> dst;
};

/// In-neighbourhoods of the content nodes of `sg` under its triples, one
/// edge per distinct (source, target) pair, plus a self edge per node.
/// Auxiliary nodes and their edges are left out.
inline GatEdges gat_edges(const SceneGraph& sg) {
  const int n = static_cast<int>(sg.content_count());
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(sg.triples().size() + static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pairs.emplace_back(i, i);
  for (const auto& t : sg.triples()) {
    if (t.subject < n && t.object < n) pairs.emplace_back(t.object, t.subject);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  GatEdges e;
  e.nodes = n;
  for (const auto& [dst, src] : pairs) {
    e.dst.push_back(dst);
    e.src.push_back(src);
  }
  return e;
}

/// One multi-head additive-attention layer.
template <typename S>
struct GatLayer {
  Parameter<S>* weight = nullptr;  // in x heads*f
  Parameter<S>* att_src = nullptr;  // 1 x heads*f
  Parameter<S>* att_dst = nullptr;  // 1 x heads*f
  Parameter<S>* bias = nullptr;
  int heads = 1;
  bool concat = true;

  static GatLayer create(ParameterSet<S>& ps, const std::string& prefix, int in, int heads, int f, bool concat,
                         Rng& rng) {
    GatLayer l;
    l.heads = heads;
    l.concat = concat;
    l.weight = &ps.add("gat", prefix + ".weight", glorot_uniform<S>(in, heads * f, rng));
    l.att_src = &ps.add("gat", prefix + ".att_src", glorot_uniform<S>(1, heads * f, rng));
    l.att_dst = &ps.add("gat", prefix + ".att_dst", glorot_uniform<S>(1, heads * f, rng));
    l.bias = &ps.add("gat", prefix + ".bias", Matrix<S>::Zero(1, concat ? heads * f : f));
    return l;
  }

  static GatLayer bind(ParameterSet<S>& ps, const std::string& prefix, int heads, bool concat) {
    GatLayer l;
    l.heads = heads;
    l.concat = concat;
    l.weight = &ps.at(prefix + ".weight");
    l.att_src = &ps.at(prefix + ".att_src");
    l.att_dst = &ps.at(prefix + ".att_dst");
    l.bias = &ps.at(prefix + ".bias");
    return l;
  }

  /// Returns the pre-activation output; `attention` (edges x heads) receives
  /// the coefficients before dropout when given.
  Var<S> forward(Tape<S>& tape, Var<S> x, const GatEdges& edges, const GatConfig& cfg, bool training, Rng* rng,
                 Matrix<S>* attention = nullptr) const {
    if (x.cols() != weight->value.rows()) {
      throw Error(Errc::invalid_shape, "gat layer expects width " + std::to_string(weight->value.rows()) + ", got " +
                                           std::to_string(x.cols()));
    }
    x = ops::dropout(x, cfg.layer_dropout, training, rng);
    auto z = ops::matmul(x, tape.param(*weight));
    auto s_src = ops::head_dot(z, tape.param(*att_src), heads);
    auto s_dst = ops::head_dot(z, tape.param(*att_dst), heads);
    auto e = ops::leaky_relu(ops::add(ops::gather_rows(s_dst, edges.dst), ops::gather_rows(s_src, edges.src)),
                             static_cast<S>(cfg.leaky_slope));
    auto alpha = ops::segment_softmax(e, edges.dst, edges.nodes);
    if (attention != nullptr) *attention = alpha.value();
    alpha = ops::dropout(alpha, cfg.attention_dropout, training, rng);
    auto msg = ops::head_scale(ops::gather_rows(z, edges.src), alpha);
    auto out = ops::segment_sum(msg, edges.dst, edges.nodes);
    if (!concat) out = ops::head_mean(out, heads);
    return ops::add_row(out, tape.param(*bias));
  }
};

/// Two-layer graph attention encoder: concatenated heads with ELU, then
/// head-averaged output of width `output_dim`.
template <typename S>
class GatEncoder {
 public:
  GatEncoder() = default;

  GatEncoder(ParameterSet<S>& ps, GatConfig cfg, Rng& rng) : cfg_(cfg) {
    l1_ = GatLayer<S>::create(ps, "gat.l1", cfg.input_dim, cfg.heads1, cfg.features1, true, rng);
    l2_ = GatLayer<S>::create(ps, "gat.l2", cfg.heads1 * cfg.features1, cfg.heads2, cfg.output_dim, false, rng);
  }

  static GatEncoder bind(ParameterSet<S>& ps, GatConfig cfg) {
    GatEncoder g;
    g.cfg_ = cfg;
    g.l1_ = GatLayer<S>::bind(ps, "gat.l1", cfg.heads1, true);
    g.l2_ = GatLayer<S>::bind(ps, "gat.l2", cfg.heads2, false);
    return g;
  }

  const GatConfig& config() const { return cfg_; }

  /// N x input_dim node features -> N x output_dim contextual embeddings.
  /// `attention`, when given, receives the per-layer coefficients.
  Var<S> encode(Tape<S>& tape, Var<S> nodes, const GatEdges& edges, bool training, Rng* rng,
                std::vector<Matrix<S>>* attention = nullptr) const {
    if (nodes.rows() != edges.nodes) {
      throw Error(Errc::invalid_shape, "gat: " + std::to_string(nodes.rows()) + " feature rows for " +
                                           std::to_string(edges.nodes) + " nodes");
    }
    Matrix<S> a1, a2;
    auto h = ops::elu(l1_.forward(tape, nodes, edges, cfg_, training, rng, attention ? &a1 : nullptr));
    auto out = l2_.forward(tape, h, edges, cfg_, training, rng, attention ? &a2 : nullptr);
    if (attention != nullptr) *attention = {std::move(a1), std::move(a2)};
    return out;
  }

 private:
  GatConfig cfg_;
  GatLayer<S> l1_;
  GatLayer<S> l2_;
};

/// Convenience wrapper matching the module contract: contextual node vectors
/// for the content nodes of `sg`, computed without recording gradients.
template <typename S>
Matrix<S> gat_encode(const GatEncoder<S>& enc, const SceneGraph& sg, const Matrix<S>& base, bool training = false,
                     Rng* rng = nullptr) {
  Tape<S> tape(false);
  return enc.encode(tape, tape.constant(base), gat_edges(sg), training, rng).value();
}

}  // namespace hopper
