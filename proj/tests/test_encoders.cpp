// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numeric>

#include "hopper/encoders/gat.hpp"
#include "hopper/encoders/question_encoder.hpp"
#include "hopper/numerics/gradcheck.hpp"
#include "support.hpp"

using namespace hopper;
using M = Matrix<double>;

namespace {

M random_matrix(Rng& rng, int r, int c) {
  M m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
  return m;
}

GatConfig small_gat() {
  GatConfig c;
  c.input_dim = 6;
  c.heads1 = 2;
  c.features1 = 3;
  c.heads2 = 2;
  c.output_dim = 6;
  return c;
}

QuestionEncoderConfig small_question() {
  QuestionEncoderConfig c;
  c.model_dim = 6;
  c.heads = 2;
  c.head_dim = 3;
  c.ffn_dim = 5;
  return c;
}

}  // namespace

TEST(Gat, SingleNodeAttendsToItself) {
  SceneGraph sg;
  sg.add_entity("a", EntityKind::object);
  auto closed = close_graph(sg);
  ParameterSet<double> ps;
  Rng rng(1);
  GatEncoder<double> enc(ps, small_gat(), rng);
  Tape<double> tape(false);
  std::vector<M> att;
  M x = random_matrix(rng, 1, 6);
  auto out = enc.encode(tape, tape.constant(x), gat_edges(closed), false, nullptr, &att);
  ASSERT_EQ(att.size(), 2u);
  EXPECT_TRUE(att[0].isOnes(1e-15));
  EXPECT_TRUE(att[1].isOnes(1e-15));
  // With one neighbour the output is the node's own transformed features.
  const auto& w1 = ps.at("gat.l1.weight").value;
  M h = (x * w1 + ps.at("gat.l1.bias").value).unaryExpr([](double v) { return v > 0 ? v : std::expm1(v); });
  M z2 = h * ps.at("gat.l2.weight").value;
  M expect = (z2.leftCols(6) + z2.rightCols(6)) / 2.0 + ps.at("gat.l2.bias").value;
  EXPECT_TRUE(out.value().isApprox(expect, 1e-12));
}

TEST(Gat, AttentionRowsSumToOne) {
  Rng rng(5);
  ParameterSet<double> ps;
  GatEncoder<double> enc(ps, small_gat(), rng);
  for (int trial = 0; trial < 50; ++trial) {
    auto sg = close_graph(hopper::testing::random_open_graph(rng, 5, 7));
    auto edges = gat_edges(sg);
    Tape<double> tape(false);
    std::vector<M> att;
    enc.encode(tape, tape.constant(random_matrix(rng, 5, 6)), edges, false, nullptr, &att);
    for (const auto& a : att) {
      M sums = M::Zero(5, a.cols());
      for (std::size_t k = 0; k < edges.dst.size(); ++k) sums.row(edges.dst[k]) += a.row(static_cast<Eigen::Index>(k));
      ASSERT_TRUE(sums.isOnes(1e-12));
    }
  }
}

TEST(Gat, PermutationEquivariance) {
  Rng rng(9);
  ParameterSet<double> ps;
  GatEncoder<double> enc(ps, small_gat(), rng);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 6;
    auto sg = hopper::testing::random_open_graph(rng, n, 9);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    SceneGraph permuted;
    for (const auto& r : sg.relations()) permuted.add_relation(r.label);
    std::vector<int> inv(n);
    for (int i = 0; i < n; ++i) inv[perm[i]] = i;
    for (int i = 0; i < n; ++i) permuted.add_entity(sg.entity(inv[i]).label, EntityKind::object);
    for (const auto& t : sg.triples()) permuted.add_triple(perm[t.subject], t.relation, perm[t.object]);
    M x = random_matrix(rng, n, 6);
    M px(n, 6);
    for (int i = 0; i < n; ++i) px.row(perm[i]) = x.row(i);
    M a = gat_encode(enc, close_graph(sg), x);
    M b = gat_encode(enc, close_graph(permuted), px);
    for (int i = 0; i < n; ++i) ASSERT_TRUE(a.row(i).isApprox(b.row(perm[i]), 1e-12));
  }
}

TEST(Gat, ReceptiveFieldIsTwoHops) {
  // chain 0-1-2-3, with or without the edge 3->4; node 0 is 3+ hops away.
  ParameterSet<double> ps;
  Rng rng(4);
  GatEncoder<double> enc(ps, small_gat(), rng);
  auto chain = [](bool extra) {
    SceneGraph sg;
    const int r = sg.add_relation("next");
    const int s = sg.add_relation("other");
    for (int i = 0; i < 5; ++i) sg.add_entity("n", EntityKind::object);
    for (int i = 0; i < 3; ++i) sg.add_triple(i, r, i + 1);
    if (extra) sg.add_triple(3, r, 4);
    sg.add_triple(0, s, 0);
    return close_graph(sg);
  };
  M x = random_matrix(rng, 5, 6);
  M a = gat_encode(enc, chain(false), x);
  M b = gat_encode(enc, chain(true), x);
  EXPECT_EQ(a.row(0), b.row(0));
  EXPECT_NE(a.row(3), b.row(3));
}

TEST(Gat, WidthMismatchIsInvalidShape) {
  ParameterSet<double> ps;
  Rng rng(1);
  GatEncoder<double> enc(ps, small_gat(), rng);
  SceneGraph sg;
  sg.add_entity("a", EntityKind::object);
  try {
    gat_encode(enc, close_graph(sg), M(M::Zero(1, 5)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_shape);
  }
}

TEST(Gat, AuxiliaryNodesAreExcluded) {
  Rng rng(2);
  auto sg = hopper::testing::random_attached_graph(rng, 4, 5, QuestionType::binary);
  auto e = gat_edges(sg);
  EXPECT_EQ(e.nodes, 4);
  for (std::size_t k = 0; k < e.src.size(); ++k) {
    EXPECT_LT(e.src[k], 4);
    EXPECT_LT(e.dst[k], 4);
  }
}

TEST(Gat, GradientsMatchFiniteDifferences) {
  Rng rng(11);
  ParameterSet<double> ps;
  GatEncoder<double> enc(ps, small_gat(), rng);
  // non-zero biases so their gradients are exercised away from symmetric points
  for (auto& p : ps) p->value += random_matrix(rng, static_cast<int>(p->value.rows()), static_cast<int>(p->value.cols())) * 0.1;
  auto& x = ps.add("input", "x", random_matrix(rng, 4, 6));
  auto sg = close_graph(hopper::testing::random_open_graph(rng, 4, 5));
  auto edges = gat_edges(sg);
  M w = random_matrix(rng, 4, 6);
  auto report = finite_diff_check<double>(
      [&](Tape<double>& t) { return ops::weighted_sum(enc.encode(t, t.param(x), edges, false, nullptr), w); },
      ps.trainable());
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst.tensor;
}

TEST(QuestionEncoder, ShapeDeterminismAndOrderSensitivity) {
  Rng rng(3);
  ParameterSet<double> ps;
  QuestionEncoder<double> enc(ps, QuestionEncoderConfig{}, rng);
  std::vector<std::string> words{"what", "is", "on", "the", "table"};
  M vecs = random_matrix(rng, 5, 300);
  EmbeddingTable<double> table(words, vecs);
  auto q = encode_question(enc, words, table);
  EXPECT_EQ(q.rows(), 1);
  EXPECT_EQ(q.cols(), 300);
  EXPECT_EQ(encode_question(enc, words, table), q);
  std::vector<std::string> rev(words.rbegin(), words.rend());
  EXPECT_FALSE(encode_question(enc, rev, table).isApprox(q, 1e-9));
  EXPECT_THROW(encode_question(enc, {}, table), Error);
}

TEST(QuestionEncoder, AttentionRowsSumToOne) {
  Rng rng(6);
  ParameterSet<double> ps;
  QuestionEncoder<double> enc(ps, small_question(), rng);
  Tape<double> tape(false);
  std::vector<M> att;
  enc.encode(tape, random_matrix(rng, 4, 6), false, nullptr, &att);
  ASSERT_EQ(att.size(), 4u);
  for (const auto& a : att) EXPECT_TRUE(a.rowwise().sum().isOnes(1e-12));
}

TEST(QuestionEncoder, DropoutOnlyWhenTraining) {
  Rng rng(6);
  ParameterSet<double> ps;
  QuestionEncoder<double> enc(ps, small_question(), rng);
  M tokens = random_matrix(rng, 3, 6);
  Tape<double> t1(false), t2(false), t3(false);
  Rng d1(1), d2(1);
  auto a = enc.encode(t1, tokens, true, &d1).value();
  auto b = enc.encode(t2, tokens, true, &d2).value();
  auto c = enc.encode(t3, tokens, false, nullptr).value();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(QuestionEncoder, GradientsMatchFiniteDifferences) {
  Rng rng(12);
  ParameterSet<double> ps;
  QuestionEncoder<double> enc(ps, small_question(), rng);
  for (auto& p : ps) p->value += random_matrix(rng, static_cast<int>(p->value.rows()), static_cast<int>(p->value.cols())) * 0.1;
  M tokens = random_matrix(rng, 3, 6);
  M w = random_matrix(rng, 1, 6);
  auto report = finite_diff_check<double>(
      [&](Tape<double>& t) { return ops::weighted_sum(enc.encode(t, tokens, false, nullptr), w); }, ps.trainable());
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst.tensor;
}
