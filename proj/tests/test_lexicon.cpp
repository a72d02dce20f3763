// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "hopper/lexicon/classifier.hpp"
#include "hopper/lexicon/tokenize.hpp"
#include "hopper/lexicon/word_vectors.hpp"

using namespace hopper;
using M = Matrix<double>;

namespace {

EmbeddingTable<double> random_table(const std::vector<std::string>& words, int dim, std::uint64_t seed) {
  Rng rng(seed);
  M m(static_cast<Eigen::Index>(words.size()), dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
  return EmbeddingTable<double>(words, m);
}

}  // namespace

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("What is it?"), (std::vector<std::string>{"what", "is", "it", "?"}));
  EXPECT_TRUE(tokenize("").empty());
  const auto t = tokenize("Is the color of the number the same as that of the wristband?");
  EXPECT_EQ(t.size(), 14u);
  EXPECT_EQ(t.back(), "?");
  EXPECT_EQ(tokenize("a,b  c"), (std::vector<std::string>{"a", ",", "b", "c"}));
}

TEST(WordVectors, ParsesPlainFormat) {
  std::istringstream in("a 1.0 2.0 3.0\n");
  auto t = load_word_vectors<double>(in, 3);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.lookup("a"), (M(1, 3) << 1, 2, 3).finished());
}

TEST(WordVectors, WrongWidthNamesTheLine) {
  std::istringstream in("a 1.0 2.0 3.0\nb 1.0\n");
  try {
    load_word_vectors<double>(in, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::parse);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
}

TEST(WordVectors, InfersWidthAndSkipsHeader) {
  std::istringstream in("2 2\nx 1 0\ny 0 1\n");
  auto t = load_word_vectors<double>(in);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.dim(), 2);
  EXPECT_EQ(t.fallback(), (M(1, 2) << 0.5, 0.5).finished());
}

TEST(EmbedLabel, SingleMultiAndUnknown) {
  EmbeddingTable<double> t({"a", "b"}, (M(2, 2) << 1, 0, 0, 1).finished());
  EXPECT_EQ(embed_label("a", t), (M(1, 2) << 1, 0).finished());
  EXPECT_EQ(embed_label("a b", t), (M(1, 2) << 0.5, 0.5).finished());
  EXPECT_EQ(embed_label("a b", t), embed_label("b a", t));
  std::vector<std::string> oov;
  EXPECT_EQ(embed_label("zzzunknownzzz", t, &oov), t.fallback());
  EXPECT_EQ(oov, (std::vector<std::string>{"zzzunknownzzz"}));
  EXPECT_THROW(embed_label("", t), Error);
}

TEST(EmbedLabel, SubsetKeepsFallback) {
  auto t = random_table({"a", "b", "c"}, 4, 1);
  auto s = t.subset({"b", "zz"});
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s.lookup("b"), t.lookup("b"));
  EXPECT_EQ(s.fallback(), t.fallback());
}

namespace {

std::vector<std::pair<std::string, QuestionType>> templated_corpus(std::uint64_t seed, int n) {
  const std::vector<std::string> query_stems{"what is", "which", "how many", "what color is", "where is"};
  const std::vector<std::string> binary_stems{"is there", "do", "does", "are there", "is the"};
  const std::vector<std::string> nouns{"cup", "table", "man", "dog", "car", "pepper", "vegetable", "wristband"};
  const std::vector<std::string> rels{"on", "near", "behind", "under"};
  Rng rng(seed);
  std::vector<std::pair<std::string, QuestionType>> out;
  for (int i = 0; i < n; ++i) {
    const bool binary = i % 2 == 1;
    const auto& stems = binary ? binary_stems : query_stems;
    std::string q = stems[rng.below(stems.size())] + " the " + nouns[rng.below(nouns.size())] + " " +
                    rels[rng.below(rels.size())] + " the " + nouns[rng.below(nouns.size())] + "?";
    out.emplace_back(q, binary ? QuestionType::binary : QuestionType::query);
  }
  return out;
}

std::vector<std::string> corpus_words() {
  return {"what", "is", "which", "how", "many", "color", "where", "there", "do", "does", "are", "the", "cup",
          "table", "man", "dog", "car", "pepper", "vegetable", "wristband", "on", "near", "behind", "under", "?",
          "name", "of", "appliance", "that", "not", "small", "both", "and", "to", "right", "ice", "cube", "have",
          "green"};
}

}  // namespace

TEST(Classifier, LearnsTemplatedCorpusPerfectly) {
  auto table = random_table(corpus_words(), 300, 5);
  ParameterSet<double> ps;
  Rng rng(1);
  QuestionClassifier<double> clf(ps, 300, 128, rng);
  auto train = templated_corpus(1, 400);
  const double acc = train_classifier(clf, train, table);
  EXPECT_DOUBLE_EQ(acc, 1.0);
  int correct = 0;
  auto test = templated_corpus(2, 400);
  for (const auto& [q, t] : test) correct += classify_question(clf, tokenize(q), table) == t;
  EXPECT_EQ(correct, 400);
  EXPECT_EQ(classify_question(clf, tokenize("What is the name of the appliance that is not small?"), table),
            QuestionType::query);
  EXPECT_EQ(classify_question(clf,
                              tokenize("Do both the pepper and the vegetable to the right of the ice cube have "
                                       "green color?"),
                              table),
            QuestionType::binary);
}

TEST(Classifier, SameSeedSameWeights) {
  auto table = random_table(corpus_words(), 16, 5);
  auto run = [&]() {
    ParameterSet<double> ps;
    Rng rng(3);
    QuestionClassifier<double> clf(ps, 16, 8, rng);
    ClassifierTrainOptions opts;
    opts.epochs = 3;
    train_classifier(clf, templated_corpus(1, 64), table, opts);
    std::vector<M> w;
    for (auto* p : clf.parameters()) w.push_back(p->value);
    return w;
  };
  EXPECT_EQ(run(), run());
}

TEST(Classifier, EmptyQuestionIsAnError) {
  auto table = random_table({"a"}, 4, 1);
  ParameterSet<double> ps;
  Rng rng(1);
  QuestionClassifier<double> clf(ps, 4, 3, rng);
  try {
    classify_question(clf, {}, table);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::classification);
  }
}
