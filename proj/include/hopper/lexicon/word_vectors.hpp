// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hopper/lexicon/tokenize.hpp"
#include "hopper/numerics/tensor.hpp"

namespace hopper {

/// Frozen word -> vector table. Lookups that miss fall back to the mean of
/// all loaded vectors.
template <typename S>
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  EmbeddingTable(std::vector<std::string> words, Matrix<S> vectors) : words_(std::move(words)), vectors_(std::move(vectors)) {
    if (static_cast<Eigen::Index>(words_.size()) != vectors_.rows()) {
      throw Error(Errc::invalid_shape, "embedding table: word count and vector rows differ");
    }
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<int>(i));
    fallback_ = vectors_.rows() > 0 ? Matrix<S>(vectors_.colwise().mean()) : Matrix<S>::Zero(1, vectors_.cols());
  }

  int dim() const { return static_cast<int>(vectors_.cols()); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const Matrix<S>& vectors() const { return vectors_; }
  const Matrix<S>& fallback() const { return fallback_; }

  bool contains(const std::string& w) const { return index_.count(w) != 0; }

  /// 1 x d vector for `w`, or the fallback.
  Matrix<S> lookup(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? fallback_ : Matrix<S>(vectors_.row(it->second));
  }

  /// Restricts the table to `keep` (plus nothing else) while preserving the
  /// fallback computed over the full table.
  EmbeddingTable subset(const std::vector<std::string>& keep) const {
    std::vector<std::string> words;
    std::vector<int> rows;
    for (const auto& w : keep) {
      auto it = index_.find(w);
      if (it != index_.end()) {
        words.push_back(w);
        rows.push_back(it->second);
      }
    }
    Matrix<S> m(static_cast<Eigen::Index>(rows.size()), vectors_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = vectors_.row(rows[i]);
    EmbeddingTable out(std::move(words), std::move(m));
    out.fallback_ = fallback_;
    return out;
  }

  void set_fallback(Matrix<S> f) { fallback_ = std::move(f); }

 private:
  std::vector<std::string> words_;
  Matrix<S> vectors_;
  Matrix<S> fallback_;
  std::unordered_map<std::string, int> index_;
};

/// Reads the plain word-vector text format: one word per line followed by
/// `dim` reals. `dim == 0` takes the width from the first line. A leading
/// "<count> <dim>" header line is accepted and skipped.
template <typename S>
EmbeddingTable<S> load_word_vectors(std::istream& in, int dim = 0, const std::string& origin = "<stream>") {
  std::vector<std::string> words;
  std::vector<std::vector<S>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<S> vals;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        vals.push_back(static_cast<S>(v));
      } catch (const std::logic_error&) {
        throw Error(Errc::parse, origin + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
      }
    }
    if (lineno == 1 && vals.size() == 1 && word.find_first_not_of("0123456789") == std::string::npos) {
      continue;  // word2vec-style header
    }
    if (dim == 0) dim = static_cast<int>(vals.size());
    if (static_cast<int>(vals.size()) != dim || dim == 0) {
      throw Error(Errc::parse, origin + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                                   " values for '" + word + "', got " + std::to_string(vals.size()));
    }
    words.push_back(std::move(word));
    rows.push_back(std::move(vals));
  }
  Matrix<S> m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  return EmbeddingTable<S>(std::move(words), std::move(m));
}

template <typename S>
EmbeddingTable<S> load_word_vectors(const std::string& path, int dim = 0) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open word vectors " + path);
  return load_word_vectors<S>(in, dim, path);
}

/// Initial embedding of an entity or relation type label: the word vector
/// for single words, the mean of the known word vectors for multi-word
/// labels, and the table fallback when no word is known. Fallbacks are
/// recorded in `oov` when given.
template <typename S>
Matrix<S> embed_label(const std::string& label, const EmbeddingTable<S>& table, std::vector<std::string>* oov = nullptr) {
  if (label.empty()) throw Error(Errc::lookup, "cannot embed an empty label");
  const auto lowered = to_lower(label);
  if (table.contains(lowered)) return table.lookup(lowered);
  std::istringstream ws(lowered);
  std::string w;
  Matrix<S> acc = Matrix<S>::Zero(1, table.dim());
  int known = 0;
  while (ws >> w) {
    if (table.contains(w)) {
      acc += table.lookup(w);
      ++known;
    }
  }
  if (known == 0) {
    if (oov != nullptr) oov->push_back(label);
    return table.fallback();
  }
  return acc / static_cast<S>(known);
}

}  // namespace hopper
