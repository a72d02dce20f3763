// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "hopper/agent/model.hpp"
#include "hopper/numerics/adam.hpp"

namespace hopper {

/// Optimiser-side state that a resumed run needs besides the weights.
template <typename S>
struct TrainerState {
  double baseline = 0;
  std::uint64_t entropy_step = 0;
  int epoch = 0;
  AdamState<S> adam;
  std::string rng_state;
};

template <typename S>
struct LoadedCheckpoint {
  std::unique_ptr<Model<S>> model;
  TrainerState<S> state;
  nlohmann::json extra;
};

namespace checkpoint_detail {

inline constexpr char magic[8] = {'H', 'O', 'P', 'P', 'E', 'R', 'C', 'K'};
inline constexpr std::uint32_t version = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error(Errc::load, "truncated checkpoint reading " + what);
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const std::string& what) {
  const auto n = get<std::uint64_t>(is, what);
  if (n > (std::uint64_t{1} << 32)) throw Error(Errc::load, "implausible string length reading " + what);
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw Error(Errc::load, "truncated checkpoint reading " + what);
  return s;
}

template <typename S>
void put_matrix(std::ostream& os, const Matrix<S>& m) {
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(S) * m.size()));
}

template <typename S>
Matrix<S> get_matrix(std::istream& is, const std::string& what) {
  const auto r = get<std::uint64_t>(is, what);
  const auto c = get<std::uint64_t>(is, what);
  if (r > (1u << 24) || c > (1u << 24)) throw Error(Errc::load, "implausible shape for " + what);
  Matrix<S> m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(S) * m.size()))) {
    throw Error(Errc::load, "truncated data for tensor " + what);
  }
  return m;
}

}  // namespace checkpoint_detail

/// Binary layout: magic "HOPPERCK", u32 version, u32 scalar bytes, a JSON
/// header (config, vocabularies, trainer state), then tensors as
/// (name, rows, cols, data, has-moments, [adam m, adam v]). The lexicon rides
/// along as two extra tensors.
template <typename S>
void write_checkpoint(std::ostream& os, const Model<S>& model, const TrainerState<S>& state,
                      const nlohmann::json& extra = nlohmann::json::object()) {
  using namespace checkpoint_detail;
  os.write(magic, sizeof(magic));
  put<std::uint32_t>(os, version);
  put<std::uint32_t>(os, sizeof(S));
  nlohmann::json header{{"config", model.config()},
                        {"entity_labels", model.entity_labels()},
                        {"relation_labels", model.relation_labels()},
                        {"lexicon_words", model.lexicon().words()},
                        {"baseline", state.baseline},
                        {"entropy_step", state.entropy_step},
                        {"epoch", state.epoch},
                        {"adam_step", state.adam.step},
                        {"adam",
                         {{"learning_rate", state.adam.config.learning_rate},
                          {"beta1", state.adam.config.beta1},
                          {"beta2", state.adam.config.beta2},
                          {"epsilon", state.adam.config.epsilon}}},
                        {"rng_state", state.rng_state},
                        {"extra", extra}};
  put_string(os, header.dump());

  const auto& ps = model.params();
  put<std::uint64_t>(os, ps.size() + 2);
  std::size_t trainable_index = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& p = ps[i];
    put_string(os, p.name);
    put_matrix(os, p.value);
    const Matrix<S>* m = nullptr;
    const Matrix<S>* v = nullptr;
    if (p.trainable) {
      if (trainable_index < state.adam.first.size() && state.adam.first[trainable_index].size() != 0) {
        m = &state.adam.first[trainable_index];
        v = &state.adam.second[trainable_index];
      }
      ++trainable_index;
    }
    put<std::uint8_t>(os, m != nullptr ? 1 : 0);
    if (m != nullptr) {
      put_matrix(os, *m);
      put_matrix(os, *v);
    }
  }
  put_string(os, "lexicon.vectors");
  put_matrix(os, model.lexicon().vectors());
  put<std::uint8_t>(os, 0);
  put_string(os, "lexicon.fallback");
  put_matrix(os, model.lexicon().fallback());
  put<std::uint8_t>(os, 0);
}

/// Writes to a sibling temporary and renames it into place, so an interrupted
/// save never clobbers the previous checkpoint.
template <typename S>
void save_checkpoint(const std::filesystem::path& path, const Model<S>& model, const TrainerState<S>& state,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + tmp.string());
    write_checkpoint(out, model, state, extra);
    out.flush();
    if (!out) throw Error(Errc::io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Scalar width recorded in a checkpoint (4 or 8).
inline std::uint32_t checkpoint_scalar_size(const std::filesystem::path& path) {
  using namespace checkpoint_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open checkpoint " + path.string());
  char m[8];
  if (!in.read(m, 8) || std::memcmp(m, magic, 8) != 0) throw Error(Errc::load, path.string() + " is not a checkpoint");
  const auto ver = get<std::uint32_t>(in, "version");
  if (ver != version) throw Error(Errc::load, "unsupported checkpoint version " + std::to_string(ver));
  return get<std::uint32_t>(in, "scalar size");
}

template <typename S>
LoadedCheckpoint<S> read_checkpoint(std::istream& in) {
  using namespace checkpoint_detail;
  char m[8];
  if (!in.read(m, 8) || std::memcmp(m, magic, 8) != 0) throw Error(Errc::load, "not a checkpoint (bad magic)");
  const auto ver = get<std::uint32_t>(in, "version");
  if (ver != version) throw Error(Errc::load, "unsupported checkpoint version " + std::to_string(ver));
  const auto width = get<std::uint32_t>(in, "scalar size");
  if (width != sizeof(S)) {
    throw Error(Errc::load, "checkpoint stores " + std::to_string(width) + "-byte scalars, reader expects " +
                                std::to_string(sizeof(S)));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(get_string(in, "header"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::load, std::string("corrupt checkpoint header: ") + e.what());
  }

  std::map<std::string, Matrix<S>> tensors;
  std::map<std::string, std::pair<Matrix<S>, Matrix<S>>> moments;
  const auto count = get<std::uint64_t>(in, "tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name = get_string(in, "tensor name");
    tensors[name] = get_matrix<S>(in, name);
    if (get<std::uint8_t>(in, name) != 0) {
      auto mm = get_matrix<S>(in, name + " (adam m)");
      auto vv = get_matrix<S>(in, name + " (adam v)");
      moments[name] = {std::move(mm), std::move(vv)};
    }
  }

  LoadedCheckpoint<S> out;
  try {
    auto words = header.at("lexicon_words").get<std::vector<std::string>>();
    auto lv = tensors.find("lexicon.vectors");
    auto lf = tensors.find("lexicon.fallback");
    if (lv == tensors.end() || lf == tensors.end()) throw Error(Errc::load, "checkpoint lacks the lexicon tensors");
    if (static_cast<std::size_t>(lv->second.rows()) != words.size()) {
      throw Error(Errc::load, "tensor lexicon.vectors has " + std::to_string(lv->second.rows()) + " rows for " +
                                  std::to_string(words.size()) + " words");
    }
    EmbeddingTable<S> lexicon(std::move(words), lv->second);
    lexicon.set_fallback(lf->second);
    out.model = Model<S>::restore(header.at("config").get<ModelConfig>(),
                                  header.at("entity_labels").get<std::vector<std::string>>(),
                                  header.at("relation_labels").get<std::vector<std::string>>(), std::move(lexicon),
                                  tensors);
    out.state.baseline = header.at("baseline");
    out.state.entropy_step = header.at("entropy_step");
    out.state.epoch = header.at("epoch");
    out.state.adam.step = header.at("adam_step");
    const auto& ac = header.at("adam");
    out.state.adam.config.learning_rate = ac.at("learning_rate");
    out.state.adam.config.beta1 = ac.at("beta1");
    out.state.adam.config.beta2 = ac.at("beta2");
    out.state.adam.config.epsilon = ac.at("epsilon");
    out.state.rng_state = header.at("rng_state");
    out.extra = header.at("extra");
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::load, std::string("checkpoint header: ") + e.what());
  }
  for (auto* p : out.model->params().trainable()) {
    auto it = moments.find(p->name);
    if (it == moments.end()) {
      out.state.adam.first.emplace_back();
      out.state.adam.second.emplace_back();
      continue;
    }
    if (it->second.first.rows() != p->value.rows() || it->second.first.cols() != p->value.cols()) {
      throw Error(Errc::load, "adam moments of tensor " + p->name + " do not match its shape");
    }
    out.state.adam.first.push_back(it->second.first);
    out.state.adam.second.push_back(it->second.second);
  }
  bool any = false;
  for (const auto& m : out.state.adam.first) any = any || m.size() != 0;
  if (!any) {
    out.state.adam.first.clear();
    out.state.adam.second.clear();
  }
  return out;
}

template <typename S>
LoadedCheckpoint<S> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open checkpoint " + path.string());
  return read_checkpoint<S>(in);
}

/// Element count of every parameter tensor stored in a checkpoint; the
/// lexicon is data, not parameters, and is left out.
inline std::map<std::string, std::size_t> checkpoint_tensor_sizes(const std::filesystem::path& path) {
  const auto width = checkpoint_scalar_size(path);
  std::map<std::string, std::size_t> out;
  auto collect = [&](auto tag) {
    using S = decltype(tag);
    auto ck = load_checkpoint<S>(path);
    for (const auto* p : ck.model->params().trainable()) out[p->name] = p->size();
  };
  if (width == sizeof(float)) {
    collect(float{});
  } else {
    collect(double{});
  }
  return out;
}

}  // namespace hopper
