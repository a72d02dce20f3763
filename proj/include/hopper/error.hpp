// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hopper {

/// Failure categories raised across the library. Callers branch on these,
/// the message carries the human-readable detail.
enum class Errc {
  invalid_shape,
  empty_action_set,
  training_divergence,
  check_invalid,
  ingestion,
  lookup,
  already_attached,
  graph_empty,
  parse,
  contract_violation,
  episode_over,
  hub_missing,
  config,
  oracle_too_large,
  load,
  classification,
  io,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::invalid_shape: return "invalid-shape";
    case Errc::empty_action_set: return "empty-action-set";
    case Errc::training_divergence: return "training-divergence";
    case Errc::check_invalid: return "check-invalid";
    case Errc::ingestion: return "ingestion";
    case Errc::lookup: return "lookup";
    case Errc::already_attached: return "already-attached";
    case Errc::graph_empty: return "graph-empty";
    case Errc::parse: return "parse";
    case Errc::contract_violation: return "contract-violation";
    case Errc::episode_over: return "episode-over";
    case Errc::hub_missing: return "hub-missing";
    case Errc::config: return "config";
    case Errc::oracle_too_large: return "oracle-too-large";
    case Errc::load: return "load";
    case Errc::classification: return "classification";
    case Errc::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace hopper
