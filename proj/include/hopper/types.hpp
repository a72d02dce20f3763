// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

#include "hopper/error.hpp"

namespace hopper {

enum class QuestionType { query, binary };

inline std::string_view to_string(QuestionType t) { return t == QuestionType::query ? "query" : "binary"; }

inline QuestionType parse_question_type(std::string_view s) {
  if (s == "query" || s == "open") return QuestionType::query;
  if (s == "binary") return QuestionType::binary;
  throw Error(Errc::parse, "unknown question type '" + std::string(s) + "'");
}

}  // namespace hopper
