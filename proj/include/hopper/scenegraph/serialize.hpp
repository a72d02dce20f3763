// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "hopper/scenegraph/graph.hpp"

namespace hopper {

// Canonical text form of a scene graph, version 1. Tab separated:
//
//   hopper-scene-graph 1
//   state <closed 0|1> <aux none|query|binary>
//   entities <n>
//   <id> <kind> <aux-role> <label> <source>
//   relations <m>
//   <id> <forward|inverse|noop> <inverse-id> <label>
//   triples <k>
//   <subject> <relation> <object> <display>
//
// Triples are listed in sorted order; the display column ("motorcycle-1
// has_part tire-1") is informational and ignored on read.

namespace detail {

inline std::string kind_name(EntityKind k) {
  switch (k) {
    case EntityKind::object: return "object";
    case EntityKind::attribute: return "attribute";
    case EntityKind::auxiliary: return "auxiliary";
  }
  return "?";
}

inline std::string role_name(AuxRole r) {
  switch (r) {
    case AuxRole::none: return "-";
    case AuxRole::hub: return "hub";
    case AuxRole::yes: return "yes";
    case AuxRole::no: return "no";
  }
  return "?";
}

inline std::string aux_mode_name(AuxMode m) {
  switch (m) {
    case AuxMode::none: return "none";
    case AuxMode::query: return "query";
    case AuxMode::binary: return "binary";
  }
  return "?";
}

inline void check_field(const std::string& s) {
  if (s.find_first_of("\t\n\r") != std::string::npos) {
    throw Error(Errc::contract_violation, "label contains a tab or newline: '" + s + "'");
  }
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace detail

inline std::string serialize_graph(const SceneGraph& sg) {
  std::ostringstream os;
  os << "hopper-scene-graph\t1\n";
  os << "state\t" << (sg.closed() ? 1 : 0) << '\t' << detail::aux_mode_name(sg.aux_mode()) << '\n';
  os << "entities\t" << sg.size() << '\n';
  for (const auto& e : sg.entities()) {
    detail::check_field(e.label);
    detail::check_field(e.source);
    os << e.id << '\t' << detail::kind_name(e.kind) << '\t' << detail::role_name(e.aux_role) << '\t' << e.label << '\t'
       << e.source << '\n';
  }
  os << "relations\t" << sg.relations().size() << '\n';
  for (const auto& r : sg.relations()) {
    detail::check_field(r.label);
    os << r.id << '\t' << (r.is_noop ? "noop" : r.is_inverse ? "inverse" : "forward") << '\t' << r.inverse_id << '\t'
       << r.label << '\n';
  }
  os << "triples\t" << sg.triples().size() << '\n';
  for (const auto& t : sg.triples()) {
    os << t.subject << '\t' << t.relation << '\t' << t.object << '\t' << sg.display_name(t.subject) << ' '
       << sg.relation_display(t.relation) << ' ' << sg.display_name(t.object) << '\n';
  }
  return os.str();
}

inline SceneGraph deserialize_graph(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto next = [&]() -> std::vector<std::string> {
    if (!std::getline(is, line)) throw Error(Errc::parse, "unexpected end of graph text at line " + std::to_string(lineno));
    ++lineno;
    return detail::split_tabs(line);
  };
  auto fail = [&](const std::string& what) {
    return Error(Errc::parse, "graph text line " + std::to_string(lineno) + ": " + what);
  };
  auto to_int = [&](const std::string& s) {
    try {
      std::size_t pos = 0;
      const int v = std::stoi(s, &pos);
      if (pos != s.size()) throw fail("bad integer '" + s + "'");
      return v;
    } catch (const std::logic_error&) {
      throw fail("bad integer '" + s + "'");
    }
  };

  auto header = next();
  if (header.size() != 2 || header[0] != "hopper-scene-graph" || header[1] != "1") throw fail("bad header");
  auto state = next();
  if (state.size() != 3 || state[0] != "state") throw fail("expected state line");

  SceneGraph sg;
  auto ent_head = next();
  if (ent_head.size() != 2 || ent_head[0] != "entities") throw fail("expected entities");
  const int n_ent = to_int(ent_head[1]);
  for (int i = 0; i < n_ent; ++i) {
    auto f = next();
    if (f.size() != 5 || to_int(f[0]) != i) throw fail("bad entity line");
    EntityKind kind = f[1] == "object"      ? EntityKind::object
                      : f[1] == "attribute" ? EntityKind::attribute
                      : f[1] == "auxiliary" ? EntityKind::auxiliary
                                            : throw fail("bad entity kind '" + f[1] + "'");
    AuxRole role = f[2] == "-"     ? AuxRole::none
                   : f[2] == "hub" ? AuxRole::hub
                   : f[2] == "yes" ? AuxRole::yes
                   : f[2] == "no"  ? AuxRole::no
                                   : throw fail("bad aux role '" + f[2] + "'");
    sg.add_entity(f[3], kind, role, f[4]);
  }
  auto rel_head = next();
  if (rel_head.size() != 2 || rel_head[0] != "relations") throw fail("expected relations");
  const int n_rel = to_int(rel_head[1]);
  std::vector<int> inverse_of(static_cast<std::size_t>(n_rel));
  for (int i = 0; i < n_rel; ++i) {
    auto f = next();
    if (f.size() != 4 || to_int(f[0]) != i) throw fail("bad relation line");
    if (f[1] != "noop" && f[1] != "inverse" && f[1] != "forward") throw fail("bad relation kind '" + f[1] + "'");
    const int id = sg.add_relation(f[3], f[1] == "inverse", f[1] == "noop");
    if (id != i) throw fail("duplicate relation");
    inverse_of[static_cast<std::size_t>(i)] = to_int(f[2]);
  }
  for (int i = 0; i < n_rel; ++i) {
    const int inv = inverse_of[static_cast<std::size_t>(i)];
    if (inv >= 0) {
      if (inv >= n_rel) throw fail("inverse id out of range");
      sg.link_inverse(i, inv);
    }
  }
  auto tri_head = next();
  if (tri_head.size() != 2 || tri_head[0] != "triples") throw fail("expected triples");
  const int n_tri = to_int(tri_head[1]);
  for (int i = 0; i < n_tri; ++i) {
    auto f = next();
    if (f.size() < 3) throw fail("bad triple line");
    sg.add_triple(to_int(f[0]), to_int(f[1]), to_int(f[2]));
  }
  if (state[1] == "1") sg.mark_closed();
  if (state[2] == "query") sg.mark_attached(AuxMode::query);
  if (state[2] == "binary") sg.mark_attached(AuxMode::binary);
  return sg;
}

}  // namespace hopper
