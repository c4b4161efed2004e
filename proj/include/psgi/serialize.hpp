#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "psgi/graph.hpp"

namespace psgi {

using json = nlohmann::json;

// Expression AST encoding shared by domain configs and graph files:
//   {"true":null} {"false":null} {"and":[...]} {"or":[...]} {"not":{...}}
//   {"subtask":[verb,[arg,...]]} {"attr":[name,arg]}
// An arg is a slot name "p1".."p3" or an entity id.

namespace detail {

inline bool is_slot_name(const std::string& s) {
  return s.size() == 2 && s[0] == 'p' && s[1] >= '1' && s[1] <= '0' + kMaxArity;
}

[[noreturn]] inline void parse_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ParseError, where + ": " + what);
}

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) parse_fail(where, std::string("missing field '") + key + "'");
  return j.at(key);
}

inline std::string as_string(const json& j, const std::string& where) {
  if (!j.is_string()) parse_fail(where, "expected string");
  return j.get<std::string>();
}

}  // namespace detail

inline std::string arg_to_string(const Arg& a) { return a.str(); }

inline Arg arg_from_string(const std::string& s) {
  if (detail::is_slot_name(s)) return Arg::param(s[1] - '0');
  return Arg::constant(s);
}

inline json pattern_to_json(const FeaturePattern& p) {
  if (p.is_attribute()) return json{{"attr", json::array({p.attribute, arg_to_string(p.args.at(0))})}};
  json args = json::array();
  for (const auto& a : p.args) args.push_back(arg_to_string(a));
  return json{{"subtask", json::array({p.subtask.verb, args})}};
}

inline FeaturePattern subtask_pattern_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[1].is_array()) detail::parse_fail(where, "expected [verb, [args]]");
  std::vector<Arg> args;
  for (std::size_t i = 0; i < j[1].size(); ++i)
    args.push_back(arg_from_string(detail::as_string(j[1][i], where + "[1][" + std::to_string(i) + "]")));
  const std::string verb = detail::as_string(j[0], where + "[0]");
  const int arity = static_cast<int>(args.size());
  return FeaturePattern::completion(VerbSignature{verb, arity}, std::move(args));
}

inline json expr_to_json(const Expr& e) {
  switch (e.op()) {
    case Expr::Op::True: return json{{"true", nullptr}};
    case Expr::Op::False: return json{{"false", nullptr}};
    case Expr::Op::Lit: {
      json lit = pattern_to_json(e.lit().pattern);
      return e.lit().positive ? lit : json{{"not", lit}};
    }
    case Expr::Op::And:
    case Expr::Op::Or: {
      json arr = json::array();
      for (const auto& c : e.children()) arr.push_back(expr_to_json(c));
      return json{{e.op() == Expr::Op::And ? "and" : "or", arr}};
    }
  }
  return json{{"false", nullptr}};
}

inline Expr expr_from_json(const json& j, const std::string& where = "expr") {
  if (!j.is_object() || j.size() != 1) detail::parse_fail(where, "expression must be a single-key object");
  const std::string key = j.begin().key();
  const json& val = j.begin().value();
  if (key == "true") return Expr::truth();
  if (key == "false") return Expr::falsity();
  if (key == "not") return expr_from_json(val, where + ".not").negated();
  if (key == "and" || key == "or") {
    if (!val.is_array() || val.empty()) detail::parse_fail(where, key + " needs a nonempty array");
    std::vector<Expr> children;
    for (std::size_t i = 0; i < val.size(); ++i)
      children.push_back(expr_from_json(val[i], where + "." + key + "[" + std::to_string(i) + "]"));
    return key == "and" ? Expr::all_of(std::move(children)) : Expr::any_of(std::move(children));
  }
  if (key == "subtask") return Expr::literal(subtask_pattern_from_json(val, where + ".subtask"));
  if (key == "attr") {
    if (!val.is_array() || val.size() != 2) detail::parse_fail(where + ".attr", "expected [name, arg]");
    return Expr::literal(FeaturePattern::attr(detail::as_string(val[0], where + ".attr[0]"),
                                              arg_from_string(detail::as_string(val[1], where + ".attr[1]"))));
  }
  detail::parse_fail(where, "unknown expression key '" + key + "'");
}

inline json effect_to_json(const EffectDelta& d) {
  json arr = json::array();
  for (const auto& ef : d) {
    json p = pattern_to_json(ef.pattern).at("subtask");
    arr.push_back(json{{ef.sign > 0 ? "add" : "del", p}});
  }
  return arr;
}

inline EffectDelta effect_from_json(const json& j, const std::string& where = "effect") {
  if (!j.is_array()) detail::parse_fail(where, "expected array");
  EffectDelta d;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    const json& item = j[i];
    if (!item.is_object() || item.size() != 1) detail::parse_fail(w, "expected {\"add\":...} or {\"del\":...}");
    const std::string key = item.begin().key();
    const json& val = item.begin().value();
    if (key != "add" && key != "del") detail::parse_fail(w, "unknown effect key '" + key + "'");
    d.push_back(EffectEntry{subtask_pattern_from_json(val, w + "." + key), key == "add" ? +1 : -1});
  }
  return d;
}

inline json ground_item_to_json(const GroundItem& g) { return json::array({g.sig.verb, g.binding}); }

inline GroundItem ground_item_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[1].is_array()) detail::parse_fail(where, "expected [verb, [entities]]");
  GroundItem g;
  g.sig.verb = detail::as_string(j[0], where);
  for (const auto& e : j[1]) g.binding.push_back(detail::as_string(e, where));
  g.sig.arity = static_cast<int>(g.binding.size());
  return g;
}

inline json attributes_to_json(const AttributeSet& set) {
  json cands = json::array();
  for (const auto& c : set.candidates()) cands.push_back(json{{"id", c.id}, {"members", c.members}});
  json emb = json::object();
  for (const auto& [e, v] : set.reference().rows()) emb[e] = v;
  return json{{"seen", set.seen()}, {"candidates", cands}, {"embeddings", emb}};
}

inline AttributeSet attributes_from_json(const json& j, const std::string& where = "attributes") {
  std::vector<EntityId> seen;
  for (const auto& s : detail::require(j, "seen", where)) seen.push_back(detail::as_string(s, where + ".seen"));
  std::vector<AttributeFn> cands;
  for (const auto& c : detail::require(j, "candidates", where)) {
    AttributeFn fn{detail::as_string(detail::require(c, "id", where), where + ".id"), {}};
    for (const auto& m : detail::require(c, "members", where)) fn.members.push_back(detail::as_string(m, where));
    std::sort(fn.members.begin(), fn.members.end());
    cands.push_back(std::move(fn));
  }
  EmbeddingTable emb;
  if (j.contains("embeddings"))
    for (const auto& [e, v] : j.at("embeddings").items()) emb.insert(e, v.get<std::vector<double>>());
  return AttributeSet(std::move(seen), std::move(cands), std::move(emb));
}

/// Graph file: the domain-config AST format plus reward estimates and, for
/// inferred graphs, the candidate attributes.
inline json graph_to_json(const ParamGraph& g) {
  json options = json::array();
  for (const auto& [sig, m] : g.options)
    options.push_back(json{{"verb", sig.verb},
                           {"arity", sig.arity},
                           {"precondition", expr_to_json(m.precondition)},
                           {"effect", effect_to_json(m.effect)}});
  json ground = json::array();
  for (const auto& [item, m] : g.ground_options)
    ground.push_back(json{{"verb", item.sig.verb},
                          {"arity", item.sig.arity},
                          {"binding", item.binding},
                          {"precondition", expr_to_json(m.precondition)},
                          {"effect", effect_to_json(m.effect)}});
  json rewards = json::array();
  for (const auto& [item, r] : g.rewards)
    rewards.push_back(json{{"subtask", ground_item_to_json(item)}, {"mean", r.mean}, {"count", r.count}});
  json out{{"format", "psgi-graph"},
           {"provenance", to_string(g.provenance)},
           {"options", options},
           {"ground_options", ground},
           {"rewards", rewards}};
  if (g.attributes) out["attributes"] = attributes_to_json(*g.attributes);
  return out;
}

inline ParamGraph graph_from_json(const json& j) {
  ParamGraph g;
  const std::string prov = detail::as_string(detail::require(j, "provenance", "graph"), "graph.provenance");
  if (prov == "ground_truth")
    g.provenance = Provenance::GroundTruth;
  else if (prov == "psgi")
    g.provenance = Provenance::InferredPSGI;
  else if (prov == "msgi")
    g.provenance = Provenance::InferredMSGI;
  else
    detail::parse_fail("graph.provenance", "unknown provenance '" + prov + "'");
  const json& options = detail::require(j, "options", "graph");
  for (std::size_t i = 0; i < options.size(); ++i) {
    const std::string w = "graph.options[" + std::to_string(i) + "]";
    const json& o = options[i];
    VerbSignature sig{detail::as_string(detail::require(o, "verb", w), w + ".verb"),
                      detail::require(o, "arity", w).get<int>()};
    g.options[sig] = OptionModel{expr_from_json(detail::require(o, "precondition", w), w + ".precondition"),
                                 effect_from_json(detail::require(o, "effect", w), w + ".effect")};
  }
  if (j.contains("ground_options")) {
    const json& ground = j.at("ground_options");
    for (std::size_t i = 0; i < ground.size(); ++i) {
      const std::string w = "graph.ground_options[" + std::to_string(i) + "]";
      const json& o = ground[i];
      GroundItem item{VerbSignature{detail::as_string(detail::require(o, "verb", w), w + ".verb"),
                                    detail::require(o, "arity", w).get<int>()},
                      detail::require(o, "binding", w).get<std::vector<EntityId>>()};
      g.ground_options[item] =
          OptionModel{expr_from_json(detail::require(o, "precondition", w), w + ".precondition"),
                      effect_from_json(detail::require(o, "effect", w), w + ".effect")};
    }
  }
  if (j.contains("rewards")) {
    for (const auto& r : j.at("rewards")) {
      GroundItem item = ground_item_from_json(detail::require(r, "subtask", "graph.rewards"), "graph.rewards");
      g.rewards[item] = RewardEstimate{r.at("mean").get<double>(), r.at("count").get<std::size_t>()};
    }
  }
  if (j.contains("attributes")) g.attributes = attributes_from_json(j.at("attributes"));
  return g;
}

inline json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i)
      if (text[i] == '\n') ++line;
    throw Error(ErrorCode::ParseError, source + ":" + std::to_string(line) + ": " + e.what());
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << text;
}

inline ParamGraph load_graph(const std::string& path) {
  return graph_from_json(parse_json_text(read_text_file(path), path));
}

inline void save_graph(const ParamGraph& g, const std::string& path) { write_text_file(path, graph_to_json(g).dump(2) + "\n"); }

}  // namespace psgi
