#pragma once

#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "psgi/serialize.hpp"

namespace psgi {

enum class Pool : std::uint8_t { Train, Eval };

inline const char* to_string(Pool p) { return p == Pool::Train ? "train" : "eval"; }

struct EntitySpec {
  EntityId id;
  std::map<std::string, bool> attributes;
  Pool pool = Pool::Train;
};

/// Per-slot instantiation filter: attribute names that must hold ("!name"
/// must not hold) for an entity to fill the slot.
using SlotFilters = std::map<int, std::vector<std::string>>;

struct SubtaskTemplate {
  VerbSignature sig;
  SlotFilters filters;
};

struct OptionTemplate {
  VerbSignature sig;
  Expr precondition = Expr::truth();
  EffectDelta effect;
  SlotFilters filters;
};

struct TaskParams {
  int entities_per_task = 1;
  int episode_steps = 50;
  int adaptation_steps = 1000;
  int test_horizon = 50;
};

struct RewardSpec {
  std::string mode = "critical_path";
  double magnitude = 1.0;
};

struct DomainConfig {
  std::string name;
  int embedding_dim = 0;
  std::vector<std::string> attributes;
  std::vector<EntitySpec> entities;
  std::vector<SubtaskTemplate> subtasks;
  std::vector<OptionTemplate> options;
  TaskParams task;
  RewardSpec reward;

  std::vector<EntityId> pool(Pool p) const {
    std::vector<EntityId> out;
    for (const auto& e : entities)
      if (e.pool == p) out.push_back(e.id);
    return out;
  }

  const EntitySpec* find_entity(const EntityId& id) const {
    for (const auto& e : entities)
      if (e.id == id) return &e;
    return nullptr;
  }

  bool has_attribute(const std::string& a) const {
    return std::find(attributes.begin(), attributes.end(), a) != attributes.end();
  }

  /// Ground-truth attribute bits of every entity; absent keys read false.
  AttributeTruth truth() const {
    AttributeTruth t;
    for (const auto& a : attributes) {
      auto& col = t[a];
      for (const auto& e : entities) {
        auto it = e.attributes.find(a);
        col[e.id] = it != e.attributes.end() && it->second;
      }
    }
    return t;
  }

  bool passes(const SlotFilters& filters, int slot, const EntityId& id) const {
    auto it = filters.find(slot);
    if (it == filters.end()) return true;
    const EntitySpec* e = find_entity(id);
    if (!e) return false;
    for (const auto& req : it->second) {
      const bool negate = !req.empty() && req[0] == '!';
      const std::string name = negate ? req.substr(1) : req;
      auto a = e->attributes.find(name);
      const bool v = a != e->attributes.end() && a->second;
      if (v == negate) return false;
    }
    return true;
  }
};

namespace detail {

[[noreturn]] inline void invalid(const std::string& what) { throw Error(ErrorCode::ValidationError, what); }

inline SlotFilters filters_from_json(const json& j, int arity, const std::string& where) {
  SlotFilters f;
  if (!j.is_object()) parse_fail(where, "filters must be an object");
  for (const auto& [slot, reqs] : j.items()) {
    if (!is_slot_name(slot)) parse_fail(where, "bad slot name '" + slot + "'");
    const int s = slot[1] - '0';
    if (s > arity) invalid(where + ": filter on slot " + slot + " beyond arity " + std::to_string(arity));
    std::vector<std::string> names;
    if (reqs.is_string())
      names.push_back(reqs.get<std::string>());
    else if (reqs.is_array())
      for (const auto& r : reqs) names.push_back(as_string(r, where + "." + slot));
    else
      parse_fail(where + "." + slot, "expected attribute name or list");
    f[s] = std::move(names);
  }
  return f;
}

inline json filters_to_json(const SlotFilters& f) {
  json j = json::object();
  for (const auto& [slot, names] : f) j["p" + std::to_string(slot)] = names;
  return j;
}

inline void validate_identifier(const std::string& id, const std::string& what) {
  if (id.empty()) invalid(what + " must be nonempty");
  for (unsigned char c : id)
    if (std::isspace(c)) invalid(what + " '" + id + "' contains whitespace");
}

}  // namespace detail

/// Checks every config invariant; throws ValidationError naming the first
/// violation.
inline void validate_domain(const DomainConfig& cfg) {
  using detail::invalid;
  detail::validate_identifier(cfg.name, "domain name");
  if (cfg.embedding_dim < static_cast<int>(cfg.attributes.size()) || cfg.embedding_dim < 1)
    invalid("embedding_dim " + std::to_string(cfg.embedding_dim) + " smaller than attribute count");
  std::set<std::string> attrs;
  for (const auto& a : cfg.attributes) {
    detail::validate_identifier(a, "attribute");
    if (!attrs.insert(a).second) invalid("duplicate attribute '" + a + "'");
  }
  std::set<EntityId> ids;
  for (const auto& e : cfg.entities) {
    detail::validate_identifier(e.id, "entity id");
    if (detail::is_slot_name(e.id)) invalid("entity id '" + e.id + "' collides with a slot name");
    if (!ids.insert(e.id).second) invalid("duplicate entity '" + e.id + "' (train and eval pools must be disjoint)");
    for (const auto& [a, v] : e.attributes)
      if (!attrs.count(a)) invalid("entity '" + e.id + "' uses undeclared attribute '" + a + "'");
  }
  auto check_filters = [&](const SlotFilters& f, const std::string& owner) {
    for (const auto& [slot, names] : f)
      for (const auto& n : names) {
        const std::string base = !n.empty() && n[0] == '!' ? n.substr(1) : n;
        if (!attrs.count(base)) invalid(owner + " filter references undeclared attribute '" + base + "'");
      }
  };
  std::set<VerbSignature> subtask_sigs;
  for (const auto& s : cfg.subtasks) {
    detail::validate_identifier(s.sig.verb, "subtask verb");
    if (s.sig.arity < 0 || s.sig.arity > kMaxArity) invalid("subtask " + s.sig.str() + " arity out of range");
    if (!subtask_sigs.insert(s.sig).second) invalid("duplicate subtask template " + s.sig.str());
    check_filters(s.filters, "subtask " + s.sig.str());
  }
  std::set<VerbSignature> option_sigs;
  for (const auto& o : cfg.options) {
    const std::string owner = "option " + o.sig.str();
    detail::validate_identifier(o.sig.verb, "option verb");
    if (o.sig.arity < 0 || o.sig.arity > kMaxArity) invalid(owner + " arity out of range");
    if (!option_sigs.insert(o.sig).second) invalid("duplicate option template " + o.sig.str());
    check_filters(o.filters, owner);
    auto check_arg = [&](const Arg& a) {
      if (!a.is_param()) invalid(owner + " references a constant entity '" + a.entity + "'");
      if (a.slot > o.sig.arity) invalid(owner + " references slot p" + std::to_string(a.slot) + " beyond its arity");
    };
    for (const auto& p : o.precondition.patterns()) {
      for (const auto& a : p.args) check_arg(a);
      if (p.is_attribute() && !attrs.count(p.attribute))
        invalid(owner + " references undeclared attribute '" + p.attribute + "'");
      if (p.is_completion() && !subtask_sigs.count(p.subtask))
        invalid(owner + " references undeclared subtask " + p.subtask.str());
    }
    std::set<FeaturePattern> seen;
    for (const auto& ef : o.effect) {
      for (const auto& a : ef.pattern.args) check_arg(a);
      if (!subtask_sigs.count(ef.pattern.subtask))
        invalid(owner + " effect references undeclared subtask " + ef.pattern.subtask.str());
      if (!seen.insert(ef.pattern).second) invalid(owner + " effect lists " + ef.pattern.str() + " twice");
    }
  }
  if (cfg.task.entities_per_task < 1) invalid("task.entities_per_task must be >= 1");
  if (cfg.task.episode_steps < 1) invalid("task.episode_steps must be >= 1");
  if (cfg.task.adaptation_steps < 0) invalid("task.adaptation_steps must be >= 0");
  if (cfg.task.test_horizon < 1) invalid("task.test_horizon must be >= 1");
  if (cfg.reward.mode != "critical_path") invalid("unknown reward mode '" + cfg.reward.mode + "'");
  if (!(cfg.reward.magnitude > 0.0)) invalid("reward magnitude must be positive");
}

inline DomainConfig domain_from_json(const json& j) {
  using detail::as_string;
  using detail::require;
  DomainConfig cfg;
  cfg.name = as_string(require(j, "name", "domain"), "name");
  cfg.embedding_dim = require(j, "embedding_dim", "domain").get<int>();
  for (const auto& a : require(j, "attributes", "domain")) cfg.attributes.push_back(as_string(a, "attributes"));

  const json& ents = require(j, "entities", "domain");
  for (std::size_t i = 0; i < ents.size(); ++i) {
    const std::string w = "entities[" + std::to_string(i) + "]";
    EntitySpec e;
    e.id = as_string(require(ents[i], "id", w), w + ".id");
    if (ents[i].contains("attributes")) {
      for (const auto& [k, v] : ents[i].at("attributes").items()) {
        if (!v.is_boolean()) detail::parse_fail(w + ".attributes." + k, "expected bool");
        e.attributes[k] = v.get<bool>();
      }
    }
    const std::string pool = as_string(require(ents[i], "pool", w), w + ".pool");
    if (pool == "train")
      e.pool = Pool::Train;
    else if (pool == "eval")
      e.pool = Pool::Eval;
    else
      detail::parse_fail(w + ".pool", "expected \"train\" or \"eval\"");
    cfg.entities.push_back(std::move(e));
  }

  const json& subs = require(j, "subtasks", "domain");
  for (std::size_t i = 0; i < subs.size(); ++i) {
    const std::string w = "subtasks[" + std::to_string(i) + "]";
    SubtaskTemplate s;
    s.sig = VerbSignature{as_string(require(subs[i], "verb", w), w + ".verb"), require(subs[i], "arity", w).get<int>()};
    if (subs[i].contains("filters")) s.filters = detail::filters_from_json(subs[i].at("filters"), s.sig.arity, w);
    cfg.subtasks.push_back(std::move(s));
  }

  const json& opts = require(j, "options", "domain");
  for (std::size_t i = 0; i < opts.size(); ++i) {
    const std::string w = "options[" + std::to_string(i) + "]";
    OptionTemplate o;
    o.sig = VerbSignature{as_string(require(opts[i], "verb", w), w + ".verb"), require(opts[i], "arity", w).get<int>()};
    o.precondition = expr_from_json(require(opts[i], "precondition", w), w + ".precondition");
    o.effect = effect_from_json(require(opts[i], "effect", w), w + ".effect");
    if (opts[i].contains("filters")) o.filters = detail::filters_from_json(opts[i].at("filters"), o.sig.arity, w);
    cfg.options.push_back(std::move(o));
  }

  const json& task = require(j, "task", "domain");
  cfg.task.entities_per_task = require(task, "entities_per_task", "task").get<int>();
  cfg.task.episode_steps = require(task, "episode_steps", "task").get<int>();
  cfg.task.adaptation_steps = require(task, "adaptation_steps", "task").get<int>();
  cfg.task.test_horizon = require(task, "test_horizon", "task").get<int>();

  if (j.contains("reward")) {
    const json& r = j.at("reward");
    if (r.contains("mode")) cfg.reward.mode = as_string(r.at("mode"), "reward.mode");
    if (r.contains("magnitude")) cfg.reward.magnitude = r.at("magnitude").get<double>();
  }
  return cfg;
}

inline json domain_to_json(const DomainConfig& cfg) {
  json ents = json::array();
  for (const auto& e : cfg.entities)
    ents.push_back(json{{"id", e.id}, {"attributes", e.attributes}, {"pool", to_string(e.pool)}});
  json subs = json::array();
  for (const auto& s : cfg.subtasks) {
    json o{{"verb", s.sig.verb}, {"arity", s.sig.arity}};
    if (!s.filters.empty()) o["filters"] = detail::filters_to_json(s.filters);
    subs.push_back(o);
  }
  json opts = json::array();
  for (const auto& t : cfg.options) {
    json o{{"verb", t.sig.verb},
           {"arity", t.sig.arity},
           {"precondition", expr_to_json(t.precondition)},
           {"effect", effect_to_json(t.effect)}};
    if (!t.filters.empty()) o["filters"] = detail::filters_to_json(t.filters);
    opts.push_back(o);
  }
  return json{{"name", cfg.name},
              {"embedding_dim", cfg.embedding_dim},
              {"attributes", cfg.attributes},
              {"entities", ents},
              {"subtasks", subs},
              {"options", opts},
              {"task",
               {{"entities_per_task", cfg.task.entities_per_task},
                {"episode_steps", cfg.task.episode_steps},
                {"adaptation_steps", cfg.task.adaptation_steps},
                {"test_horizon", cfg.task.test_horizon}}},
              {"reward", {{"mode", cfg.reward.mode}, {"magnitude", cfg.reward.magnitude}}}};
}

/// Parses and validates a domain config given as JSON text.
inline DomainConfig parse_domain(const std::string& text, const std::string& source = "domain") {
  const json j = parse_json_text(text, source);
  DomainConfig cfg;
  try {
    cfg = domain_from_json(j);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, source + ": " + e.what());
  }
  validate_domain(cfg);
  return cfg;
}

inline DomainConfig load_domain(const std::string& path) { return parse_domain(read_text_file(path), path); }

}  // namespace psgi
