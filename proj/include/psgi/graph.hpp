#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "psgi/attributes.hpp"
#include "psgi/bits.hpp"
#include "psgi/error.hpp"
#include "psgi/expr.hpp"

namespace psgi {

struct EffectEntry {
  FeaturePattern pattern;  // SubtaskCompletion only
  int sign = +1;           // +1 sets, -1 clears

  auto operator<=>(const EffectEntry&) const = default;
  bool operator==(const EffectEntry&) const = default;
};

using EffectDelta = std::vector<EffectEntry>;

struct OptionModel {
  Expr precondition = Expr::falsity();
  EffectDelta effect;
};

struct RewardEstimate {
  double mean = 0.0;
  std::size_t count = 0;

  bool operator==(const RewardEstimate&) const = default;
};

/// A signature bound to concrete entities: a ground subtask or ground option.
struct GroundItem {
  VerbSignature sig;
  std::vector<EntityId> binding;

  auto operator<=>(const GroundItem&) const = default;
  bool operator==(const GroundItem&) const = default;

  std::string str() const {
    std::string s = sig.verb + "(";
    for (std::size_t i = 0; i < binding.size(); ++i) s += (i ? "," : "") + binding[i];
    return s + ")";
  }
};

/// Dense indexing of the ground subtasks and options of one task.
class GroundSpace {
 public:
  GroundSpace() = default;
  GroundSpace(std::vector<EntityId> entities, std::vector<GroundItem> subtasks, std::vector<GroundItem> options)
      : entities_(std::move(entities)), subtasks_(std::move(subtasks)), options_(std::move(options)) {
    for (std::size_t i = 0; i < subtasks_.size(); ++i) subtask_index_[subtasks_[i]] = i;
    for (std::size_t i = 0; i < options_.size(); ++i) option_index_[options_[i]] = i;
  }

  const std::vector<EntityId>& entities() const noexcept { return entities_; }
  const std::vector<GroundItem>& subtasks() const noexcept { return subtasks_; }
  const std::vector<GroundItem>& options() const noexcept { return options_; }
  std::size_t num_subtasks() const noexcept { return subtasks_.size(); }
  std::size_t num_options() const noexcept { return options_.size(); }

  std::optional<std::size_t> find_subtask(const GroundItem& g) const {
    auto it = subtask_index_.find(g);
    if (it == subtask_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> find_option(const GroundItem& g) const {
    auto it = option_index_.find(g);
    if (it == option_index_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<VerbSignature> option_signatures() const {
    std::set<VerbSignature> s;
    for (const auto& o : options_) s.insert(o.sig);
    return {s.begin(), s.end()};
  }

 private:
  std::vector<EntityId> entities_;
  std::vector<GroundItem> subtasks_;
  std::vector<GroundItem> options_;
  std::map<GroundItem, std::size_t> subtask_index_;
  std::map<GroundItem, std::size_t> option_index_;
};

enum class Provenance : std::uint8_t { GroundTruth, InferredPSGI, InferredMSGI };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::GroundTruth: return "ground_truth";
    case Provenance::InferredPSGI: return "psgi";
    case Provenance::InferredMSGI: return "msgi";
  }
  return "?";
}

/// <G_prec, G_eff, G_r>: one precondition/effect model per option signature,
/// optional per-ground-option overrides (used by the per-option ablation),
/// and per-ground-subtask reward estimates. Inferred graphs carry the
/// candidate attributes their expressions refer to.
struct ParamGraph {
  Provenance provenance = Provenance::GroundTruth;
  std::map<VerbSignature, OptionModel> options;
  std::map<GroundItem, OptionModel> ground_options;
  std::map<GroundItem, RewardEstimate> rewards;
  std::optional<AttributeSet> attributes;

  const OptionModel& model_for(const GroundItem& option) const {
    if (auto it = ground_options.find(option); it != ground_options.end()) return it->second;
    if (auto it = options.find(option.sig); it != options.end()) return it->second;
    throw Error(ErrorCode::UnknownSignature, option.sig.str());
  }

  RewardEstimate reward(const GroundItem& subtask) const {
    auto it = rewards.find(subtask);
    return it == rewards.end() ? RewardEstimate{} : it->second;
  }
};

/// (attribute id, entity) -> value.
using AttributeLookup = std::function<bool(const std::string&, const EntityId&)>;

inline AttributeLookup truth_lookup(std::shared_ptr<const AttributeTruth> truth) {
  return [truth](const std::string& attr, const EntityId& e) {
    auto it = truth->find(attr);
    if (it == truth->end()) throw Error(ErrorCode::MissingFeature, "attribute " + attr);
    auto jt = it->second.find(e);
    return jt != it->second.end() && jt->second;
  };
}

/// Attribute lookup for an inferred graph: candidate membership of the entity
/// or of its nearest seen neighbour. `set` and `emb` must outlive the lookup.
inline AttributeLookup candidate_lookup(const AttributeSet& set, const EmbeddingTable& emb) {
  auto proxies = std::make_shared<std::map<EntityId, EntityId>>();
  return [&set, &emb, proxies](const std::string& attr, const EntityId& e) {
    const AttributeFn* fn = set.find(attr);
    if (!fn) throw Error(ErrorCode::MissingFeature, "attribute " + attr);
    auto it = proxies->find(e);
    if (it == proxies->end()) it = proxies->emplace(e, set.proxy(e, emb)).first;
    return fn->contains(it->second);
  };
}

/// Lookup appropriate for `graph`: candidate membership when the graph carries
/// induced attributes, otherwise `fallback` (typically ground truth).
inline AttributeLookup lookup_for(const ParamGraph& graph, const EmbeddingTable& emb, AttributeLookup fallback) {
  if (graph.attributes) return candidate_lookup(*graph.attributes, emb);
  return fallback;
}

// ---------------------------------------------------------------------------
// Grounding

inline EntityId bind_arg(const Arg& a, const std::vector<EntityId>& binding) {
  if (!a.is_param()) return a.entity;
  if (a.slot < 1 || static_cast<std::size_t>(a.slot) > binding.size())
    throw Error(ErrorCode::InvalidArgument, "slot p" + std::to_string(a.slot) + " outside binding");
  return binding[static_cast<std::size_t>(a.slot) - 1];
}

inline GroundItem ground_subtask(const FeaturePattern& p, const std::vector<EntityId>& binding) {
  GroundItem g{p.subtask, {}};
  g.binding.reserve(p.args.size());
  for (const auto& a : p.args) g.binding.push_back(bind_arg(a, binding));
  return g;
}

struct GroundLiteral {
  std::uint32_t subtask = 0;
  bool positive = true;
};

/// Grounded DNF over subtask indices. No terms: always false; an empty
/// term: always true.
struct GroundCondition {
  std::vector<std::vector<GroundLiteral>> terms;

  bool holds(const Bits& x) const {
    for (const auto& t : terms) {
      bool ok = true;
      for (const auto& l : t)
        if (x.test(l.subtask) != l.positive) {
          ok = false;
          break;
        }
      if (ok) return true;
    }
    return false;
  }
  bool always_true() const {
    for (const auto& t : terms)
      if (t.empty()) return true;
    return false;
  }
};

struct GroundEffect {
  std::uint32_t subtask = 0;
  int sign = +1;
};

struct CompiledOption {
  GroundCondition precondition;
  std::vector<GroundEffect> effects;
};

/// A ParamGraph grounded against one task: fast eligibility and transitions.
struct CompiledGraph {
  std::size_t num_subtasks = 0;
  std::vector<CompiledOption> options;
  std::vector<RewardEstimate> rewards;  // per ground subtask

  bool eligible(std::size_t o, const Bits& x) const { return options[o].precondition.holds(x); }

  Bits eligibility(const Bits& x) const {
    Bits e(options.size());
    for (std::size_t o = 0; o < options.size(); ++o)
      if (eligible(o, x)) e.set(o);
    return e;
  }

  Bits apply(std::size_t o, Bits x) const {
    for (const auto& ef : options[o].effects) x.set(ef.subtask, ef.sign > 0);
    return x;
  }
};

inline GroundCondition ground_condition(const Dnf& dnf, const std::vector<EntityId>& binding,
                                        const GroundSpace& space, const AttributeLookup& attrs) {
  GroundCondition cond;
  for (const auto& term : dnf) {
    std::vector<GroundLiteral> lits;
    bool dead = false;
    for (const auto& l : term) {
      if (l.pattern.is_attribute()) {
        const bool v = attrs(l.pattern.attribute, bind_arg(l.pattern.args.at(0), binding));
        if (v != l.positive) {
          dead = true;
          break;
        }
        continue;
      }
      auto idx = space.find_subtask(ground_subtask(l.pattern, binding));
      if (!idx) {
        // Absent subtasks are never complete.
        if (l.positive) {
          dead = true;
          break;
        }
        continue;
      }
      lits.push_back(GroundLiteral{static_cast<std::uint32_t>(*idx), l.positive});
    }
    if (dead) continue;
    std::sort(lits.begin(), lits.end(), [](const GroundLiteral& a, const GroundLiteral& b) {
      return a.subtask != b.subtask ? a.subtask < b.subtask : a.positive < b.positive;
    });
    bool contradictory = false;
    std::vector<GroundLiteral> uniq;
    for (const auto& l : lits) {
      if (!uniq.empty() && uniq.back().subtask == l.subtask) {
        if (uniq.back().positive != l.positive) contradictory = true;
        continue;
      }
      uniq.push_back(l);
    }
    if (contradictory) continue;
    if (uniq.empty()) {
      GroundCondition always;
      always.terms.emplace_back();
      return always;
    }
    cond.terms.push_back(std::move(uniq));
  }
  return cond;
}

inline std::vector<GroundEffect> ground_effects(const EffectDelta& delta, const std::vector<EntityId>& binding,
                                                const GroundSpace& space) {
  std::vector<GroundEffect> out;
  for (const auto& ef : delta) {
    if (auto idx = space.find_subtask(ground_subtask(ef.pattern, binding)))
      out.push_back(GroundEffect{static_cast<std::uint32_t>(*idx), ef.sign});
  }
  return out;
}

inline CompiledGraph compile_graph(const ParamGraph& graph, const GroundSpace& space, const AttributeLookup& attrs) {
  CompiledGraph cg;
  cg.num_subtasks = space.num_subtasks();
  cg.options.reserve(space.num_options());
  std::map<const OptionModel*, Dnf> dnf_cache;
  for (const auto& opt : space.options()) {
    const OptionModel& model = graph.model_for(opt);
    auto it = dnf_cache.find(&model);
    if (it == dnf_cache.end()) it = dnf_cache.emplace(&model, dnf_terms(model.precondition)).first;
    cg.options.push_back(CompiledOption{ground_condition(it->second, opt.binding, space, attrs),
                                        ground_effects(model.effect, opt.binding, space)});
  }
  cg.rewards.reserve(space.num_subtasks());
  for (const auto& s : space.subtasks()) cg.rewards.push_back(graph.reward(s));
  return cg;
}

/// Eligibility of one ground option under `graph`, substituting the option's
/// entities into every pattern of its precondition.
inline bool ground_eligibility(const ParamGraph& graph, const GroundSpace& space, std::size_t option,
                               const Bits& x, const AttributeLookup& attrs) {
  const GroundItem& opt = space.options().at(option);
  const OptionModel& model = graph.model_for(opt);
  return evaluate(model.precondition, [&](const FeaturePattern& p) {
    if (p.is_attribute()) return attrs(p.attribute, bind_arg(p.args.at(0), opt.binding));
    auto idx = space.find_subtask(ground_subtask(p, opt.binding));
    return idx ? x.test(*idx) : false;
  });
}

/// Completion after executing `option` (assumed eligible) under `graph`.
inline Bits apply_effect(const ParamGraph& graph, const GroundSpace& space, std::size_t option, Bits x) {
  const GroundItem& opt = space.options().at(option);
  for (const auto& ef : ground_effects(graph.model_for(opt).effect, opt.binding, space))
    x.set(ef.subtask, ef.sign > 0);
  return x;
}

}  // namespace psgi
