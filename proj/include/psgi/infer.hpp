#pragma once

#include <unordered_map>

#include "psgi/env.hpp"

namespace psgi {

enum class InferenceMode : std::uint8_t { PSGI, MSGIPlus };

inline const char* to_string(InferenceMode m) { return m == InferenceMode::PSGI ? "psgi" : "msgi"; }

/// Binary classification table for one precondition. Rows are unique
/// (features, label) pairs with their multiplicity.
struct PrecondTable {
  VerbSignature sig;
  std::optional<GroundItem> option;  // set for per-ground-option tables
  std::vector<FeaturePattern> features;
  std::vector<Bits> rows;
  std::vector<char> labels;
  std::vector<std::size_t> multiplicity;
  std::size_t inconsistencies = 0;  // feature vectors seen with both labels

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  int left = -1;     // feature false
  int right = -1;    // feature true
  bool label = false;
};

struct DecisionTree {
  std::vector<FeaturePattern> features;
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int depth = 0;
  std::size_t leaves = 0;

  bool predict(const Bits& row) const {
    int n = 0;
    while (nodes[static_cast<std::size_t>(n)].feature >= 0) {
      const auto& node = nodes[static_cast<std::size_t>(n)];
      n = row.test(static_cast<std::size_t>(node.feature)) ? node.right : node.left;
    }
    return nodes[static_cast<std::size_t>(n)].label;
  }
};

struct InferenceDiagnostics {
  std::map<std::string, std::size_t> inconsistent_rows;         // table name -> count
  std::map<std::string, std::vector<std::string>> effect_conflicts;  // table name -> patterns
};

namespace detail {

struct PairHash {
  std::size_t operator()(const std::pair<Bits, Bits>& p) const noexcept {
    return BitsHash{}(p.first) * 31 + BitsHash{}(p.second);
  }
};

struct Observation {
  Bits x;
  Bits e;
  std::size_t count = 0;
};

// Every observed (x, e): each record's pre-step state plus the final state.
inline std::vector<Observation> unique_observations(const Trajectory& traj) {
  std::unordered_map<std::pair<Bits, Bits>, std::size_t, PairHash> index;
  std::vector<Observation> out;
  auto add = [&](const Bits& x, const Bits& e) {
    auto [it, fresh] = index.emplace(std::make_pair(x, e), out.size());
    if (fresh) out.push_back(Observation{x, e, 0});
    ++out[it->second].count;
  };
  for (const auto& r : traj.records) add(r.x, r.e);
  if (!traj.empty()) add(traj.final_x, traj.final_e);
  return out;
}

// Slot tuples of distinct slots 1..arity of the given length.
inline void slot_tuples(int arity, int len, std::vector<Arg>& cur, std::vector<std::vector<Arg>>& out) {
  if (static_cast<int>(cur.size()) == len) {
    out.push_back(cur);
    return;
  }
  for (int s = 1; s <= arity; ++s) {
    bool used = false;
    for (const auto& a : cur) used = used || a.slot == s;
    if (used) continue;
    cur.push_back(Arg::param(s));
    slot_tuples(arity, len, cur, out);
    cur.pop_back();
  }
}

inline std::set<VerbSignature> subtask_signatures(const GroundSpace& space) {
  std::set<VerbSignature> out;
  for (const auto& s : space.subtasks()) out.insert(s.sig);
  return out;
}

inline std::vector<std::size_t> options_with_signature(const GroundSpace& space, const VerbSignature& sig) {
  std::vector<std::size_t> out;
  for (std::size_t o = 0; o < space.num_options(); ++o)
    if (space.options()[o].sig == sig) out.push_back(o);
  return out;
}

inline double gini_mass(double w, double p) { return w > 0.0 ? 2.0 * p * (w - p) / w : 0.0; }

}  // namespace detail

/// Completion patterns over the host signature's own slots: every subtask
/// signature of the task with every tuple of distinct slots.
inline std::vector<FeaturePattern> completion_features(const VerbSignature& host,
                                                       const std::set<VerbSignature>& subtasks) {
  std::vector<FeaturePattern> out;
  for (const auto& s : subtasks) {
    if (s.arity > host.arity) continue;
    std::vector<std::vector<Arg>> tuples;
    std::vector<Arg> cur;
    detail::slot_tuples(host.arity, s.arity, cur, tuples);
    for (auto& t : tuples) out.push_back(FeaturePattern::completion(s, std::move(t)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Augmented table for one option signature: a row per observed state and
/// ground option of `sig`, with completion features substituted by the
/// option's binding and candidate-attribute features of each slot.
inline PrecondTable build_precondition_table(const Trajectory& traj, const TaskInstance& task,
                                             const VerbSignature& sig, const AttributeSet* attrs,
                                             const EmbeddingTable* emb = nullptr) {
  PrecondTable table;
  table.sig = sig;
  std::vector<FeaturePattern> comp = completion_features(sig, detail::subtask_signatures(task.space));
  std::vector<FeaturePattern> attr;
  if (attrs)
    for (int j = 1; j <= sig.arity; ++j)
      for (const auto& c : attrs->candidates()) attr.push_back(FeaturePattern::attr(c.id, Arg::param(j)));
  std::sort(attr.begin(), attr.end());
  table.features = comp;
  table.features.insert(table.features.end(), attr.begin(), attr.end());

  const auto obs = detail::unique_observations(traj);
  const auto opts = detail::options_with_signature(task.space, sig);
  static const EmbeddingTable kNoEmbeddings;
  const EmbeddingTable& table_emb = emb ? *emb : attrs ? attrs->reference() : kNoEmbeddings;

  // Attribute bits depend only on the binding; group bindings by them.
  std::vector<Bits> attr_classes;
  std::unordered_map<Bits, std::size_t, BitsHash> class_index;
  std::map<std::pair<std::size_t, std::pair<Bits, bool>>, std::size_t> counts;
  std::map<std::pair<std::size_t, Bits>, int> labels_seen;
  for (auto o : opts) {
    const GroundItem& item = task.space.options()[o];
    Bits abits(attr.size());
    for (std::size_t k = 0; k < attr.size(); ++k) {
      const EntityId ent = bind_arg(attr[k].args[0], item.binding);
      const AttributeFn* fn = attrs->find(attr[k].attribute);
      abits.set(k, fn->contains(attrs->proxy(ent, table_emb)));
    }
    auto [cit, fresh] = class_index.emplace(abits, attr_classes.size());
    if (fresh) attr_classes.push_back(abits);
    const std::size_t cls = cit->second;
    std::vector<std::optional<std::size_t>> ground(comp.size());
    for (std::size_t k = 0; k < comp.size(); ++k) ground[k] = task.space.find_subtask(ground_subtask(comp[k], item.binding));
    for (const auto& ob : obs) {
      Bits cbits(comp.size());
      for (std::size_t k = 0; k < comp.size(); ++k)
        if (ground[k] && ob.x.test(*ground[k])) cbits.set(k);
      const bool label = ob.e.test(o);
      counts[{cls, {cbits, label}}] += ob.count;
      labels_seen[{cls, cbits}] |= label ? 2 : 1;
    }
  }
  for (const auto& [key, n] : counts) {
    const auto& [cls, feat] = key;
    Bits row(table.features.size());
    for (std::size_t k = 0; k < comp.size(); ++k)
      if (feat.first.test(k)) row.set(k);
    for (std::size_t k = 0; k < attr.size(); ++k)
      if (attr_classes[cls].test(k)) row.set(comp.size() + k);
    table.rows.push_back(std::move(row));
    table.labels.push_back(feat.second ? 1 : 0);
    table.multiplicity.push_back(n);
  }
  for (const auto& [key, mask] : labels_seen)
    if (mask == 3) ++table.inconsistencies;
  return table;
}

/// Per-ground-option table over the raw completion bits of every ground
/// subtask, no substitution and no attributes.
inline PrecondTable build_ground_option_table(const Trajectory& traj, const TaskInstance& task, std::size_t option) {
  PrecondTable table;
  const GroundItem& item = task.space.options().at(option);
  table.sig = item.sig;
  table.option = item;
  for (const auto& s : task.space.subtasks()) {
    std::vector<Arg> args;
    for (const auto& e : s.binding) args.push_back(Arg::constant(e));
    table.features.push_back(FeaturePattern::completion(s.sig, std::move(args)));
  }
  // Ground subtasks are already in template order; keep the feature columns
  // aligned with subtask indices by permuting rows, not columns.
  std::vector<std::size_t> perm(table.features.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return table.features[a] < table.features[b]; });
  std::vector<FeaturePattern> sorted;
  for (auto i : perm) sorted.push_back(table.features[i]);
  table.features = std::move(sorted);

  std::map<std::pair<Bits, bool>, std::size_t> counts;
  std::unordered_map<Bits, int, BitsHash> labels_seen;
  for (const auto& ob : detail::unique_observations(traj)) {
    Bits row(perm.size());
    for (std::size_t k = 0; k < perm.size(); ++k)
      if (ob.x.test(perm[k])) row.set(k);
    const bool label = ob.e.test(option);
    labels_seen[row] |= label ? 2 : 1;
    counts[{std::move(row), label}] += ob.count;
  }
  for (const auto& [key, n] : counts) {
    table.rows.push_back(key.first);
    table.labels.push_back(key.second ? 1 : 0);
    table.multiplicity.push_back(n);
  }
  for (const auto& [row, mask] : labels_seen)
    if (mask == 3) ++table.inconsistencies;
  return table;
}

/// Greedy CART with multiplicity-weighted Gini impurity. Each impure node
/// splits on the non-constant feature with the lowest weighted child
/// impurity (lowest index on ties); a node with no non-constant feature
/// becomes a majority leaf, ties to false.
inline DecisionTree fit_decision_tree(const PrecondTable& table) {
  if (table.empty()) throw Error(ErrorCode::EmptyTable, "precondition table for " + table.sig.str() + " has no rows");
  const std::size_t nf = table.features.size();
  const std::size_t nr = table.rows.size();
  std::vector<Bits> cols(nf, Bits(nr));
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t f = 0; f < nf; ++f)
      if (table.rows[r].test(f)) cols[f].set(r);

  DecisionTree tree;
  tree.features = table.features;
  std::vector<std::size_t> all(nr);
  for (std::size_t r = 0; r < nr; ++r) all[r] = r;

  auto grow = [&](auto&& self, const std::vector<std::size_t>& rows, int depth) -> int {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.depth = std::max(tree.depth, depth);
    double w = 0.0, p = 0.0;
    for (auto r : rows) {
      const auto m = static_cast<double>(table.multiplicity[r]);
      w += m;
      if (table.labels[r]) p += m;
    }
    auto make_leaf = [&] {
      tree.nodes[static_cast<std::size_t>(id)].label = 2.0 * p > w;
      ++tree.leaves;
      return id;
    };
    if (p == 0.0 || p == w) return make_leaf();
    int best = -1;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < nf; ++f) {
      double w1 = 0.0, p1 = 0.0;
      for (auto r : rows)
        if (cols[f].test(r)) {
          const auto m = static_cast<double>(table.multiplicity[r]);
          w1 += m;
          if (table.labels[r]) p1 += m;
        }
      if (w1 == 0.0 || w1 == w) continue;
      const double score = detail::gini_mass(w1, p1) + detail::gini_mass(w - w1, p - p1);
      if (best < 0 || score < best_score - 1e-12 * std::max(1.0, best_score)) {
        best_score = score;
        best = static_cast<int>(f);
      }
    }
    if (best < 0) return make_leaf();
    std::vector<std::size_t> lo, hi;
    for (auto r : rows) (cols[static_cast<std::size_t>(best)].test(r) ? hi : lo).push_back(r);
    const int left = self(self, lo, depth + 1);
    const int right = self(self, hi, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best;
    node.left = left;
    node.right = right;
    return id;
  };
  grow(grow, all, 0);
  return tree;
}

/// OR over root-to-true-leaf paths of the branch literals, simplified.
inline Expr tree_to_expr(const DecisionTree& tree) {
  if (tree.nodes.empty()) return Expr::falsity();
  Dnf terms;
  Term path;
  auto walk = [&](auto&& self, int n) -> void {
    const auto& node = tree.nodes[static_cast<std::size_t>(n)];
    if (node.feature < 0) {
      if (node.label) terms.push_back(path);
      return;
    }
    const auto& pat = tree.features[static_cast<std::size_t>(node.feature)];
    path.push_back(Literal{pat, false});
    self(self, node.left);
    path.back().positive = true;
    self(self, node.right);
    path.pop_back();
  };
  walk(walk, 0);
  return from_dnf(simplify_dnf(std::move(terms)));
}

inline Expr infer_precondition(const PrecondTable& table) {
  if (table.empty()) return Expr::falsity();
  return tree_to_expr(fit_decision_tree(table));
}

namespace detail {

struct DeltaStats {
  std::size_t plus = 0;
  std::size_t minus = 0;
};

inline EffectDelta effects_from_stats(const std::vector<FeaturePattern>& patterns, const std::vector<DeltaStats>& stats,
                                      std::vector<std::string>* conflicts) {
  EffectDelta out;
  for (std::size_t k = 0; k < patterns.size(); ++k) {
    const auto& s = stats[k];
    if (s.plus && s.minus) {
      if (conflicts) conflicts->push_back(patterns[k].str());
      continue;
    }
    if (s.plus) out.push_back(EffectEntry{patterns[k], +1});
    if (s.minus) out.push_back(EffectEntry{patterns[k], -1});
  }
  return out;
}

}  // namespace detail

/// Aggregated completion differences over the successful executions of
/// `sig`, per substituted pattern. A change can only be seen where the bit
/// could flip, so every nonzero observation counts; patterns seen changing
/// both ways are dropped and reported.
inline EffectDelta infer_effects(const Trajectory& traj, const TaskInstance& task, const VerbSignature& sig,
                                 std::vector<std::string>* conflicts = nullptr) {
  const auto patterns = completion_features(sig, detail::subtask_signatures(task.space));
  std::vector<detail::DeltaStats> stats(patterns.size());
  std::map<std::size_t, std::vector<std::optional<std::size_t>>> ground;
  for (const auto& r : traj.records) {
    const GroundItem& item = task.space.options()[r.option];
    if (item.sig != sig || !r.e.test(r.option)) continue;
    auto it = ground.find(r.option);
    if (it == ground.end()) {
      std::vector<std::optional<std::size_t>> g(patterns.size());
      for (std::size_t k = 0; k < patterns.size(); ++k)
        g[k] = task.space.find_subtask(ground_subtask(patterns[k], item.binding));
      it = ground.emplace(r.option, std::move(g)).first;
    }
    for (std::size_t k = 0; k < patterns.size(); ++k) {
      const auto& g = it->second[k];
      if (!g) continue;
      const bool before = r.x.test(*g), after = r.next_x.test(*g);
      if (!before && after) ++stats[k].plus;
      if (before && !after) ++stats[k].minus;
    }
  }
  return detail::effects_from_stats(patterns, stats, conflicts);
}

/// Same aggregation for one ground option over raw subtask indices.
inline EffectDelta infer_ground_effects(const Trajectory& traj, const TaskInstance& task, std::size_t option,
                                        std::vector<std::string>* conflicts = nullptr) {
  std::vector<FeaturePattern> patterns;
  for (const auto& s : task.space.subtasks()) {
    std::vector<Arg> args;
    for (const auto& e : s.binding) args.push_back(Arg::constant(e));
    patterns.push_back(FeaturePattern::completion(s.sig, std::move(args)));
  }
  std::vector<detail::DeltaStats> stats(patterns.size());
  for (const auto& r : traj.records) {
    if (r.option != option || !r.e.test(option)) continue;
    for (std::size_t s = 0; s < patterns.size(); ++s) {
      const bool before = r.x.test(s), after = r.next_x.test(s);
      if (!before && after) ++stats[s].plus;
      if (before && !after) ++stats[s].minus;
    }
  }
  return detail::effects_from_stats(patterns, stats, conflicts);
}

/// Empirical mean reward over the steps on which each subtask flipped to
/// complete, with the number of such steps.
inline std::vector<RewardEstimate> infer_rewards(const Trajectory& traj, const TaskInstance& task) {
  const std::size_t n = task.num_subtasks();
  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (const auto& r : traj.records)
    for (std::size_t s = 0; s < n; ++s)
      if (!r.x.test(s) && r.next_x.test(s)) {
        sum[s] += r.reward;
        ++count[s];
      }
  std::vector<RewardEstimate> out(n);
  for (std::size_t s = 0; s < n; ++s)
    if (count[s]) out[s] = RewardEstimate{sum[s] / static_cast<double>(count[s]), count[s]};
  return out;
}

/// Candidate set restricted to the attributes some precondition mentions.
inline AttributeSet prune_attributes(const AttributeSet& set, const ParamGraph& g) {
  std::set<std::string> used;
  auto collect = [&](const OptionModel& m) {
    for (const auto& p : m.precondition.patterns())
      if (p.is_attribute()) used.insert(p.attribute);
  };
  for (const auto& [sig, m] : g.options) collect(m);
  for (const auto& [item, m] : g.ground_options) collect(m);
  std::vector<AttributeFn> kept;
  for (const auto& c : set.candidates())
    if (used.count(c.id)) kept.push_back(c);
  return AttributeSet(set.seen(), std::move(kept), set.reference());
}

/// Maximum-likelihood graph from one trajectory. PSGI shares one model per
/// option signature over substituted features and candidate attributes;
/// MSGI+ fits every ground option on its own.
inline ParamGraph infer_psg(const Trajectory& traj, const TaskInstance& task, const AttributeSet* attrs,
                            InferenceMode mode, const EmbeddingTable* emb = nullptr,
                            InferenceDiagnostics* diag = nullptr) {
  ParamGraph g;
  g.provenance = mode == InferenceMode::PSGI ? Provenance::InferredPSGI : Provenance::InferredMSGI;
  for (const auto& sig : task.space.option_signatures()) g.options[sig] = OptionModel{};
  if (mode == InferenceMode::PSGI) {
    for (const auto& sig : task.space.option_signatures()) {
      const PrecondTable table = build_precondition_table(traj, task, sig, attrs, emb);
      if (diag && table.inconsistencies) diag->inconsistent_rows[sig.str()] = table.inconsistencies;
      std::vector<std::string> conflicts;
      g.options[sig] = OptionModel{infer_precondition(table), infer_effects(traj, task, sig, &conflicts)};
      if (diag && !conflicts.empty()) diag->effect_conflicts[sig.str()] = std::move(conflicts);
    }
    if (attrs) g.attributes = prune_attributes(*attrs, g);
  } else {
    for (std::size_t o = 0; o < task.num_options(); ++o) {
      const GroundItem& item = task.space.options()[o];
      const PrecondTable table = build_ground_option_table(traj, task, o);
      if (diag && table.inconsistencies) diag->inconsistent_rows[item.str()] = table.inconsistencies;
      std::vector<std::string> conflicts;
      g.ground_options[item] = OptionModel{infer_precondition(table), infer_ground_effects(traj, task, o, &conflicts)};
      if (diag && !conflicts.empty()) diag->effect_conflicts[item.str()] = std::move(conflicts);
    }
  }
  const auto rewards = infer_rewards(traj, task);
  for (std::size_t s = 0; s < rewards.size(); ++s)
    if (rewards[s].count) g.rewards[task.space.subtasks()[s]] = rewards[s];
  return g;
}

}  // namespace psgi
