#pragma once

#include <sstream>

#include "psgi/graph.hpp"

namespace psgi {

namespace detail {

inline std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

inline std::string sig_label(const VerbSignature& sig) {
  std::string s = sig.verb + "(";
  for (int j = 1; j <= sig.arity; ++j) s += (j > 1 ? ",p" : "p") + std::to_string(j);
  return s + ")";
}

}  // namespace detail

/// Graphviz rendering: options as boxes, subtask patterns and attributes as
/// ellipses; precondition edges into options, effect edges out of them;
/// dashed edges for negative literals and deletions. A precondition with
/// several DNF terms gets one small AND node per term.
inline std::string export_dot(const ParamGraph& g) {
  struct Model {
    std::string id, label;
    const OptionModel* model;
  };
  std::vector<Model> models;
  for (const auto& [sig, m] : g.options) models.push_back({"opt:" + sig.str(), detail::sig_label(sig), &m});
  for (const auto& [item, m] : g.ground_options) models.push_back({"gopt:" + item.str(), item.str(), &m});

  std::set<std::pair<std::string, std::string>> patterns;  // id, label
  std::vector<std::string> edges;
  std::vector<std::string> and_nodes;
  auto pattern_node = [&](const FeaturePattern& p) {
    const std::string id = (p.is_attribute() ? "attr:" : "sub:") + p.str();
    patterns.emplace(id, p.str());
    return id;
  };
  auto edge = [&](const std::string& from, const std::string& to, bool solid) {
    edges.push_back("  " + detail::dot_quote(from) + " -> " + detail::dot_quote(to) +
                    (solid ? " [style=solid];" : " [style=dashed];"));
  };
  for (const auto& md : models) {
    const Dnf dnf = dnf_terms(md.model->precondition);
    bool trivial = dnf.empty();
    for (const auto& t : dnf) trivial = trivial || t.empty();
    if (!trivial) {
      if (dnf.size() == 1) {
        for (const auto& l : dnf[0]) edge(pattern_node(l.pattern), md.id, l.positive);
      } else {
        for (std::size_t k = 0; k < dnf.size(); ++k) {
          const std::string and_id = "and:" + md.id + "#" + std::to_string(k);
          and_nodes.push_back(and_id);
          for (const auto& l : dnf[k]) edge(pattern_node(l.pattern), and_id, l.positive);
          edge(and_id, md.id, true);
        }
      }
    }
    for (const auto& ef : md.model->effect) edge(md.id, pattern_node(ef.pattern), ef.sign > 0);
  }

  std::ostringstream os;
  os << "digraph psg {\n  rankdir=LR;\n";
  for (const auto& md : models)
    os << "  " << detail::dot_quote(md.id) << " [shape=box,label=" << detail::dot_quote(md.label) << "];\n";
  for (const auto& [id, label] : patterns)
    os << "  " << detail::dot_quote(id) << " [shape=ellipse,label=" << detail::dot_quote(label) << "];\n";
  for (const auto& id : and_nodes) os << "  " << detail::dot_quote(id) << " [shape=circle,label=\"&\",width=0.3];\n";
  for (const auto& e : edges) os << e << "\n";
  os << "}\n";
  return os.str();
}

}  // namespace psgi
