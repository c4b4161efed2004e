#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "psgi/error.hpp"
#include "psgi/expr.hpp"

namespace psgi {

/// Entity id -> embedding vector, all of one dimension.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool contains(const EntityId& e) const { return rows_.count(e) != 0; }

  const std::vector<double>& at(const EntityId& e) const {
    auto it = rows_.find(e);
    if (it == rows_.end()) throw Error(ErrorCode::NoEmbedding, e);
    return it->second;
  }

  void insert(const EntityId& e, std::vector<double> v) {
    if (rows_.empty() && dim_ == 0) dim_ = v.size();
    if (v.size() != dim_)
      throw Error(ErrorCode::DimensionMismatch,
                  e + " has " + std::to_string(v.size()) + " components, expected " + std::to_string(dim_));
    for (double c : v)
      if (!std::isfinite(c)) throw Error(ErrorCode::ParseError, e + " has a non-finite component");
    rows_[e] = std::move(v);
  }

  const std::map<EntityId, std::vector<double>>& rows() const noexcept { return rows_; }

 private:
  std::size_t dim_ = 0;
  std::map<EntityId, std::vector<double>> rows_;
};

inline double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Reads whitespace-separated "token v1 ... vD" lines (GloVe text format),
/// keeping only the requested entities. D is taken from the first line.
inline EmbeddingTable ingest_embeddings(std::istream& in, const std::vector<EntityId>& entities) {
  std::set<EntityId> wanted(entities.begin(), entities.end());
  EmbeddingTable table;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> v;
    std::string field;
    while (ls >> field) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": bad component '" + field + "'");
      }
    }
    if (dim == 0) {
      if (v.empty()) throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": no components");
      dim = v.size();
      table = EmbeddingTable(dim);
    } else if (v.size() != dim) {
      throw Error(ErrorCode::DimensionMismatch, "line " + std::to_string(lineno) + ": " + std::to_string(v.size()) +
                                                    " components, expected " + std::to_string(dim));
    }
    if (wanted.count(token)) table.insert(token, std::move(v));
  }
  std::string missing;
  for (const auto& e : entities)
    if (!table.contains(e)) missing += (missing.empty() ? "" : ",") + e;
  if (!missing.empty()) throw Error(ErrorCode::MissingEntity, missing);
  return table;
}

inline EmbeddingTable ingest_embeddings(const std::string& path, const std::vector<EntityId>& entities) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return ingest_embeddings(in, entities);
}

/// Candidate attribute: indicator of membership in a cluster of seen entities.
struct AttributeFn {
  std::string id;
  std::vector<EntityId> members;  // sorted

  bool contains(const EntityId& e) const { return std::binary_search(members.begin(), members.end(), e); }
};

/// Candidate attributes over a seen-entity set, plus the seen entities'
/// embeddings so membership can be extended to unseen entities by 1-NN.
class AttributeSet {
 public:
  AttributeSet() = default;
  AttributeSet(std::vector<EntityId> seen, std::vector<AttributeFn> candidates, EmbeddingTable reference)
      : seen_(std::move(seen)), candidates_(std::move(candidates)), reference_(std::move(reference)) {
    std::sort(seen_.begin(), seen_.end());
    for (std::size_t i = 0; i < candidates_.size(); ++i) index_[candidates_[i].id] = i;
  }

  const std::vector<EntityId>& seen() const noexcept { return seen_; }
  const std::vector<AttributeFn>& candidates() const noexcept { return candidates_; }
  const EmbeddingTable& reference() const noexcept { return reference_; }
  std::size_t size() const noexcept { return candidates_.size(); }
  bool empty() const noexcept { return candidates_.empty(); }

  bool is_seen(const EntityId& e) const { return std::binary_search(seen_.begin(), seen_.end(), e); }

  const AttributeFn* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &candidates_[it->second];
  }

  /// Euclidean-nearest seen entity; ties go to the lexicographically
  /// smallest id (seen_ is sorted, strict < keeps the first).
  EntityId nearest_seen(const std::vector<double>& query) const {
    EntityId best;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& s : seen_) {
      const double d = euclidean(query, reference_.at(s));
      if (d < best_d) {
        best_d = d;
        best = s;
      }
    }
    return best;
  }

  /// The entity whose membership stands in for `e`: itself when seen,
  /// otherwise its nearest seen neighbour.
  EntityId proxy(const EntityId& e, const EmbeddingTable& emb) const {
    if (is_seen(e)) return e;
    if (!emb.contains(e)) throw Error(ErrorCode::NoEmbedding, e);
    return nearest_seen(emb.at(e));
  }

 private:
  std::vector<EntityId> seen_;
  std::vector<AttributeFn> candidates_;
  EmbeddingTable reference_;
  std::map<std::string, std::size_t> index_;
};

inline bool predict_attribute(const AttributeSet& set, const AttributeFn& attr, const EntityId& entity,
                              const EmbeddingTable& emb) {
  return attr.contains(set.proxy(entity, emb));
}

inline constexpr std::size_t kMaxPowersetEntities = 16;

namespace detail {

inline bool member_list_less(const std::vector<EntityId>& a, const std::vector<EntityId>& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

inline std::vector<EntityId> complement_of(const std::vector<EntityId>& members, const std::vector<EntityId>& all) {
  std::vector<EntityId> out;
  std::set_difference(all.begin(), all.end(), members.begin(), members.end(), std::back_inserter(out));
  return out;
}

// Leaf sets of the internal nodes of an average-linkage dendrogram, root
// excluded. Merge order: smallest distance, then smallest cluster index.
inline std::vector<std::vector<EntityId>> dendrogram_sets(const std::vector<EntityId>& seen,
                                                          const EmbeddingTable& emb) {
  const std::size_t n = seen.size();
  std::vector<std::vector<std::size_t>> clusters(n);
  for (std::size_t i = 0; i < n; ++i) clusters[i] = {i};
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d[i][j] = d[j][i] = euclidean(emb.at(seen[i]), emb.at(seen[j]));
  std::vector<bool> alive(n, true);
  std::vector<std::vector<EntityId>> out;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        if (!alive[j]) continue;
        double s = 0.0;
        for (auto a : clusters[i])
          for (auto b : clusters[j]) s += d[a][b];
        s /= static_cast<double>(clusters[i].size() * clusters[j].size());
        if (s < best) {
          best = s;
          bi = i;
          bj = j;
        }
      }
    }
    std::vector<std::size_t> merged = clusters[bi];
    merged.insert(merged.end(), clusters[bj].begin(), clusters[bj].end());
    alive[bi] = alive[bj] = false;
    clusters.push_back(merged);
    alive.push_back(true);
    if (merged.size() < n) {
      std::vector<EntityId> ids;
      for (auto k : merged) ids.push_back(seen[k]);
      std::sort(ids.begin(), ids.end());
      out.push_back(std::move(ids));
    }
  }
  return out;
}

}  // namespace detail

/// Exhaustive candidate clusters over the seen entities: every nonempty
/// proper subset up to 16 entities, dendrogram clusters beyond. A set and its
/// complement are one candidate; the smaller one is kept (fewer members
/// first, then member list order). Candidates are ordered the same way and
/// named attr_k with k zero-padded.
inline AttributeSet generate_candidate_attributes(std::vector<EntityId> seen, const EmbeddingTable& emb) {
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  if (seen.size() < 2) throw Error(ErrorCode::TooFewEntities, std::to_string(seen.size()) + " seen entities");

  std::vector<std::vector<EntityId>> sets;
  if (seen.size() <= kMaxPowersetEntities) {
    const std::uint64_t n = 1ULL << seen.size();
    for (std::uint64_t m = 1; m + 1 < n; ++m) {
      std::vector<EntityId> s;
      for (std::size_t i = 0; i < seen.size(); ++i)
        if ((m >> i) & 1ULL) s.push_back(seen[i]);
      sets.push_back(std::move(s));
    }
  } else {
    for (auto& s : detail::dendrogram_sets(seen, emb)) {
      sets.push_back(detail::complement_of(s, seen));
      sets.push_back(std::move(s));
    }
  }

  std::set<std::vector<EntityId>> kept;
  for (auto& s : sets) {
    auto c = detail::complement_of(s, seen);
    kept.insert(detail::member_list_less(c, s) ? c : s);
  }
  std::vector<std::vector<EntityId>> ordered(kept.begin(), kept.end());
  std::sort(ordered.begin(), ordered.end(), detail::member_list_less);

  std::vector<AttributeFn> candidates;
  candidates.reserve(ordered.size());
  // Zero-padded so string order of the ids matches candidate order.
  const std::size_t width = std::to_string(ordered.size() - 1).size();
  for (std::size_t k = 0; k < ordered.size(); ++k) {
    std::string num = std::to_string(k);
    num.insert(0, width - num.size(), '0');
    candidates.push_back(AttributeFn{"attr_" + num, std::move(ordered[k])});
  }

  EmbeddingTable reference(emb.dim());
  for (const auto& s : seen)
    if (emb.contains(s)) reference.insert(s, emb.at(s));
  return AttributeSet(std::move(seen), std::move(candidates), std::move(reference));
}

/// Text dump, one "attr_k: {a,b}" line per candidate.
inline std::string dump_candidates(const AttributeSet& set) {
  std::string out;
  for (const auto& c : set.candidates()) {
    out += c.id + ": {";
    for (std::size_t i = 0; i < c.members.size(); ++i) out += (i ? "," : "") + c.members[i];
    out += "}\n";
  }
  return out;
}

/// Ground-truth attribute bits: attribute name -> entity -> value.
using AttributeTruth = std::map<std::string, std::map<EntityId, bool>>;

struct AttributeMatch {
  std::string attribute;
  std::string candidate;  // empty when the constant predictor matched
  bool negated = false;   // with an empty candidate: predicts true
  double seen_agreement = 0.0;
  double accuracy = 0.0;
};

struct AttributeAccuracy {
  std::vector<AttributeMatch> per_attribute;
  double mean = 0.0;
};

/// Matches every ground-truth attribute to the candidate (and polarity) with
/// the highest agreement on the seen entities, then scores its 1-NN
/// prediction on the holdout entities. Attributes constant over the seen
/// entities have no proper-subset candidate; the constant predictor is
/// matched for them.
inline AttributeAccuracy attribute_accuracy(const AttributeSet& set, const AttributeTruth& truth,
                                            const std::vector<EntityId>& holdout, const EmbeddingTable& emb) {
  AttributeAccuracy result;
  std::map<EntityId, EntityId> proxies;
  for (const auto& h : holdout) proxies[h] = set.proxy(h, emb);
  const double n_seen = static_cast<double>(std::max<std::size_t>(set.seen().size(), 1));
  for (const auto& [name, bits] : truth) {
    AttributeMatch m;
    m.attribute = name;
    double best = -1.0;
    for (const auto& cand : set.candidates()) {
      std::size_t agree = 0;
      for (const auto& s : set.seen()) agree += cand.contains(s) == bits.at(s) ? 1 : 0;
      const double frac = static_cast<double>(agree) / n_seen;
      // Complement dedup means either polarity can stand for the attribute.
      for (bool neg : {false, true}) {
        const double a = neg ? 1.0 - frac : frac;
        if (a > best) {
          best = a;
          m.candidate = cand.id;
          m.negated = neg;
        }
      }
    }
    std::size_t positives = 0;
    for (const auto& s : set.seen()) positives += bits.at(s) ? 1 : 0;
    for (bool value : {false, true}) {
      const double a = static_cast<double>(value ? positives : set.seen().size() - positives) / n_seen;
      if (a > best) {
        best = a;
        m.candidate.clear();
        m.negated = value;
      }
    }
    m.seen_agreement = std::max(best, 0.0);
    if (holdout.empty()) {
      m.accuracy = 1.0;
    } else {
      const AttributeFn* fn = m.candidate.empty() ? nullptr : set.find(m.candidate);
      std::size_t correct = 0;
      for (const auto& h : holdout) {
        const bool pred = fn ? fn->contains(proxies.at(h)) != m.negated : m.negated;
        correct += pred == bits.at(h) ? 1 : 0;
      }
      m.accuracy = static_cast<double>(correct) / static_cast<double>(holdout.size());
    }
    result.per_attribute.push_back(m);
  }
  double total = 0.0;
  for (const auto& m : result.per_attribute) total += m.accuracy;
  result.mean = result.per_attribute.empty() ? 0.0 : total / static_cast<double>(result.per_attribute.size());
  return result;
}

}  // namespace psgi
